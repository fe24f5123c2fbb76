#include <gtest/gtest.h>

#include "test_support.hpp"

namespace srgp {
namespace {

using testing::random_instance;

TEST(Adam, FirstStepMovesByLearningRateAlongSign) {
  VectorXd theta(3), grad(3);
  theta << 0.0, 1.0, -2.0;
  grad << 4.0, -0.001, 0.0;
  const auto [next, st] = adam_step(theta, grad, AdamState::fresh(3, 0.1));
  EXPECT_NEAR(next(0), 0.1, 1e-8);
  EXPECT_NEAR(next(1), 1.0 - 0.1, 1e-4);
  EXPECT_EQ(next(2), -2.0);
  EXPECT_EQ(st.step_count, 1);
  EXPECT_NEAR(st.first_moment(0), 0.4, 1e-15);
  EXPECT_NEAR(st.second_moment(0), 0.016, 1e-15);
}

TEST(Adam, MaximizesConcaveQuadratic) {
  VectorXd theta = VectorXd::Zero(2);
  VectorXd target(2);
  target << 1.5, -0.5;
  AdamState st = AdamState::fresh(2, 0.05);
  for (int i = 0; i < 2000; ++i) {
    auto [next, s] = adam_step(theta, target - theta, st);
    theta = next;
    st = s;
  }
  EXPECT_LT((theta - target).norm(), 1e-3);
}

TEST(Adam, RejectsNonFiniteGradient) {
  VectorXd grad = VectorXd::Zero(2);
  grad(1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(adam_step(VectorXd::Zero(2), grad, AdamState::fresh(2, 0.1)),
               NumericalError);
}

TEST(SrgpFit, ZeroLearningRateRepeatsTheSameEpochBound) {
  const auto inst = random_instance(1, 60, 2, 5);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 20;
  cfg.learning_rate = 0.0;
  const FitResult r = srgp_fit(inst.x, inst.y, inst.h, ModelSpec::vfe(), cfg);
  ASSERT_EQ(r.epoch_psi.size(), 3u);
  EXPECT_EQ(r.epoch_psi[0], r.epoch_psi[1]);
  EXPECT_EQ(r.epoch_psi[1], r.epoch_psi[2]);
  EXPECT_EQ(r.theta.to_vector(), inst.h.to_vector());
  EXPECT_NEAR(r.epoch_psi[0], batch_bound(inst.x, inst.y, inst.h, ModelSpec::vfe()).value,
              1e-9 * std::abs(r.epoch_psi[0]));
}

TEST(SrgpFit, TraceHasOneRecordPerGradientStep) {
  const auto inst = random_instance(2, 50, 1, 4);
  TrainConfig cfg;
  cfg.epochs = 4;
  cfg.batch_size = 15;
  std::vector<TraceRecord> streamed;
  const FitResult r = srgp_fit(inst.x, inst.y, inst.h, ModelSpec::fitc(), cfg,
                               [&](const TraceRecord &t) { streamed.push_back(t); });
  // 50 rows in batches of 15: four mini-batches, the last one short.
  EXPECT_EQ(r.gradient_steps, 16);
  ASSERT_EQ(r.trace.size(), 16u);
  EXPECT_EQ(streamed.size(), 16u);
  EXPECT_EQ(r.trace.back().epoch, 3);
  EXPECT_EQ(r.trace.back().batch, 3);
  for (const auto &t : r.trace) {
    EXPECT_TRUE(std::isfinite(t.psi_k));
    EXPECT_GE(t.grad_norm, 0.0);
    EXPECT_GE(t.wall_ms, 0.0);
  }
}

TEST(SrgpFit, ImprovesTheBound) {
  const auto inst = random_instance(3, 200, 1, 8, 0.2);
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 50;
  cfg.learning_rate = 0.01;
  const ModelSpec spec = ModelSpec::vfe();
  const FitResult r = srgp_fit(inst.x, inst.y, inst.h, spec, cfg);
  const double before = batch_bound(inst.x, inst.y, inst.h, spec).value;
  const double after = batch_bound(inst.x, inst.y, r.theta, spec).value;
  EXPECT_GT(after, before);
  // The returned posterior is a clean pass at the final theta.
  EXPECT_NEAR(r.posterior.psi, after, 1e-8 * std::abs(after));
}

TEST(SrgpFit, ZeroEpochsReturnsPrior) {
  const auto inst = random_instance(4, 30, 1, 4);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 10;
  const FitResult r = srgp_fit(inst.x, inst.y, inst.h, ModelSpec::vfe(), cfg);
  EXPECT_EQ(r.gradient_steps, 0);
  EXPECT_EQ(r.posterior.psi, 0.0);
  EXPECT_EQ(r.posterior.k, 0);
  EXPECT_TRUE(r.posterior.eta.isZero());
  EXPECT_TRUE(r.posterior.lambda.isApprox(inducing_prior(inst.h).k_rr));
}

TEST(SrgpFit, ConvergenceToleranceStopsEarly) {
  const auto inst = random_instance(5, 40, 1, 4);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 20;
  cfg.learning_rate = 0.0;
  cfg.psi_tolerance = 1e-6;
  const FitResult r = srgp_fit(inst.x, inst.y, inst.h, ModelSpec::vfe(), cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.epoch_psi.size(), 2u);
}

TEST(SrgpFit, DeterministicForFixedSeed) {
  const auto inst = random_instance(6, 60, 2, 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 20;
  cfg.shuffle = true;
  cfg.seed = 17;
  cfg.learning_rate = 0.01;
  const FitResult a = srgp_fit(inst.x, inst.y, inst.h, ModelSpec::pep(0.5), cfg);
  const FitResult b = srgp_fit(inst.x, inst.y, inst.h, ModelSpec::pep(0.5), cfg);
  EXPECT_EQ(a.theta.to_vector(), b.theta.to_vector());
  cfg.seed = 18;
  const FitResult c = srgp_fit(inst.x, inst.y, inst.h, ModelSpec::pep(0.5), cfg);
  EXPECT_NE(a.theta.to_vector(), c.theta.to_vector());
}

TEST(SrgpFit, CarryPosteriorKeepsAccumulating) {
  const auto inst = random_instance(7, 40, 1, 4);
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 20;
  cfg.learning_rate = 0.0;
  cfg.carry_posterior = true;
  FitState st = FitState::start(inst.h, cfg);
  srgp_fit(inst.x, inst.y, ModelSpec::vfe(), cfg, st);
  ASSERT_TRUE(st.posterior.has_value());
  EXPECT_EQ(st.posterior->num_observations, 80);
  EXPECT_EQ(st.posterior->k, 4);
}

TEST(SrgpFit, RejectsBadConfiguration) {
  const auto inst = random_instance(8, 20, 1, 3);
  TrainConfig cfg;
  cfg.batch_size = 50;
  EXPECT_THROW(srgp_fit(inst.x, inst.y, inst.h, ModelSpec::vfe(), cfg), ContractViolation);
  cfg.batch_size = 0;
  EXPECT_THROW(srgp_fit(inst.x, inst.y, inst.h, ModelSpec::vfe(), cfg), ContractViolation);
  cfg.batch_size = 5;
  cfg.learning_rate = -1.0;
  EXPECT_THROW(srgp_fit(inst.x, inst.y, inst.h, ModelSpec::vfe(), cfg), ContractViolation);
}

TEST(FullBatchAdam, ClimbsTheBound) {
  const auto inst = random_instance(9, 100, 1, 6, 0.2);
  const FullBatchResult r = full_batch_adam(inst.x, inst.y, inst.h, ModelSpec::vfe(), 0.02, 60);
  ASSERT_EQ(r.bound_trace.size(), 60u);
  EXPECT_GT(r.bound_trace.back(), r.bound_trace.front());
}

// With a single mini-batch the per-batch gradient is the full-batch gradient,
// so SRGP and full-batch ADAM walk the same path.
TEST(FullBatchAdam, MatchesSrgpWithOneBatch) {
  const auto inst = random_instance(10, 80, 2, 5);
  const ModelSpec spec = ModelSpec::pep(0.5);
  TrainConfig cfg;
  cfg.epochs = 25;
  cfg.batch_size = 80;
  cfg.learning_rate = 0.01;
  const FitResult srgp = srgp_fit(inst.x, inst.y, inst.h, spec, cfg);
  const FullBatchResult fb = full_batch_adam(inst.x, inst.y, inst.h, spec, 0.01, 25, 80);
  EXPECT_LT((srgp.theta.to_vector() - fb.theta.to_vector()).cwiseAbs().maxCoeff(), 1e-12);
  for (std::size_t e = 0; e < srgp.epoch_psi.size(); ++e) {
    EXPECT_NEAR(srgp.epoch_psi[e], fb.bound_trace[e], 1e-9 * std::abs(fb.bound_trace[e]));
  }
}

TEST(Metrics, PerfectPredictions) {
  VectorXd y(4);
  y << 1.0, -2.0, 0.5, 3.0;
  EXPECT_EQ(rmse(y, y), 0.0);
  EXPECT_EQ(coverage(y, y, VectorXd::Constant(4, 0.01)), 1.0);
  VectorXd off = y;
  off(0) += 1.0;
  EXPECT_NEAR(rmse(y, off), 0.5, 1e-15);
  EXPECT_EQ(coverage(y, off, VectorXd::Constant(4, 0.01)), 0.75);
}

} // namespace
} // namespace srgp
