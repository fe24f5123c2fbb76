#include <gtest/gtest.h>

#include "test_support.hpp"

namespace srgp {
namespace {

using testing::close_rel;
using testing::random_instance;

TEST(FullGp, SinglePointClosedForm) {
  MatrixXd x(1, 1), xs(1, 1);
  x << 0.3;
  xs << 0.8;
  VectorXd y(1);
  y << 1.7;
  const Hyperparameters h = Hyperparameters::from_values(
      1.2, VectorXd::Constant(1, 0.4), 0.5, x);
  const double s02 = 1.44, sn2 = 0.25;
  const double kxs = s02 * std::exp(-0.5 * 0.25 / 0.16);
  const auto p = full_gp_predict(x, y, xs, h);
  EXPECT_NEAR(p.mean(0), kxs / (s02 + sn2) * 1.7, 1e-14);
  EXPECT_NEAR(p.cov(0, 0), s02 - kxs * kxs / (s02 + sn2), 1e-14);
  const auto pn = full_gp_predict(x, y, xs, h, true);
  EXPECT_NEAR(pn.cov(0, 0), p.cov(0, 0) + sn2, 1e-14);
}

TEST(FullGp, ScalarMarginalLikelihood) {
  MatrixXd x = MatrixXd::Zero(1, 1);
  const Hyperparameters h = Hyperparameters::from_values(
      1.0, VectorXd::Ones(1), 1.0, x);
  EXPECT_NEAR(full_gp_lml(x, VectorXd::Zero(1), h),
              -0.5 * std::log(2.0 * std::numbers::pi * 2.0), 1e-15);
}

TEST(FullGp, InterpolatesWithTinyNoise) {
  const MatrixXd x = testing::equispaced_1d(20);
  const VectorXd y = (5.0 * x.col(0)).array().sin().matrix();
  const Hyperparameters h =
      Hyperparameters::from_values(1.0, VectorXd::Constant(1, 0.1), 1e-4, x);
  const auto p = full_gp_predict(x, y, x, h);
  EXPECT_LT((p.mean - y).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(FullGp, PermutationInvariantLml) {
  const auto inst = random_instance(2, 40, 2, 3);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(40);
  perm.setIdentity();
  std::mt19937_64 rng(4);
  std::shuffle(perm.indices().data(), perm.indices().data() + 40, rng);
  const MatrixXd xp = perm * inst.x;
  const VectorXd yp = perm * inst.y;
  EXPECT_NEAR(full_gp_lml(xp, yp, inst.h), full_gp_lml(inst.x, inst.y, inst.h), 1e-10);
}

TEST(FullGp, RefusesAboveDenseLimit) {
  const auto inst = random_instance(3, 30, 1, 2);
  EXPECT_THROW(full_gp_lml(inst.x, inst.y, inst.h, 20), ContractViolation);
  EXPECT_THROW(full_gp_predict(inst.x, inst.y, inst.x, inst.h, false, 20),
               ContractViolation);
}

TEST(BatchBound, VfeLowerBoundsExactLikelihood) {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto inst = random_instance(100 + seed, 50, 2, 6);
    const double lml = full_gp_lml(inst.x, inst.y, inst.h);
    const double bound = batch_bound(inst.x, inst.y, inst.h, ModelSpec::vfe()).value;
    EXPECT_LE(bound, lml + 1e-10) << "seed " << seed;
  }
}

TEST(BatchBound, RecoversFullGpWhenInducingEqualsData) {
  std::mt19937_64 rng(5);
  const MatrixXd x = testing::equispaced_1d(40);
  const VectorXd y = testing::normal_vector(rng, 40);
  const Hyperparameters h =
      Hyperparameters::from_values(1.0, VectorXd::Constant(1, 0.03), 0.2, x);
  const BatchBoundReport r = batch_bound(x, y, h, ModelSpec::vfe());
  EXPECT_NEAR(r.regularizer_term, 0.0, 1e-9);
  EXPECT_NEAR(r.value, full_gp_lml(x, y, h), 1e-8);
}

TEST(BatchBound, BreakdownSums) {
  const auto inst = random_instance(6, 40, 2, 5);
  for (const ModelSpec &spec : {ModelSpec::vfe(), ModelSpec::pep(0.4), ModelSpec::fitc()}) {
    const BatchBoundReport r = batch_bound(inst.x, inst.y, inst.h, spec);
    EXPECT_EQ(r.value, r.gaussian_term - r.regularizer_term);
    EXPECT_EQ(r.gradient.size(), 0);
  }
}

TEST(BatchBound, PepSmallAlphaApproachesVfe) {
  const auto inst = random_instance(7, 60, 2, 5);
  const double vfe = batch_bound(inst.x, inst.y, inst.h, ModelSpec::vfe()).value;
  const double pep = batch_bound(inst.x, inst.y, inst.h, ModelSpec::pep(1e-6)).value;
  EXPECT_LT(std::abs(pep - vfe) / std::abs(vfe), 1e-4);
}

TEST(BatchBound, PepAlphaOneIsFitc) {
  const auto inst = random_instance(8, 60, 2, 5);
  EXPECT_NEAR(batch_bound(inst.x, inst.y, inst.h, ModelSpec::pep(1.0)).value,
              batch_bound(inst.x, inst.y, inst.h, ModelSpec::fitc()).value, 1e-10);
}

TEST(BatchBound, MatchesDenseOracle) {
  const auto inst = random_instance(9, 70, 3, 6);
  for (const ModelSpec &spec : {ModelSpec::vfe(), ModelSpec::pep(0.5), ModelSpec::fitc(),
                                ModelSpec::dtc(), ModelSpec::sor()}) {
    EXPECT_TRUE(close_rel(batch_bound(inst.x, inst.y, inst.h, spec).value,
                          testing::dense_sparse_bound(inst.x, inst.y, inst.h, spec),
                          1e-10, 1e-10))
        << spec.name();
  }
}

TEST(BatchPosterior, ZeroTargetsZeroMean) {
  auto inst = testing::conditioned_1d(10, 30, 6);
  inst.y.setZero();
  const auto [mu, sigma] = batch_sparse_posterior(inst.x, inst.y, inst.h, ModelSpec::vfe(),
                                                  Parametrization::kStandard);
  EXPECT_TRUE(mu.isZero());
  const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(inducing_prior(inst.h).k_rr - sigma);
  EXPECT_GT(eig.eigenvalues().minCoeff(), -1e-10);
}

TEST(FdGradient, ExactOnQuadratics) {
  MatrixXd a(3, 3);
  a << 2, 0.5, 0, 0.5, 1, 0.1, 0, 0.1, 3;
  VectorXd b(3);
  b << 1, -2, 0.5;
  auto f = [&](const VectorXd &t) { return 0.5 * t.dot(a * t) + b.dot(t); };
  VectorXd t(3);
  t << 0.3, -1.2, 2.0;
  const VectorXd g = fd_gradient(f, t);
  EXPECT_LT((g - (a * t + b)).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FdGradient, NamesFailingCoordinate) {
  auto f = [](const VectorXd &t) {
    return t(1) > 1.0 ? std::numeric_limits<double>::quiet_NaN() : t.sum();
  };
  VectorXd t(2);
  t << 0.0, 1.0;
  try {
    fd_gradient(f, t);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError &e) {
    EXPECT_NE(std::string(e.what()).find("coordinate 1"), std::string::npos);
  }
}

TEST(FdGradient, StepSensitivity) {
  const auto inst = random_instance(11, 60, 2, 5);
  const VectorXd g5 = batch_bound(inst.x, inst.y, inst.h, ModelSpec::vfe(), true, 1e-5).gradient;
  const VectorXd g6 = batch_bound(inst.x, inst.y, inst.h, ModelSpec::vfe(), true, 1e-6).gradient;
  for (Index i = 0; i < g5.size(); ++i) {
    EXPECT_TRUE(close_rel(g6(i), g5(i), 1e-3, 1e-6)) << i;
  }
}

} // namespace
} // namespace srgp
