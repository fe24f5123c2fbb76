#ifndef INCLUDE_SRGP_OPTIMIZER_HPP_
#define INCLUDE_SRGP_OPTIMIZER_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "srgp/gradient_propagation.hpp"

namespace srgp {

struct AdamState {
  VectorXd first_moment;
  VectorXd second_moment;
  Index step_count = 0;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState fresh(Index num_params, double learning_rate) {
    AdamState s;
    s.first_moment = VectorXd::Zero(num_params);
    s.second_moment = VectorXd::Zero(num_params);
    s.learning_rate = learning_rate;
    return s;
  }
};

/*
 * One bias-corrected ADAM step that *ascends* `grad`, since the bound is
 * maximized.
 */
inline std::pair<VectorXd, AdamState>
adam_step(const VectorXd &theta, const VectorXd &grad, AdamState st) {
  SRGP_REQUIRE(theta.size() == grad.size() &&
                   st.first_moment.size() == theta.size() &&
                   st.second_moment.size() == theta.size(),
               "adam_step: size mismatch");
  if (!grad.allFinite()) {
    throw NumericalError("adam_step: non-finite gradient");
  }
  st.step_count += 1;
  st.first_moment = st.beta1 * st.first_moment + (1.0 - st.beta1) * grad;
  st.second_moment =
      st.beta2 * st.second_moment + (1.0 - st.beta2) * grad.cwiseAbs2();
  const double t = static_cast<double>(st.step_count);
  const double c1 = 1.0 - std::pow(st.beta1, t);
  const double c2 = 1.0 - std::pow(st.beta2, t);
  const VectorXd step =
      ((st.first_moment / c1).array() /
       ((st.second_moment / c2).array().sqrt() + st.epsilon))
          .matrix();
  VectorXd next = theta + st.learning_rate * step;
  if (!next.allFinite()) {
    throw NumericalError("adam_step: parameters became non-finite at step " +
                         std::to_string(st.step_count));
  }
  return {std::move(next), std::move(st)};
}

struct TrainConfig {
  Index epochs = 10;
  Index batch_size = 100;
  double learning_rate = 1e-3;
  // Reshuffle the rows at the start of every epoch.
  bool shuffle = false;
  std::uint64_t seed = 0;
  // Stop once |psi_e - psi_{e-1}| <= tol |psi_e|; 0 disables.
  double psi_tolerance = 0.0;
  // Keep posterior and derivatives across epochs instead of restarting at
  // the prior.
  bool carry_posterior = false;
  HistoryMode history = HistoryMode::kPropagate;
  GradientOptions gradient;

  void validate() const {
    SRGP_REQUIRE(epochs >= 0, "epochs must be >= 0");
    SRGP_REQUIRE(batch_size >= 1, "batch size must be >= 1");
    SRGP_REQUIRE(learning_rate >= 0.0, "learning rate must be >= 0");
  }
};

struct TraceRecord {
  Index epoch = 0;
  Index batch = 0;
  double psi_k = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
  VectorXd theta;
};

// Everything needed to continue training exactly where it stopped.
struct FitState {
  Hyperparameters theta;
  AdamState adam;
  std::mt19937_64 rng;
  Index epochs_completed = 0;
  Index gradient_steps = 0;
  std::optional<PosteriorState> posterior;
  std::optional<GradientState> gradient;

  static FitState start(const Hyperparameters &theta0,
                        const TrainConfig &cfg) {
    FitState s;
    s.theta = theta0;
    s.adam = AdamState::fresh(theta0.size(), cfg.learning_rate);
    s.rng.seed(cfg.seed);
    return s;
  }
};

struct FitResult {
  Hyperparameters theta;
  // Clean posterior from one gradient-free pass at the final theta (the prior
  // when no epoch ran).
  PosteriorState posterior;
  std::vector<TraceRecord> trace;
  // psi^(K) accumulated during each epoch.
  std::vector<double> epoch_psi;
  Index gradient_steps = 0;
  bool converged = false;
};

using TraceSink = std::function<void(const TraceRecord &)>;

/*
 * Stochastic recursive gradient propagation.  Each epoch restarts the
 * posterior and its derivatives at the prior (unless carry_posterior), then
 * for every mini-batch: absorb it, propagate the derivatives, and take one
 * ADAM step along d psi_k / d theta.  Runs cfg.epochs epochs on top of
 * `state`, which is updated in place.
 */
inline FitResult srgp_fit(const MatrixXd &x, const VectorXd &y,
                          const ModelSpec &spec, const TrainConfig &cfg,
                          FitState &state, const TraceSink &sink = {}) {
  cfg.validate();
  spec.validate();
  const Index n = y.size();
  SRGP_REQUIRE(n >= 1 && x.rows() == n, "srgp_fit needs matching, nonempty data");
  SRGP_REQUIRE(cfg.batch_size <= n, "batch size ", cfg.batch_size,
               " exceeds the number of samples ", n);
  SRGP_REQUIRE(x.cols() == state.theta.input_dim(), "data has ", x.cols(),
               " input columns, model expects ", state.theta.input_dim());

  using Clock = std::chrono::steady_clock;
  FitResult result;
  std::vector<Index> order(static_cast<std::size_t>(n));
  MatrixXd xs = x;
  VectorXd ys = y;

  for (Index e = 0; e < cfg.epochs; ++e) {
    const Index epoch = state.epochs_completed;
    if (cfg.shuffle) {
      // Fresh permutation of the original order, so that a resumed run sees
      // the same sequence as an uninterrupted one.
      std::iota(order.begin(), order.end(), Index{0});
      std::shuffle(order.begin(), order.end(), state.rng);
      for (Index i = 0; i < n; ++i) {
        xs.row(i) = x.row(order[static_cast<std::size_t>(i)]);
        ys(i) = y(order[static_cast<std::size_t>(i)]);
      }
    }
    if (!cfg.carry_posterior || !state.posterior || !state.gradient) {
      const InducingPrior prior = inducing_prior(state.theta);
      state.posterior = init_state(prior, Parametrization::kTransformed);
      state.gradient = init_gradient_state(state.theta, prior, cfg.gradient);
    }
    PosteriorState &post = *state.posterior;
    GradientState &grad = *state.gradient;
    const double psi_start = post.psi;

    Index k = 0;
    for (Index begin = 0; begin < n; begin += cfg.batch_size, ++k) {
      const auto t0 = Clock::now();
      const MiniBatch batch =
          make_batch(xs, ys, begin, std::min(cfg.batch_size, n - begin));
      const Hyperparameters &h = state.theta;
      const InducingPrior prior = inducing_prior(h);
      const BatchGeometry geom = batch_geometry(batch.x, h, spec, prior,
                                                Parametrization::kTransformed);
      UpdateResult up = update(post, batch, geom, spec, h, k);
      const AdjointIntermediates adj =
          compute_adjoints(post, up.state, up.innovation, geom, h, spec);
      propagate_in_place(grad, adj, geom, h, spec, batch, prior, cfg.gradient,
                         cfg.history, k);
      post = std::move(up.state);

      auto [theta_next, adam_next] =
          adam_step(h.to_vector(), grad.last_increment, state.adam);
      state.adam = std::move(adam_next);
      state.theta = state.theta.with_vector(theta_next);
      state.gradient_steps += 1;
      result.gradient_steps += 1;

      TraceRecord rec;
      rec.epoch = epoch;
      rec.batch = k;
      rec.psi_k = up.innovation.psi_increment;
      rec.grad_norm = grad.last_increment.norm();
      rec.wall_ms =
          std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
      rec.theta = std::move(theta_next);
      if (sink) {
        sink(rec);
      }
      result.trace.push_back(std::move(rec));
    }
    state.epochs_completed += 1;
    const double epoch_psi = post.psi - (cfg.carry_posterior ? psi_start : 0.0);
    if (!std::isfinite(epoch_psi)) {
      throw NumericalError("non-finite bound in epoch " + std::to_string(epoch));
    }
    result.epoch_psi.push_back(epoch_psi);
    const std::size_t ne = result.epoch_psi.size();
    if (cfg.psi_tolerance > 0.0 && ne >= 2 &&
        std::abs(result.epoch_psi[ne - 1] - result.epoch_psi[ne - 2]) <=
            cfg.psi_tolerance * std::abs(result.epoch_psi[ne - 1])) {
      result.converged = true;
      break;
    }
  }

  result.theta = state.theta;
  if (state.epochs_completed == 0) {
    result.posterior = init_state(state.theta, Parametrization::kTransformed);
  } else {
    result.posterior = online_pass(x, y, state.theta, spec,
                                   Parametrization::kTransformed,
                                   cfg.batch_size);
  }
  return result;
}

inline FitResult srgp_fit(const MatrixXd &x, const VectorXd &y,
                          const Hyperparameters &theta0, const ModelSpec &spec,
                          const TrainConfig &cfg, const TraceSink &sink = {}) {
  FitState state = FitState::start(theta0, cfg);
  return srgp_fit(x, y, spec, cfg, state, sink);
}

/*
 * Full-batch ADAM on the bound, with the exact gradient obtained from one
 * fixed-theta recursive pass per iteration.  Reference optimizer for
 * comparing against SRGP.
 */
struct FullBatchResult {
  Hyperparameters theta;
  std::vector<double> bound_trace;
};

inline FullBatchResult full_batch_adam(const MatrixXd &x, const VectorXd &y,
                                       const Hyperparameters &theta0,
                                       const ModelSpec &spec,
                                       double learning_rate, Index iterations,
                                       Index chunk = 1000) {
  Hyperparameters theta = theta0;
  AdamState adam = AdamState::fresh(theta.size(), learning_rate);
  FullBatchResult out;
  out.bound_trace.reserve(static_cast<std::size_t>(iterations));
  for (Index it = 0; it < iterations; ++it) {
    const BoundAndGradient bg = recursive_bound_and_gradient(
        x, y, theta, spec, std::min(chunk, y.size()));
    out.bound_trace.push_back(bg.value);
    auto [next, adam_next] = adam_step(theta.to_vector(), bg.gradient, adam);
    adam = std::move(adam_next);
    theta = theta.with_vector(next);
  }
  out.theta = theta;
  return out;
}

} // namespace srgp

#endif
