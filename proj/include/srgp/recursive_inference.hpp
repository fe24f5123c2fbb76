#ifndef INCLUDE_SRGP_RECURSIVE_INFERENCE_HPP_
#define INCLUDE_SRGP_RECURSIVE_INFERENCE_HPP_

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "srgp/sparse_model.hpp"

namespace srgp {

struct MiniBatch {
  MatrixXd x;
  VectorXd y;

  Index size() const { return y.size(); }
};

inline MiniBatch make_batch(const MatrixXd &x, const VectorXd &y, Index begin,
                            Index count) {
  return {x.middleRows(begin, count), y.segment(begin, count)};
}

/*
 * Gaussian posterior over the inducing outputs in natural parameters.
 * In the transformed parametrization eta, Lambda describe the transformed
 * weights K_RR^-1 u.
 */
struct PosteriorState {
  VectorXd eta;
  MatrixXd lambda;
  // Cached inverse of lambda.
  MatrixXd sigma;
  double logdet_lambda = 0.0;
  // Cumulative bound over the absorbed mini-batches.
  double psi = 0.0;
  Index k = 0;
  Index num_observations = 0;
  Parametrization parametrization = Parametrization::kTransformed;

  Index size() const { return eta.size(); }
  VectorXd mean() const { return sigma * eta; }
};

/*
 * Innovation quantities of one update.  The B x B innovation covariance S_k
 * is never formed on this path; see innovation_covariance() when it is
 * needed explicitly.
 */
struct KalmanIntermediates {
  // r_k = y_k - H_k mu_{k-1}
  VectorXd residual;
  // S_k^-1 r_k
  VectorXd weighted_residual;
  // G_k r_k = Sigma_k H_k^T V_k^-1 r_k
  VectorXd gain_residual;
  // diag(H_k Sigma_k H_k^T)
  VectorXd posterior_diag;
  double log_det_s = 0.0;
  double mahalanobis = 0.0;
  double regularizer = 0.0;
  double psi_increment = 0.0;
};

struct UpdateResult {
  PosteriorState state;
  KalmanIntermediates innovation;
};

struct PredictiveDistribution {
  VectorXd mean;
  MatrixXd cov;
  bool includes_observation_noise = false;
};

struct MarginalPrediction {
  VectorXd mean;
  VectorXd variance;
  bool includes_observation_noise = false;
};

inline PosteriorState init_state(const InducingPrior &prior,
                                 Parametrization parametrization) {
  const Index m = prior.k_rr.rows();
  PosteriorState s;
  s.parametrization = parametrization;
  s.eta = VectorXd::Zero(m);
  if (parametrization == Parametrization::kTransformed) {
    s.lambda = prior.jittered();
    s.sigma = prior.chol.inverse();
    s.logdet_lambda = prior.chol.log_det();
  } else {
    s.lambda = prior.chol.inverse();
    s.sigma = prior.jittered();
    s.logdet_lambda = -prior.chol.log_det();
  }
  return s;
}

inline PosteriorState init_state(const Hyperparameters &h,
                                 Parametrization parametrization) {
  return init_state(inducing_prior(h), parametrization);
}

namespace details {

inline void require_finite_batch(const MiniBatch &batch, Index batch_index) {
  if (!batch.x.allFinite() || !batch.y.allFinite()) {
    throw DataError("non-finite values in mini-batch " +
                    std::to_string(batch_index));
  }
}

inline double log_2pi() { return std::log(2.0 * std::numbers::pi); }

} // namespace details

/*
 * Absorbs one mini-batch:
 *
 *   eta_k    = eta_{k-1}    + H^T V^-1 y
 *   Lambda_k = Lambda_{k-1} + H^T V^-1 H
 *   psi_k    = psi_{k-1} - B/2 log 2pi
 *              - 1/2 (log|S_k| + r^T S_k^-1 r + a_k)
 *
 * with log|S_k| = log|Lambda_k| - log|Lambda_{k-1}| + sum log v and
 * S_k^-1 r = V^-1 (r - H Sigma_k H^T V^-1 r).
 */
inline UpdateResult update(const PosteriorState &prev, const MiniBatch &batch,
                           const BatchGeometry &geom, const ModelSpec &spec,
                           const Hyperparameters &h, Index batch_index = -1) {
  SRGP_REQUIRE(batch.size() > 0, "empty mini-batch");
  SRGP_REQUIRE(geom.size() == batch.size() && geom.basis.cols() == prev.size(),
               "mini-batch geometry does not match batch/state");
  SRGP_REQUIRE(geom.transformed == (prev.parametrization ==
                                    Parametrization::kTransformed),
               "geometry parametrization does not match the state");
  details::require_finite_batch(batch, batch_index);

  const MatrixXd &hk = geom.basis;
  const VectorXd w = geom.v.cwiseInverse();
  const MatrixXd wh = w.asDiagonal() * hk;

  UpdateResult out;
  PosteriorState &s = out.state;
  KalmanIntermediates &km = out.innovation;

  km.residual = batch.y - hk * prev.mean();

  s.parametrization = prev.parametrization;
  s.eta = prev.eta + wh.transpose() * batch.y;
  s.lambda = prev.lambda + hk.transpose() * wh;
  symmetrize(s.lambda);
  Cholesky chol;
  try {
    chol = robust_cholesky(s.lambda, "Lambda");
  } catch (const IllConditionedError &e) {
    throw NumericalError(std::string(e.what()) + " at mini-batch " +
                         std::to_string(batch_index));
  }
  s.sigma = chol.inverse();
  s.logdet_lambda = chol.log_det();

  km.gain_residual = s.sigma * (wh.transpose() * km.residual);
  km.weighted_residual =
      w.cwiseProduct(km.residual - hk * km.gain_residual);
  km.posterior_diag = (hk * s.sigma).cwiseProduct(hk).rowwise().sum();
  km.log_det_s = s.logdet_lambda - prev.logdet_lambda +
                 geom.v.array().log().sum();
  km.mahalanobis = km.residual.dot(km.weighted_residual);
  km.regularizer = regularizer(geom.d, spec, h);

  const double b = static_cast<double>(batch.size());
  km.psi_increment = -0.5 * b * details::log_2pi() -
                     0.5 * (km.log_det_s + km.mahalanobis + km.regularizer);
  if (!std::isfinite(km.psi_increment)) {
    throw NumericalError("non-finite bound increment at mini-batch " +
                         std::to_string(batch_index));
  }
  s.psi = prev.psi + km.psi_increment;
  s.k = prev.k + 1;
  s.num_observations = prev.num_observations + batch.size();
  return out;
}

inline UpdateResult update(const PosteriorState &prev, const MiniBatch &batch,
                           const Hyperparameters &h, const ModelSpec &spec,
                           const InducingPrior &prior, Index batch_index = -1) {
  const BatchGeometry geom =
      batch_geometry(batch.x, h, spec, prior, prev.parametrization);
  return update(prev, batch, geom, spec, h, batch_index);
}

// S_k = H_k Sigma_{k-1} H_k^T + V_k.
inline MatrixXd innovation_covariance(const PosteriorState &prev,
                                      const BatchGeometry &geom) {
  MatrixXd s = geom.basis * prev.sigma * geom.basis.transpose();
  s.diagonal() += geom.v;
  symmetrize(s);
  return s;
}

/*
 * Covariance-form Kalman update on (mu, Sigma), kept as an independent
 * cross-check of the natural-parameter recursion.
 */
struct CovarianceFormResult {
  VectorXd mu;
  MatrixXd sigma;
  VectorXd residual;
  MatrixXd innovation_cov;
  MatrixXd gain;
  double psi_increment = 0.0;
};

inline CovarianceFormResult
update_covariance_form(const VectorXd &mu, const MatrixXd &sigma,
                       const MiniBatch &batch, const BatchGeometry &geom,
                       const ModelSpec &spec, const Hyperparameters &h) {
  const MatrixXd &hk = geom.basis;
  CovarianceFormResult out;
  out.residual = batch.y - hk * mu;
  out.innovation_cov = hk * sigma * hk.transpose();
  out.innovation_cov.diagonal() += geom.v;
  symmetrize(out.innovation_cov);
  const Cholesky s_chol = robust_cholesky(out.innovation_cov, "S_k");
  out.gain = s_chol.solve(hk * sigma).transpose();
  out.mu = mu + out.gain * out.residual;
  out.sigma = sigma - out.gain * out.innovation_cov * out.gain.transpose();
  symmetrize(out.sigma);
  const double b = static_cast<double>(batch.size());
  out.psi_increment =
      -0.5 * b * details::log_2pi() -
      0.5 * (s_chol.log_det() + out.residual.dot(s_chol.solve(out.residual)) +
             regularizer(geom.d, spec, h));
  return out;
}

inline MatrixXd test_basis(const MatrixXd &x_star, const Hyperparameters &h,
                           const InducingPrior &prior,
                           Parametrization parametrization) {
  return basis(x_star, h, prior,
               parametrization == Parametrization::kTransformed);
}

/*
 * p(f_* | y_1:k) = N(H_* mu_k, H_* Sigma_k H_*^T + V_*), with H_* matching the
 * state's parametrization.
 */
inline PredictiveDistribution predict(const PosteriorState &state,
                                      const MatrixXd &x_star,
                                      const Hyperparameters &h,
                                      const ModelSpec &spec,
                                      const InducingPrior &prior,
                                      bool with_noise) {
  const MatrixXd hs = test_basis(x_star, h, prior, state.parametrization);
  PredictiveDistribution p;
  p.mean = hs * state.mean();
  p.cov = hs * state.sigma * hs.transpose() +
          prediction_correction(x_star, spec, h, prior);
  symmetrize(p.cov);
  if (with_noise) {
    p.cov.diagonal().array() += h.noise_variance();
  }
  p.includes_observation_noise = with_noise;
  return p;
}

inline PredictiveDistribution predict(const PosteriorState &state,
                                      const MatrixXd &x_star,
                                      const Hyperparameters &h,
                                      const ModelSpec &spec, bool with_noise) {
  return predict(state, x_star, h, spec, inducing_prior(h), with_noise);
}

// Pointwise predictive mean and variance without forming the A x A covariance.
inline MarginalPrediction predict_marginal(const PosteriorState &state,
                                           const MatrixXd &x_star,
                                           const Hyperparameters &h,
                                           const ModelSpec &spec,
                                           const InducingPrior &prior,
                                           bool with_noise) {
  const MatrixXd k_sr = kernel_matrix(x_star, h.inducing_inputs, h);
  const MatrixXd standard = prior.chol.solve(k_sr.transpose()).transpose();
  const MatrixXd &hs =
      state.parametrization == Parametrization::kTransformed ? k_sr : standard;
  MarginalPrediction p;
  p.mean = hs * state.mean();
  p.variance = (hs * state.sigma).cwiseProduct(hs).rowwise().sum();
  if (spec.variant != Variant::kSoR) {
    p.variance.array() += kernel_diag(x_star, h).array() -
                          k_sr.cwiseProduct(standard).rowwise().sum().array();
  }
  p.variance = p.variance.cwiseMax(0.0);
  if (with_noise) {
    p.variance.array() += h.noise_variance();
  }
  p.includes_observation_noise = with_noise;
  return p;
}

inline MarginalPrediction predict_marginal(const PosteriorState &state,
                                           const MatrixXd &x_star,
                                           const Hyperparameters &h,
                                           const ModelSpec &spec,
                                           bool with_noise) {
  return predict_marginal(state, x_star, h, spec, inducing_prior(h), with_noise);
}

inline double cumulative_bound(const PosteriorState &state) { return state.psi; }

// Posterior moments of u itself (undoing the transformation if needed).
inline std::pair<VectorXd, MatrixXd>
standard_moments(const PosteriorState &state, const InducingPrior &prior) {
  if (state.parametrization == Parametrization::kStandard) {
    return {state.mean(), state.sigma};
  }
  const MatrixXd k = prior.jittered();
  MatrixXd sigma = k * state.sigma * k;
  symmetrize(sigma);
  return {k * state.mean(), sigma};
}

/*
 * One pass over (x, y) in consecutive mini-batches of `batch_size` at fixed
 * hyper-parameters, starting from the prior.
 */
inline PosteriorState online_pass(const MatrixXd &x, const VectorXd &y,
                                  const Hyperparameters &h,
                                  const ModelSpec &spec,
                                  Parametrization parametrization,
                                  Index batch_size) {
  SRGP_REQUIRE(batch_size >= 1, "batch size must be >= 1");
  SRGP_REQUIRE(x.rows() == y.size(), "inputs and targets differ in length");
  const InducingPrior prior = inducing_prior(h);
  PosteriorState state = init_state(prior, parametrization);
  Index k = 0;
  for (Index begin = 0; begin < y.size(); begin += batch_size, ++k) {
    const Index count = std::min(batch_size, y.size() - begin);
    state = update(state, make_batch(x, y, begin, count), h, spec, prior, k)
                .state;
  }
  return state;
}

} // namespace srgp

#endif
