#ifndef INCLUDE_SRGP_BATCH_REFERENCE_HPP_
#define INCLUDE_SRGP_BATCH_REFERENCE_HPP_

#include <functional>
#include <string>
#include <utility>

#include "srgp/recursive_inference.hpp"

namespace srgp {

// Refuses dense N x N work above this size unless told otherwise.
constexpr Index kDefaultDenseLimit = 5000;

namespace details {

inline void require_dense_size(Index n, Index limit) {
  if (n > limit) {
    throw ContractViolation("dense full GP refused for N=" + std::to_string(n) +
                            " (limit " + std::to_string(limit) + ")");
  }
}

} // namespace details

// Exact GP posterior predictive at fixed hyper-parameters.
inline PredictiveDistribution full_gp_predict(const MatrixXd &x,
                                              const VectorXd &y,
                                              const MatrixXd &x_star,
                                              const Hyperparameters &h,
                                              bool with_noise = false,
                                              Index limit = kDefaultDenseLimit) {
  SRGP_REQUIRE(x.rows() >= 1 && x.rows() == y.size(),
               "full_gp_predict needs N >= 1 matching inputs/targets");
  details::require_dense_size(x.rows(), limit);
  MatrixXd kxx = kernel_matrix(x, x, h);
  kxx.diagonal().array() += h.noise_variance();
  const Cholesky chol = robust_cholesky(kxx, "K_XX + sigma_n^2 I");
  const MatrixXd k_sx = kernel_matrix(x_star, x, h);
  PredictiveDistribution p;
  p.mean = k_sx * chol.solve(y);
  const MatrixXd v = chol.solve_lower(k_sx.transpose());
  p.cov = kernel_matrix(x_star, x_star, h) - v.transpose() * v;
  symmetrize(p.cov);
  if (with_noise) {
    p.cov.diagonal().array() += h.noise_variance();
  }
  p.includes_observation_noise = with_noise;
  return p;
}

// log N(y | 0, K_XX + sigma_n^2 I).
inline double full_gp_lml(const MatrixXd &x, const VectorXd &y,
                          const Hyperparameters &h,
                          Index limit = kDefaultDenseLimit) {
  SRGP_REQUIRE(x.rows() >= 1 && x.rows() == y.size(),
               "full_gp_lml needs N >= 1 matching inputs/targets");
  details::require_dense_size(x.rows(), limit);
  MatrixXd kxx = kernel_matrix(x, x, h);
  kxx.diagonal().array() += h.noise_variance();
  const Cholesky chol = robust_cholesky(kxx, "K_XX + sigma_n^2 I");
  const VectorXd white = chol.solve_lower(y);
  const double n = static_cast<double>(y.size());
  return -0.5 * (n * details::log_2pi() + chol.log_det() + white.squaredNorm());
}

/*
 * Posterior over the weights from all data at once:
 *   Sigma_K = (Sigma_0^-1 + H^T V^-1 H)^-1,  mu_K = Sigma_K H^T V^-1 y.
 */
inline std::pair<VectorXd, MatrixXd>
batch_sparse_posterior(const MatrixXd &x, const VectorXd &y,
                       const Hyperparameters &h, const ModelSpec &spec,
                       Parametrization parametrization) {
  const InducingPrior prior = inducing_prior(h);
  const BatchGeometry g = batch_geometry(x, h, spec, prior, parametrization);
  const MatrixXd prior_precision =
      parametrization == Parametrization::kTransformed ? prior.jittered()
                                                       : prior.chol.inverse();
  const MatrixXd wh = g.v.cwiseInverse().asDiagonal() * g.basis;
  MatrixXd precision = prior_precision + g.basis.transpose() * wh;
  symmetrize(precision);
  const Cholesky chol = robust_cholesky(precision, "batch posterior precision");
  return {chol.solve(wh.transpose() * y), chol.inverse()};
}

struct BatchBoundReport {
  double value = 0.0;
  // log N(y | 0, Q_XX + Vbar + sigma_n^2 I)
  double gaussian_term = 0.0;
  // 1/2 sum_k a_k; value = gaussian_term - regularizer_term.
  double regularizer_term = 0.0;
  // Central finite differences; empty unless requested.
  VectorXd gradient;
};

/*
 * Bound value via the M x M route:  with K_RR = L L^T, A = L^-1 K_RX V^-1/2
 * and B = I + A A^T,
 *   log|Q + V| = log|V| + log|B|,
 *   y^T (Q + V)^-1 y = y^T V^-1 y - |L_B^-1 A V^-1/2 y|^2.
 */
inline BatchBoundReport batch_bound_value(const MatrixXd &x, const VectorXd &y,
                                          const Hyperparameters &h,
                                          const ModelSpec &spec) {
  SRGP_REQUIRE(x.rows() == y.size() && y.size() >= 1,
               "batch_bound needs N >= 1 matching inputs/targets");
  const InducingPrior prior = inducing_prior(h);
  const MatrixXd k_xr = kernel_matrix(x, h.inducing_inputs, h);
  const MatrixXd l_inv_krx = prior.chol.solve_lower(k_xr.transpose());
  const VectorXd d =
      (kernel_diag(x, h).array() - l_inv_krx.colwise().squaredNorm().transpose().array())
          .max(0.0);
  const VectorXd v = noise_correction(d, spec, h).array() + h.noise_variance();
  const VectorXd inv_sqrt_v = v.cwiseSqrt().cwiseInverse();
  const MatrixXd a = l_inv_krx * inv_sqrt_v.asDiagonal();
  MatrixXd b = a * a.transpose();
  b.diagonal().array() += 1.0;
  const Cholesky b_chol = robust_cholesky(b, "I + A A^T");
  const VectorXd y_white = y.cwiseProduct(inv_sqrt_v);
  const VectorXd c = b_chol.solve_lower(a * y_white);
  const double n = static_cast<double>(y.size());

  BatchBoundReport r;
  r.gaussian_term =
      -0.5 * (n * details::log_2pi() + v.array().log().sum() + b_chol.log_det() +
              y_white.squaredNorm() - c.squaredNorm());
  r.regularizer_term = 0.5 * regularizer(d, spec, h);
  r.value = r.gaussian_term - r.regularizer_term;
  return r;
}

/*
 * Central differences, coordinate step = step * max(1, |theta_i|).  Throws
 * NumericalError naming the coordinate if f is not finite there.
 */
inline VectorXd fd_gradient(const std::function<double(const VectorXd &)> &f,
                            const VectorXd &theta, double step = 1e-5) {
  VectorXd grad(theta.size());
  VectorXd probe = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    const double hstep = step * std::max(1.0, std::abs(theta(i)));
    probe(i) = theta(i) + hstep;
    const double up = f(probe);
    probe(i) = theta(i) - hstep;
    const double down = f(probe);
    probe(i) = theta(i);
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("non-finite function value while differencing "
                           "coordinate " +
                           std::to_string(i));
    }
    grad(i) = (up - down) / (2.0 * hstep);
  }
  return grad;
}

inline BatchBoundReport batch_bound(const MatrixXd &x, const VectorXd &y,
                                    const Hyperparameters &h,
                                    const ModelSpec &spec,
                                    bool with_gradient = false,
                                    double fd_step = 1e-5) {
  BatchBoundReport r = batch_bound_value(x, y, h, spec);
  if (with_gradient) {
    r.gradient = fd_gradient(
        [&](const VectorXd &theta) {
          return batch_bound_value(x, y, h.with_vector(theta), spec).value;
        },
        h.to_vector(), fd_step);
  }
  return r;
}

} // namespace srgp

#endif
