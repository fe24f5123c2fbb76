#ifndef INCLUDE_SRGP_GRADIENT_PROPAGATION_HPP_
#define INCLUDE_SRGP_GRADIENT_PROPAGATION_HPP_

#include <cmath>
#include <string>
#include <vector>

#include "srgp/recursive_inference.hpp"

namespace srgp {

/*
 * Derivatives of the posterior natural parameters and of the cumulative bound
 * with respect to every entry of the flat parameter vector.  Carried in the
 * transformed parametrization, where H_k = K_XR and Lambda_0 = K_RR.
 */
struct GradientState {
  std::vector<VectorXd> d_eta;
  std::vector<MatrixXd> d_lambda;
  // d psi^(k) / d theta
  VectorXd d_psi;
  // d psi_k / d theta for the most recent mini-batch only.
  VectorXd last_increment;
  Index k = 0;

  Index size() const { return d_psi.size(); }
};

struct GradientOptions {
  // Use full K-dot matrices for inducing coordinates instead of exploiting
  // their single row/column structure.
  bool dense_inducing_derivatives = false;
  // Flat indices to differentiate; empty means all.  Others stay zero.
  std::vector<Index> active;
};

enum class HistoryMode {
  kPropagate,
  // Treat the previous posterior as if only the prior depended on theta.
  kIgnoreHistory,
};

/*
 * Partial derivatives of 2 (psi_{k-1} - psi_k) w.r.t. the inputs of one
 * update, with F = log|S_k| + r^T S_k^-1 r and the regularizer a_k:
 *
 *   L_dH      = 2 (V^-1 H Sigma_k - S^-1 r (mu_{k-1} + G r)^T)
 *   L_dv      = d(F + a)/dv = [1 + (1-a)/a] / v - (diag(H Sigma_k H^T)
 *               + (r - H G r)^2) / v^2
 *   L_dd      = c L_dv (+ 1/sigma_n^2 for VFE)
 *   L_dK_XR   = L_dH - 2 diag(L_dd) H_std
 *   L_dK_RR   = H_std^T diag(L_dd) H_std
 *   L_dk_XX   = L_dd
 *   L_dLambda = Sigma_k - Sigma_{k-1} + G r (G r)^T
 *               + G r mu_{k-1}^T + mu_{k-1} (G r)^T
 *   L_deta    = -2 G r
 *   L_dsigman = 2 sigma_n^2 sum(L_dv) + direct d a / d log sigma_n
 *
 * where H = K_XR, H_std = K_XR K_RR^-1 and c the Vbar scale of the variant.
 */
struct AdjointIntermediates {
  MatrixXd l_dh;
  VectorXd l_dv;
  VectorXd l_dd;
  MatrixXd l_dk_xr;
  MatrixXd l_dk_rr;
  VectorXd l_dk_xx;
  MatrixXd l_dlambda;
  VectorXd l_deta;
  double l_dsigman = 0.0;
};

namespace details {

inline std::vector<Index> active_indices(const GradientOptions &opts,
                                         Index num_params) {
  if (!opts.active.empty()) {
    for (Index i : opts.active) {
      SRGP_REQUIRE(i >= 0 && i < num_params, "active parameter index ", i,
                   " out of range");
    }
    return opts.active;
  }
  std::vector<Index> all(static_cast<std::size_t>(num_params));
  for (Index i = 0; i < num_params; ++i) {
    all[static_cast<std::size_t>(i)] = i;
  }
  return all;
}

// Column m of dK_XR/dR[m][d] (the only nonzero column).
inline VectorXd inducing_column(const MatrixXd &k_xr, const MatrixXd &x,
                                const Hyperparameters &h,
                                const ParameterRef &ref) {
  const double inv_l2 = std::exp(-2.0 * h.log_lengthscales(ref.dim));
  const double r = h.inducing_inputs(ref.point, ref.dim);
  return (k_xr.col(ref.point).array() * (x.col(ref.dim).array() - r) * inv_l2)
      .matrix();
}

} // namespace details

inline GradientState init_gradient_state(const Hyperparameters &h,
                                         const InducingPrior &prior,
                                         const GradientOptions &opts = {}) {
  const Index p = h.size();
  const Index m = h.num_inducing();
  GradientState g;
  g.d_eta.assign(static_cast<std::size_t>(p), VectorXd::Zero(m));
  g.d_lambda.assign(static_cast<std::size_t>(p), MatrixXd::Zero(m, m));
  g.d_psi = VectorXd::Zero(p);
  g.last_increment = VectorXd::Zero(p);
  for (Index i : details::active_indices(opts, p)) {
    const ParameterRef ref = parameter_ref(i, h.input_dim(), m);
    g.d_lambda[static_cast<std::size_t>(i)] = kernel_matrix_grad_from(
        prior.k_rr, h.inducing_inputs, h.inducing_inputs, h, ref, {true, true});
  }
  return g;
}

inline AdjointIntermediates compute_adjoints(const PosteriorState &prev,
                                             const PosteriorState &next,
                                             const KalmanIntermediates &km,
                                             const BatchGeometry &geom,
                                             const Hyperparameters &h,
                                             const ModelSpec &spec) {
  SRGP_REQUIRE(geom.transformed &&
                   prev.parametrization == Parametrization::kTransformed &&
                   next.parametrization == Parametrization::kTransformed,
               "gradient propagation runs in the transformed parametrization");
  const Index b = geom.size();
  const Index m = prev.size();
  SRGP_REQUIRE(next.size() == m && geom.basis.rows() == b &&
                   geom.basis.cols() == m && km.residual.size() == b &&
                   km.gain_residual.size() == m,
               "compute_adjoints: shape mismatch between states, geometry and "
               "innovation");

  const MatrixXd &hk = geom.basis;
  const VectorXd w = geom.v.cwiseInverse();
  const VectorXd mu_prev = prev.mean();
  const VectorXd &gr = km.gain_residual;
  const VectorXd &q = km.weighted_residual;
  const double noise_var = h.noise_variance();
  const bool pep = spec.variant == Variant::kPEP;
  const double pep_ratio = pep ? (1.0 - spec.alpha) / spec.alpha : 0.0;

  AdjointIntermediates adj;
  adj.l_dh = 2.0 * (w.asDiagonal() * hk * next.sigma -
                    q * (mu_prev + gr).transpose());

  const VectorXd e = km.residual - hk * gr;
  adj.l_dv = (1.0 + pep_ratio) * w.array() -
             (km.posterior_diag.array() + e.array().square()) *
                 w.array().square();

  adj.l_dd = spec.noise_scale() * adj.l_dv;
  if (spec.variant == Variant::kVFE) {
    adj.l_dd.array() += 1.0 / noise_var;
  }
  adj.l_dk_xr = adj.l_dh - 2.0 * adj.l_dd.asDiagonal() * geom.standard_basis;
  adj.l_dk_rr = geom.standard_basis.transpose() * adj.l_dd.asDiagonal() *
                geom.standard_basis;
  adj.l_dk_xx = adj.l_dd;

  adj.l_dlambda = next.sigma - prev.sigma + gr * gr.transpose() +
                  gr * mu_prev.transpose() + mu_prev * gr.transpose();
  adj.l_deta = -2.0 * gr;

  adj.l_dsigman = 2.0 * noise_var * adj.l_dv.sum();
  if (pep) {
    adj.l_dsigman -= 2.0 * static_cast<double>(b) * pep_ratio;
  } else if (spec.variant == Variant::kVFE) {
    adj.l_dsigman -= 2.0 * geom.d.sum() / noise_var;
  }
  return adj;
}

/*
 * Advances the parameter derivatives over one mini-batch:
 *
 *   dpsi_k   = dpsi_{k-1} - 1/2 (<L_deta, deta_{k-1}> + <L_dLambda, dLambda_{k-1}>
 *              + <L_dK_RR, dK_RR> + <L_dK_XR, dK_XR> + <L_dk_XX, dk_XX>
 *              + [theta = sigma_n] L_dsigman)
 *   deta_k    = deta_{k-1}    + dK_XR^T V^-1 y + H^T dV^-1 y
 *   dLambda_k = dLambda_{k-1} + dK_XR^T V^-1 H + H^T V^-1 dK_XR + H^T dV^-1 H
 *
 * `prior` must be the factorization used to build `geom`.  Updates `g` in
 * place; on error it is left partially advanced.
 */
inline void propagate_in_place(GradientState &g,
                               const AdjointIntermediates &adj,
                               const BatchGeometry &geom,
                               const Hyperparameters &h, const ModelSpec &spec,
                               const MiniBatch &batch,
                               const InducingPrior &prior,
                               const GradientOptions &opts = {},
                               HistoryMode mode = HistoryMode::kPropagate,
                               Index batch_index = -1) {
  const Index p = h.size();
  const Index m = h.num_inducing();
  const Index d_in = h.input_dim();
  SRGP_REQUIRE(g.size() == p, "gradient state has ", g.size(),
               " parameters, expected ", p);
  SRGP_REQUIRE(geom.transformed, "propagate needs transformed geometry");

  const MatrixXd &hk = geom.basis;
  const MatrixXd &hs = geom.standard_basis;
  const MatrixXd &r_in = h.inducing_inputs;
  const VectorXd w = geom.v.cwiseInverse();
  const VectorXd wy = w.cwiseProduct(batch.y);
  const MatrixXd wh = w.asDiagonal() * hk;
  const double c = spec.noise_scale();
  const double noise_var = h.noise_variance();

  g.k += 1;
  g.last_increment.setZero();

  for (Index i : details::active_indices(opts, p)) {
    const auto si = static_cast<std::size_t>(i);
    const ParameterRef ref = parameter_ref(i, d_in, m);
    const bool sparse_r = ref.is_inducing() && !opts.dense_inducing_derivatives;

    // Prior-only derivative, used as the history in the ablation.
    MatrixXd dk_rr;
    VectorXd col_x, col_r;
    MatrixXd dk_xr;
    if (sparse_r) {
      col_x = details::inducing_column(geom.k_xr, batch.x, h, ref);
      col_r = details::inducing_column(prior.k_rr, r_in, h, ref);
    } else {
      dk_xr = kernel_matrix_grad_from(geom.k_xr, batch.x, r_in, h, ref,
                                      {false, true});
      dk_rr = kernel_matrix_grad_from(prior.k_rr, r_in, r_in, h, ref,
                                      {true, true});
    }
    const VectorXd dk_xx = kernel_diag_grad(batch.size(), h, ref);

    VectorXd eta_prev = std::move(g.d_eta[si]);
    MatrixXd lambda_prev = std::move(g.d_lambda[si]);
    if (mode == HistoryMode::kIgnoreHistory) {
      eta_prev = VectorXd::Zero(m);
      if (sparse_r) {
        lambda_prev = MatrixXd::Zero(m, m);
        lambda_prev.row(ref.point) = col_r.transpose();
        lambda_prev.col(ref.point) += col_r;
      } else {
        lambda_prev = dk_rr;
      }
    }

    double contraction = adj.l_deta.dot(eta_prev) +
                         frobenius_inner(adj.l_dlambda, lambda_prev) +
                         adj.l_dk_xx.dot(dk_xx);
    if (sparse_r) {
      contraction += adj.l_dk_xr.col(ref.point).dot(col_x) +
                     (adj.l_dk_rr.row(ref.point).transpose() +
                      adj.l_dk_rr.col(ref.point))
                         .dot(col_r);
    } else {
      contraction += frobenius_inner(adj.l_dk_xr, dk_xr) +
                     frobenius_inner(adj.l_dk_rr, dk_rr);
    }
    if (ref.is_noise()) {
      contraction += adj.l_dsigman;
    }
    const double increment = -0.5 * contraction;

    // dv = c dd + [sigma_n] 2 sigma_n^2
    VectorXd dv = VectorXd::Zero(batch.size());
    if (c != 0.0) {
      if (sparse_r) {
        dv = c * (2.0 * hs.col(ref.point).cwiseProduct(hs * col_r - col_x));
      } else if (!ref.is_noise()) {
        const VectorXd dd = dk_xx - 2.0 * dk_xr.cwiseProduct(hs).rowwise().sum() +
                            (hs * dk_rr).cwiseProduct(hs).rowwise().sum();
        dv = c * dd;
      }
    }
    if (ref.is_noise()) {
      dv.array() += 2.0 * noise_var;
    }
    const VectorXd dw = -w.cwiseAbs2().cwiseProduct(dv);
    const bool has_dw = !dw.isZero(0.0);

    VectorXd eta_next = std::move(eta_prev);
    MatrixXd lambda_next = std::move(lambda_prev);
    if (mode == HistoryMode::kPropagate) {
      if (sparse_r) {
        eta_next(ref.point) += col_x.dot(wy);
        const Eigen::RowVectorXd row = col_x.transpose() * wh;
        lambda_next.row(ref.point) += row;
        lambda_next.col(ref.point) += row.transpose();
      } else if (!ref.is_noise()) {
        eta_next += dk_xr.transpose() * wy;
        const MatrixXd cross = dk_xr.transpose() * wh;
        lambda_next += cross + cross.transpose();
      }
      if (has_dw) {
        eta_next += hk.transpose() * dw.cwiseProduct(batch.y);
        lambda_next += hk.transpose() * dw.asDiagonal() * hk;
      }
      symmetrize(lambda_next);
    }

    if (!std::isfinite(increment) || !eta_next.allFinite() ||
        !lambda_next.allFinite()) {
      throw NumericalError("non-finite gradient for parameter " +
                           std::to_string(i) + " (" + ref.name() +
                           ") at mini-batch " + std::to_string(batch_index));
    }
    g.last_increment(i) = increment;
    g.d_psi(i) += increment;
    g.d_eta[si] = std::move(eta_next);
    g.d_lambda[si] = std::move(lambda_next);
  }
}

inline GradientState propagate(const GradientState &gstate,
                               const AdjointIntermediates &adj,
                               const BatchGeometry &geom,
                               const Hyperparameters &h, const ModelSpec &spec,
                               const MiniBatch &batch,
                               const InducingPrior &prior,
                               const GradientOptions &opts = {},
                               HistoryMode mode = HistoryMode::kPropagate,
                               Index batch_index = -1) {
  GradientState out = gstate;
  propagate_in_place(out, adj, geom, h, spec, batch, prior, opts, mode,
                     batch_index);
  return out;
}

// Gradient step that forgets the theta-dependence of earlier mini-batches.
inline GradientState
ignore_history_ablation(const GradientState &gstate,
                        const AdjointIntermediates &adj,
                        const BatchGeometry &geom, const Hyperparameters &h,
                        const ModelSpec &spec, const MiniBatch &batch,
                        const InducingPrior &prior,
                        const GradientOptions &opts = {},
                        Index batch_index = -1) {
  return propagate(gstate, adj, geom, h, spec, batch, prior, opts,
                   HistoryMode::kIgnoreHistory, batch_index);
}

struct BoundAndGradient {
  double value = 0.0;
  VectorXd gradient;
  PosteriorState state;
};

/*
 * psi^(K) and its cumulative gradient from one pass over consecutive
 * mini-batches at fixed hyper-parameters.
 */
inline BoundAndGradient
recursive_bound_and_gradient(const MatrixXd &x, const VectorXd &y,
                             const Hyperparameters &h, const ModelSpec &spec,
                             Index batch_size, const GradientOptions &opts = {},
                             HistoryMode mode = HistoryMode::kPropagate) {
  SRGP_REQUIRE(batch_size >= 1 && x.rows() == y.size(),
               "recursive_bound_and_gradient: bad batch size or data shape");
  const InducingPrior prior = inducing_prior(h);
  PosteriorState state = init_state(prior, Parametrization::kTransformed);
  GradientState g = init_gradient_state(h, prior, opts);
  Index k = 0;
  for (Index begin = 0; begin < y.size(); begin += batch_size, ++k) {
    const MiniBatch batch =
        make_batch(x, y, begin, std::min(batch_size, y.size() - begin));
    const BatchGeometry geom = batch_geometry(batch.x, h, spec, prior,
                                              Parametrization::kTransformed);
    UpdateResult up = update(state, batch, geom, spec, h, k);
    const AdjointIntermediates adj =
        compute_adjoints(state, up.state, up.innovation, geom, h, spec);
    propagate_in_place(g, adj, geom, h, spec, batch, prior, opts, mode, k);
    state = std::move(up.state);
  }
  return {state.psi, g.d_psi, std::move(state)};
}

} // namespace srgp

#endif
