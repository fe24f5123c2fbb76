#ifndef INCLUDE_SRGP_SPARSE_MODEL_HPP_
#define INCLUDE_SRGP_SPARSE_MODEL_HPP_

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>

#include "srgp/kernel.hpp"

namespace srgp {

/*
 * The supported sparse approximations all share the weight-space model
 *
 *   y_k = H_k u + gamma_k + eps_k,   u ~ N(0, Sigma_0),
 *   gamma_k ~ N(0, Vbar_k),          eps_k ~ N(0, sigma_n^2 I),
 *
 * and differ only in the observation-noise correction Vbar_k, the
 * prediction correction V_* and the bound regularizer a_k.
 *
 *   variant   Vbar_k          V_*          a_k
 *   SoR       0               0            0
 *   DTC       0               D_**         0
 *   FITC      diag(D_XX)      D_**         0
 *   VFE       0               D_**         tr(D_XX) / sigma_n^2
 *   PEP       a diag(D_XX)    D_**         (1-a)/a sum log(1 + a d_i / sigma_n^2)
 *
 * with D_AB = K_AB - Q_AB and Q_AB = K_AR K_RR^-1 K_RB.
 */
enum class Variant { kSoR, kDTC, kFITC, kVFE, kPEP };

inline std::string variant_name(Variant v) {
  switch (v) {
  case Variant::kSoR:
    return "sor";
  case Variant::kDTC:
    return "dtc";
  case Variant::kFITC:
    return "fitc";
  case Variant::kVFE:
    return "vfe";
  case Variant::kPEP:
    return "pep";
  }
  return "?";
}

inline Variant parse_variant(std::string name) {
  std::transform(name.begin(), name.end(), name.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  for (Variant v : {Variant::kSoR, Variant::kDTC, Variant::kFITC,
                    Variant::kVFE, Variant::kPEP}) {
    if (variant_name(v) == name) {
      return v;
    }
  }
  throw ContractViolation("unknown sparse GP variant '" + name + "'");
}

struct ModelSpec {
  Variant variant = Variant::kVFE;
  // Power EP parameter, used only by PEP.
  double alpha = 1.0;

  static ModelSpec vfe() { return {Variant::kVFE, 1.0}; }
  static ModelSpec fitc() { return {Variant::kFITC, 1.0}; }
  static ModelSpec dtc() { return {Variant::kDTC, 1.0}; }
  static ModelSpec sor() { return {Variant::kSoR, 1.0}; }
  static ModelSpec pep(double alpha) {
    ModelSpec s{Variant::kPEP, alpha};
    s.validate();
    return s;
  }

  void validate() const {
    if (variant == Variant::kPEP) {
      SRGP_REQUIRE(alpha > 0.0 && alpha <= 1.0,
                   "PEP requires 0 < alpha <= 1, got ", alpha);
    }
  }

  // Factor c in Vbar = c diag(D_XX).
  double noise_scale() const {
    switch (variant) {
    case Variant::kPEP:
      return alpha;
    case Variant::kFITC:
      return 1.0;
    default:
      return 0.0;
    }
  }

  std::string name() const {
    return variant == Variant::kPEP
               ? variant_name(variant) + "(alpha=" + std::to_string(alpha) + ")"
               : variant_name(variant);
  }
};

enum class Parametrization { kStandard, kTransformed };

inline std::string parametrization_name(Parametrization p) {
  return p == Parametrization::kStandard ? "standard" : "transformed";
}

// K_RR and its factorization at one setting of the hyper-parameters.
struct InducingPrior {
  MatrixXd k_rr;
  Cholesky chol;

  // K_RR plus whatever jitter the factorization needed.
  MatrixXd jittered() const {
    MatrixXd k = k_rr;
    k.diagonal().array() += chol.jitter();
    return k;
  }
};

inline InducingPrior inducing_prior(const Hyperparameters &h) {
  InducingPrior prior;
  prior.k_rr = kernel_matrix(h.inducing_inputs, h.inducing_inputs, h);
  prior.chol = robust_cholesky(prior.k_rr, "K_RR");
  return prior;
}

/*
 * Everything about one mini-batch that depends on the inputs and the
 * hyper-parameters but not on the posterior.
 */
struct BatchGeometry {
  MatrixXd k_xr;
  // H_k in the parametrization in use (K_XR when transformed).
  MatrixXd basis;
  // K_XR K_RR^-1, needed for derivatives regardless of parametrization.
  MatrixXd standard_basis;
  // diag(K_XX - Q_XX), clamped at zero.
  VectorXd d;
  // Total per-point noise variance, Vbar + sigma_n^2.
  VectorXd v;
  bool transformed = false;

  Index size() const { return d.size(); }
};

inline MatrixXd basis(const MatrixXd &x, const Hyperparameters &h,
                      const InducingPrior &prior, bool transformed) {
  MatrixXd k_xr = kernel_matrix(x, h.inducing_inputs, h);
  if (transformed) {
    return k_xr;
  }
  return prior.chol.solve(k_xr.transpose()).transpose();
}

inline MatrixXd basis(const MatrixXd &x, const Hyperparameters &h,
                      bool transformed) {
  return basis(x, h, inducing_prior(h), transformed);
}

inline VectorXd noise_correction(const VectorXd &d, const ModelSpec &spec,
                                 const Hyperparameters &) {
  return spec.noise_scale() * d;
}

/*
 * a_k for one mini-batch.  The factor 1/2 is applied where a_k enters the
 * bound.
 */
inline double regularizer(const VectorXd &d, const ModelSpec &spec,
                          const Hyperparameters &h) {
  const double noise_var = h.noise_variance();
  switch (spec.variant) {
  case Variant::kPEP: {
    const double a = spec.alpha;
    return (1.0 - a) / a * (a * d.array() / noise_var).log1p().sum();
  }
  case Variant::kVFE:
    return d.sum() / noise_var;
  default:
    return 0.0;
  }
}

inline BatchGeometry batch_geometry(const MatrixXd &x, const Hyperparameters &h,
                                    const ModelSpec &spec,
                                    const InducingPrior &prior,
                                    Parametrization parametrization) {
  SRGP_REQUIRE(x.cols() == h.input_dim(), "batch inputs have ", x.cols(),
               " columns, expected ", h.input_dim());
  BatchGeometry g;
  g.k_xr = kernel_matrix(x, h.inducing_inputs, h);
  g.standard_basis = prior.chol.solve(g.k_xr.transpose()).transpose();
  g.transformed = parametrization == Parametrization::kTransformed;
  g.basis = g.transformed ? g.k_xr : g.standard_basis;
  g.d = (kernel_diag(x, h).array() -
         g.k_xr.cwiseProduct(g.standard_basis).rowwise().sum().array())
            .max(0.0);
  g.v = noise_correction(g.d, spec, h).array() + h.noise_variance();
  return g;
}

/*
 * V_* for test inputs: zero for SoR, the full conditional covariance
 * K_** - Q_** for every other variant.
 */
inline MatrixXd prediction_correction(const MatrixXd &x_star,
                                      const ModelSpec &spec,
                                      const Hyperparameters &h,
                                      const InducingPrior &prior) {
  const Index a = x_star.rows();
  if (spec.variant == Variant::kSoR) {
    return MatrixXd::Zero(a, a);
  }
  const MatrixXd k_sr = kernel_matrix(x_star, h.inducing_inputs, h);
  const MatrixXd l_inv_krs = prior.chol.solve_lower(k_sr.transpose());
  MatrixXd out = kernel_matrix(x_star, x_star, h) -
                 l_inv_krs.transpose() * l_inv_krs;
  symmetrize(out);
  return out;
}

inline MatrixXd prediction_correction(const MatrixXd &x_star,
                                      const ModelSpec &spec,
                                      const Hyperparameters &h) {
  return prediction_correction(x_star, spec, h, inducing_prior(h));
}

} // namespace srgp

#endif
