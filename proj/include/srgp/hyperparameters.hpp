#ifndef INCLUDE_SRGP_HYPERPARAMETERS_HPP_
#define INCLUDE_SRGP_HYPERPARAMETERS_HPP_

#include <cmath>
#include <string>

#include "srgp/linalg.hpp"

namespace srgp {

enum class ParameterKind { kLogSigma0, kLogLengthscale, kLogSigmaN, kInducing };

/*
 * Identifies one entry of the flat parameter vector
 *
 *   [log sigma0, log l_1 .. log l_D, log sigma_n, R(0,0) .. R(M-1,D-1)]
 *
 * `dim` is the input dimension for lengthscales and inducing coordinates,
 * `point` the inducing point row for inducing coordinates.
 */
struct ParameterRef {
  ParameterKind kind = ParameterKind::kLogSigma0;
  Index dim = 0;
  Index point = 0;

  bool is_noise() const { return kind == ParameterKind::kLogSigmaN; }
  bool is_inducing() const { return kind == ParameterKind::kInducing; }

  std::string name() const {
    switch (kind) {
    case ParameterKind::kLogSigma0:
      return "log_sigma0";
    case ParameterKind::kLogLengthscale:
      return "log_lengthscale[" + std::to_string(dim) + "]";
    case ParameterKind::kLogSigmaN:
      return "log_sigma_n";
    case ParameterKind::kInducing:
      return "R[" + std::to_string(point) + "][" + std::to_string(dim) + "]";
    }
    return "?";
  }

  // Coarse grouping used when reporting gradient checks.
  std::string class_name() const {
    switch (kind) {
    case ParameterKind::kLogSigma0:
      return "log_sigma0";
    case ParameterKind::kLogLengthscale:
      return "log_lengthscale";
    case ParameterKind::kLogSigmaN:
      return "log_sigma_n";
    case ParameterKind::kInducing:
      return "inducing_inputs";
    }
    return "?";
  }
};

inline Index num_parameters(Index input_dim, Index num_inducing) {
  return input_dim + 2 + num_inducing * input_dim;
}

inline ParameterRef parameter_ref(Index flat, Index input_dim,
                                  Index num_inducing) {
  SRGP_REQUIRE(flat >= 0 && flat < num_parameters(input_dim, num_inducing),
               "parameter index ", flat, " out of range");
  if (flat == 0) {
    return {ParameterKind::kLogSigma0, 0, 0};
  }
  if (flat <= input_dim) {
    return {ParameterKind::kLogLengthscale, flat - 1, 0};
  }
  if (flat == input_dim + 1) {
    return {ParameterKind::kLogSigmaN, 0, 0};
  }
  const Index offset = flat - input_dim - 2;
  return {ParameterKind::kInducing, offset % input_dim, offset / input_dim};
}

inline Index flat_index(const ParameterRef &ref, Index input_dim) {
  switch (ref.kind) {
  case ParameterKind::kLogSigma0:
    return 0;
  case ParameterKind::kLogLengthscale:
    return 1 + ref.dim;
  case ParameterKind::kLogSigmaN:
    return input_dim + 1;
  case ParameterKind::kInducing:
    return input_dim + 2 + ref.point * input_dim + ref.dim;
  }
  return -1;
}

/*
 * Kernel amplitude, ARD lengthscales and noise level (all stored as logs),
 * plus the M x D matrix of inducing inputs.
 */
struct Hyperparameters {
  double log_sigma0 = 0.0;
  VectorXd log_lengthscales;
  double log_sigma_n = 0.0;
  MatrixXd inducing_inputs;

  static constexpr double kDefaultMinSeparation = 1e-10;

  static Hyperparameters
  from_values(double sigma0, const VectorXd &lengthscales, double sigma_n,
              const MatrixXd &inducing,
              double min_separation = kDefaultMinSeparation) {
    SRGP_REQUIRE(sigma0 > 0.0 && sigma_n > 0.0 && lengthscales.size() > 0 &&
                     (lengthscales.array() > 0.0).all(),
                 "kernel amplitude, lengthscales and noise must be positive");
    Hyperparameters h;
    h.log_sigma0 = std::log(sigma0);
    h.log_lengthscales = lengthscales.array().log().matrix();
    h.log_sigma_n = std::log(sigma_n);
    h.inducing_inputs = inducing;
    h.validate(min_separation);
    return h;
  }

  Index input_dim() const { return log_lengthscales.size(); }
  Index num_inducing() const { return inducing_inputs.rows(); }
  Index size() const { return num_parameters(input_dim(), num_inducing()); }

  double sigma0() const { return std::exp(log_sigma0); }
  double sigma0_sq() const { return std::exp(2.0 * log_sigma0); }
  double sigma_n() const { return std::exp(log_sigma_n); }
  double noise_variance() const { return std::exp(2.0 * log_sigma_n); }
  VectorXd lengthscales() const { return log_lengthscales.array().exp(); }

  void validate(double min_separation = kDefaultMinSeparation) const {
    const Index d = input_dim();
    const Index m = num_inducing();
    SRGP_REQUIRE(d >= 1, "input dimension must be >= 1");
    SRGP_REQUIRE(m >= 1, "need at least one inducing input");
    SRGP_REQUIRE(inducing_inputs.cols() == d, "inducing inputs have ",
                 inducing_inputs.cols(), " columns, expected ", d);
    auto ok = [](double v) { return std::isfinite(std::exp(v)) && std::exp(v) > 0.0; };
    SRGP_REQUIRE(ok(log_sigma0) && ok(log_sigma_n) &&
                     log_lengthscales.unaryExpr(ok).all(),
                 "hyper-parameters must be finite and positive");
    SRGP_REQUIRE(inducing_inputs.allFinite(), "non-finite inducing inputs");
    const double min_sq = min_separation * min_separation;
    for (Index i = 0; i < m; ++i) {
      for (Index j = i + 1; j < m; ++j) {
        const double dist =
            (inducing_inputs.row(i) - inducing_inputs.row(j)).squaredNorm();
        SRGP_REQUIRE(dist > min_sq, "inducing inputs ", i, " and ", j,
                     " are closer than the minimum separation ",
                     min_separation);
      }
    }
  }

  VectorXd to_vector() const {
    const Index d = input_dim();
    VectorXd theta(size());
    theta(0) = log_sigma0;
    theta.segment(1, d) = log_lengthscales;
    theta(d + 1) = log_sigma_n;
    for (Index m = 0; m < num_inducing(); ++m) {
      theta.segment(d + 2 + m * d, d) = inducing_inputs.row(m).transpose();
    }
    return theta;
  }

  // Inverse of to_vector; does not re-validate separation.
  static Hyperparameters from_vector(const VectorXd &theta, Index input_dim,
                                     Index num_inducing) {
    SRGP_REQUIRE(theta.size() == num_parameters(input_dim, num_inducing),
                 "parameter vector has length ", theta.size(), ", expected ",
                 num_parameters(input_dim, num_inducing));
    Hyperparameters h;
    h.log_sigma0 = theta(0);
    h.log_lengthscales = theta.segment(1, input_dim);
    h.log_sigma_n = theta(input_dim + 1);
    h.inducing_inputs.resize(num_inducing, input_dim);
    for (Index m = 0; m < num_inducing; ++m) {
      h.inducing_inputs.row(m) =
          theta.segment(input_dim + 2 + m * input_dim, input_dim).transpose();
    }
    return h;
  }

  Hyperparameters with_vector(const VectorXd &theta) const {
    return from_vector(theta, input_dim(), num_inducing());
  }
};

} // namespace srgp

#endif
