#ifndef INCLUDE_SRGP_KERNEL_HPP_
#define INCLUDE_SRGP_KERNEL_HPP_

#include <cmath>

#include "srgp/hyperparameters.hpp"

namespace srgp {

/*
 * Squared exponential kernel with one lengthscale per input dimension,
 *
 *   k(x, x') = sigma0^2 exp(-1/2 sum_d (x_d - x'_d)^2 / l_d^2).
 */
template <typename X, typename Y>
inline double se_ard(const Eigen::MatrixBase<X> &x,
                     const Eigen::MatrixBase<Y> &x_prime,
                     const Hyperparameters &h) {
  SRGP_REQUIRE(x.size() == h.input_dim() && x_prime.size() == h.input_dim(),
               "se_ard: inputs of size ", x.size(), " and ", x_prime.size(),
               " but kernel has dimension ", h.input_dim());
  const VectorXd ls = h.lengthscales();
  double z = 0.0;
  for (Index d = 0; d < ls.size(); ++d) {
    const double diff = (x(d) - x_prime(d)) / ls(d);
    z += diff * diff;
  }
  return h.sigma0_sq() * std::exp(-0.5 * z);
}

// K_AB with [K_AB]_ij = k(a_i, b_j).  Rows of A and B are inputs.
inline MatrixXd kernel_matrix(const MatrixXd &a, const MatrixXd &b,
                              const Hyperparameters &h) {
  SRGP_REQUIRE(a.cols() == h.input_dim() && b.cols() == h.input_dim(),
               "kernel_matrix: inputs have ", a.cols(), " and ", b.cols(),
               " columns, kernel has dimension ", h.input_dim());
  const Eigen::RowVectorXd inv_ls = h.lengthscales().cwiseInverse().transpose();
  const MatrixXd as = a.array().rowwise() * inv_ls.array();
  const MatrixXd bs = b.array().rowwise() * inv_ls.array();
  MatrixXd sq = -2.0 * as * bs.transpose();
  sq.colwise() += as.rowwise().squaredNorm();
  sq.rowwise() += bs.rowwise().squaredNorm().transpose();
  return h.sigma0_sq() * (-0.5 * sq.array().max(0.0)).exp().matrix();
}

// Diagonal of K_AA; sigma0^2 everywhere for a stationary kernel.
inline VectorXd kernel_diag(const MatrixXd &a, const Hyperparameters &h) {
  SRGP_REQUIRE(a.cols() == h.input_dim(), "kernel_diag: dimension mismatch");
  return VectorXd::Constant(a.rows(), h.sigma0_sq());
}

// Which arguments of a kernel matrix are the inducing inputs R themselves.
struct KernelSides {
  bool a_is_inducing = false;
  bool b_is_inducing = false;
};

/*
 * dK_AB / d theta_wrt given the already evaluated K_AB.  Kernel
 * hyper-parameters are differentiated in log space; inducing coordinates in
 * raw input units.  For an inducing coordinate R[m][d] only row m (when A is
 * R) and/or column m (when B is R) are nonzero.
 */
inline MatrixXd kernel_matrix_grad_from(const MatrixXd &k, const MatrixXd &a,
                                        const MatrixXd &b,
                                        const Hyperparameters &h,
                                        const ParameterRef &wrt,
                                        KernelSides sides = {}) {
  SRGP_REQUIRE(k.rows() == a.rows() && k.cols() == b.rows(),
               "kernel_matrix_grad: kernel matrix shape does not match inputs");
  switch (wrt.kind) {
  case ParameterKind::kLogSigma0:
    return 2.0 * k;
  case ParameterKind::kLogSigmaN:
    return MatrixXd::Zero(k.rows(), k.cols());
  case ParameterKind::kLogLengthscale: {
    SRGP_REQUIRE(wrt.dim >= 0 && wrt.dim < h.input_dim(),
                 "lengthscale index ", wrt.dim, " out of range");
    const double inv_l2 = std::exp(-2.0 * h.log_lengthscales(wrt.dim));
    MatrixXd diff = (-b.col(wrt.dim).transpose()).replicate(a.rows(), 1);
    diff.colwise() += a.col(wrt.dim);
    return (k.array() * diff.array().square() * inv_l2).matrix();
  }
  case ParameterKind::kInducing: {
    SRGP_REQUIRE(wrt.dim >= 0 && wrt.dim < h.input_dim() && wrt.point >= 0 &&
                     wrt.point < h.num_inducing(),
                 "inducing coordinate ", wrt.name(), " out of range");
    SRGP_REQUIRE(sides.a_is_inducing || sides.b_is_inducing,
                 "inducing-input derivative requested but neither argument "
                 "is the inducing set");
    const double inv_l2 = std::exp(-2.0 * h.log_lengthscales(wrt.dim));
    const double r = h.inducing_inputs(wrt.point, wrt.dim);
    MatrixXd out = MatrixXd::Zero(k.rows(), k.cols());
    if (sides.b_is_inducing) {
      out.col(wrt.point) = k.col(wrt.point).array() *
                           (a.col(wrt.dim).array() - r) * inv_l2;
    }
    if (sides.a_is_inducing) {
      out.row(wrt.point) += (k.row(wrt.point).array() *
                             (b.col(wrt.dim).transpose().array() - r) * inv_l2)
                                .matrix();
    }
    return out;
  }
  }
  return MatrixXd();
}

inline MatrixXd kernel_matrix_grad(const MatrixXd &a, const MatrixXd &b,
                                   const Hyperparameters &h,
                                   const ParameterRef &wrt,
                                   KernelSides sides = {}) {
  return kernel_matrix_grad_from(kernel_matrix(a, b, h), a, b, h, wrt, sides);
}

inline MatrixXd kernel_matrix_grad(const MatrixXd &a, const MatrixXd &b,
                                   const Hyperparameters &h, Index flat_wrt,
                                   KernelSides sides = {}) {
  return kernel_matrix_grad(
      a, b, h, parameter_ref(flat_wrt, h.input_dim(), h.num_inducing()), sides);
}

// Derivative of the diagonal k(x_i, x_i).
inline VectorXd kernel_diag_grad(Index n, const Hyperparameters &h,
                                 const ParameterRef &wrt) {
  if (wrt.kind == ParameterKind::kLogSigma0) {
    return VectorXd::Constant(n, 2.0 * h.sigma0_sq());
  }
  return VectorXd::Zero(n);
}

} // namespace srgp

#endif
