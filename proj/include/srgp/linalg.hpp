#ifndef INCLUDE_SRGP_LINALG_HPP_
#define INCLUDE_SRGP_LINALG_HPP_

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <cmath>
#include <string>

#include "srgp/errors.hpp"

namespace srgp {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace details {

constexpr double kMinJitter = 1e-8;
constexpr double kMaxJitter = 1e-4;

} // namespace details

/*
 * Cholesky factor of a symmetric positive definite matrix, together with the
 * diagonal jitter (absolute) that had to be added to make it factorizable.
 */
class Cholesky {
public:
  Cholesky() = default;

  Cholesky(Eigen::LLT<MatrixXd> llt, double jitter)
      : llt_(std::move(llt)), jitter_(jitter) {}

  Index size() const { return llt_.rows(); }

  double jitter() const { return jitter_; }

  const Eigen::LLT<MatrixXd> &llt() const { return llt_; }

  MatrixXd matrix_l() const { return llt_.matrixL(); }

  template <typename Rhs> auto solve(const Eigen::MatrixBase<Rhs> &rhs) const {
    return llt_.solve(rhs);
  }

  // Solves L x = rhs.
  template <typename Rhs>
  MatrixXd solve_lower(const Eigen::MatrixBase<Rhs> &rhs) const {
    return llt_.matrixL().solve(rhs);
  }

  MatrixXd inverse() const {
    MatrixXd inv = llt_.solve(MatrixXd::Identity(size(), size()));
    return 0.5 * (inv + inv.transpose());
  }

  double log_det() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

private:
  Eigen::LLT<MatrixXd> llt_;
  double jitter_ = 0.0;
};

/*
 * Factorizes `a`, first as given, then with diagonal jitter escalating by
 * decades from 1e-8 to 1e-4 times the mean of the diagonal.  Throws
 * IllConditionedError naming `name` if every attempt fails.
 */
inline Cholesky robust_cholesky(const MatrixXd &a, const std::string &name) {
  SRGP_REQUIRE(a.rows() == a.cols(), "Cholesky of non-square matrix '", name,
               "' (", a.rows(), "x", a.cols(), ")");
  if (!a.allFinite()) {
    throw NumericalError("non-finite entries in matrix '" + name + "'");
  }
  Eigen::LLT<MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) {
    return Cholesky(std::move(llt), 0.0);
  }
  double scale = a.rows() > 0 ? a.diagonal().mean() : 1.0;
  if (!(scale > 0.0)) {
    scale = 1.0;
  }
  for (double rel = details::kMinJitter; rel <= details::kMaxJitter * 1.0001;
       rel *= 10.0) {
    const double jitter = rel * scale;
    MatrixXd jittered = a;
    jittered.diagonal().array() += jitter;
    llt.compute(jittered);
    if (llt.info() == Eigen::Success) {
      return Cholesky(std::move(llt), jitter);
    }
  }
  throw IllConditionedError(name, details::kMaxJitter * scale);
}

inline void symmetrize(MatrixXd &m) { m = 0.5 * (m + m.transpose()).eval(); }

// sum_ij a_ij b_ij without materializing the Hadamard product.
template <typename A, typename B>
inline double frobenius_inner(const Eigen::MatrixBase<A> &a,
                              const Eigen::MatrixBase<B> &b) {
  return a.cwiseProduct(b).sum();
}

// max_ij |a_ij - b_ij| / max(max_ij |b_ij|, floor)
template <typename A, typename B>
inline double max_relative_difference(const Eigen::MatrixBase<A> &a,
                                      const Eigen::MatrixBase<B> &b,
                                      double floor = 1e-300) {
  SRGP_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(),
               "shape mismatch in max_relative_difference");
  if (a.size() == 0) {
    return 0.0;
  }
  const double denom = std::max(b.cwiseAbs().maxCoeff(), floor);
  return (a - b).cwiseAbs().maxCoeff() / denom;
}

} // namespace srgp

#endif
