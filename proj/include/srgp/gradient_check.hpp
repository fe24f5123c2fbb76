#ifndef INCLUDE_SRGP_GRADIENT_CHECK_HPP_
#define INCLUDE_SRGP_GRADIENT_CHECK_HPP_

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "srgp/batch_reference.hpp"
#include "srgp/gradient_propagation.hpp"

namespace srgp {

struct GradientCheck {
  VectorXd recursive;
  VectorXd finite_difference;
  // |recursive - fd| / max(|fd|, abs_floor / rel_tol), worst per parameter
  // class, so that a value <= rel_tol means "within rel_tol, or within the
  // absolute floor".
  std::map<std::string, double> max_error;
  double worst = 0.0;
  double recursive_bound = 0.0;
  double batch_bound = 0.0;

  bool passed(double rel_tol) const { return worst <= rel_tol; }
};

/*
 * Cumulative recursive gradient of psi^(K) against central differences of
 * the batch bound, both at the same fixed hyper-parameters.
 */
inline GradientCheck check_gradients(const MatrixXd &x, const VectorXd &y,
                                     const Hyperparameters &h,
                                     const ModelSpec &spec, Index batch_size,
                                     double rel_tol = 1e-4,
                                     double abs_floor = 1e-7,
                                     double fd_step = 1e-5) {
  GradientCheck out;
  const BoundAndGradient rec = recursive_bound_and_gradient(x, y, h, spec, batch_size);
  out.recursive = rec.gradient;
  out.recursive_bound = rec.value;
  const BatchBoundReport batch = batch_bound(x, y, h, spec, true, fd_step);
  out.finite_difference = batch.gradient;
  out.batch_bound = batch.value;
  const double scale_floor = abs_floor / rel_tol;
  for (Index i = 0; i < h.size(); ++i) {
    const double fd = out.finite_difference(i);
    const double err =
        std::abs(out.recursive(i) - fd) / std::max(std::abs(fd), scale_floor);
    const std::string cls =
        parameter_ref(i, h.input_dim(), h.num_inducing()).class_name();
    double &slot = out.max_error[cls];
    slot = std::max(slot, err);
    out.worst = std::max(out.worst, err);
  }
  return out;
}

} // namespace srgp

#endif
