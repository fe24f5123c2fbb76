#ifndef INCLUDE_SRGP_METRICS_HPP_
#define INCLUDE_SRGP_METRICS_HPP_

#include <cmath>

#include "srgp/recursive_inference.hpp"

namespace srgp {

inline double rmse(const VectorXd &y, const VectorXd &mean) {
  SRGP_REQUIRE(y.size() == mean.size() && y.size() >= 1,
               "rmse needs equally sized, nonempty vectors");
  return std::sqrt((y - mean).squaredNorm() / static_cast<double>(y.size()));
}

// Fraction of targets with |y - mean| <= z sqrt(variance).
inline double coverage(const VectorXd &y, const VectorXd &mean,
                       const VectorXd &variance, double z = 1.96) {
  SRGP_REQUIRE(y.size() == mean.size() && y.size() == variance.size() &&
                   y.size() >= 1,
               "coverage needs equally sized, nonempty vectors");
  Index inside = 0;
  for (Index i = 0; i < y.size(); ++i) {
    if (std::abs(y(i) - mean(i)) <= z * std::sqrt(std::max(variance(i), 0.0))) {
      ++inside;
    }
  }
  return static_cast<double>(inside) / static_cast<double>(y.size());
}

struct Evaluation {
  double rmse = 0.0;
  double coverage = 0.0;
  Index count = 0;
};

// Scores the latent-plus-noise predictive against noisy targets.
inline Evaluation evaluate(const PosteriorState &state, const MatrixXd &x,
                           const VectorXd &y, const Hyperparameters &h,
                           const ModelSpec &spec) {
  const MarginalPrediction p = predict_marginal(state, x, h, spec, true);
  return {rmse(y, p.mean), coverage(y, p.mean, p.variance), y.size()};
}

} // namespace srgp

#endif
