#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "rcpred/error.hpp"

namespace rcpred::eval {

// Doubly-robust MSE estimate: mean of the per-unit influence values plus a
// 95% normal interval, half-width 1.96 * sqrt(var(phi) / n) with the unbiased
// (n-1 denominator) sample variance.
struct MseEstimate {
  std::string method;
  double point = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  Eigen::VectorXd influence_values;
  Eigen::Index n = 0;
};

inline double sample_variance(const Eigen::VectorXd& values) {
  const Eigen::Index n = values.size();
  if (n < 2) return 0.0;
  const double mean = values.mean();
  return (values.array() - mean).square().sum() /
         static_cast<double>(n - 1);
}

inline MseEstimate make_mse_estimate(Eigen::VectorXd influence,
                                     std::string method) {
  if (influence.size() == 0)
    throw InvalidArgument("MseEstimate: no influence values");
  MseEstimate est;
  est.method = std::move(method);
  est.n = influence.size();
  est.point = influence.mean();
  const double half =
      1.96 * std::sqrt(sample_variance(influence) /
                       static_cast<double>(influence.size()));
  est.ci_lo = est.point - half;
  est.ci_hi = est.point + half;
  est.influence_values = std::move(influence);
  return est;
}

}  // namespace rcpred::eval
