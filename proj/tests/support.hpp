// Test-only oracles and helpers. These stay independent of the library code
// paths they check: OLS goes through hand-rolled Gaussian elimination, the
// soft-threshold is the closed form, and the conditional sampler for omega
// uses accept-reject over full Z vectors.
#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "rcpred/rng.hpp"
#include "rcpred/synth.hpp"

namespace oracles {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double soft_threshold(double rho, double lambda) {
  if (rho > lambda) return rho - lambda;
  if (rho < -lambda) return rho + lambda;
  return 0.0;
}

// Least squares via normal equations solved by Gauss-Jordan elimination with
// partial pivoting. Intercept handled by centering.
struct OlsFit {
  double intercept = 0.0;
  VectorXd coefficients;
};

inline VectorXd solve_by_elimination(MatrixXd a, VectorXd b) {
  const Index d = a.rows();
  for (Index col = 0; col < d; ++col) {
    Index pivot = col;
    for (Index r = col + 1; r < d; ++r)
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    if (a(pivot, col) == 0.0)
      throw std::runtime_error("oracle OLS: singular system");
    a.row(col).swap(a.row(pivot));
    std::swap(b(col), b(pivot));
    const double inv = 1.0 / a(col, col);
    a.row(col) *= inv;
    b(col) *= inv;
    for (Index r = 0; r < d; ++r) {
      if (r == col) continue;
      const double factor = a(r, col);
      if (factor != 0.0) {
        a.row(r) -= factor * a.row(col);
        b(r) -= factor * b(col);
      }
    }
  }
  return b;
}

inline OlsFit ols(const MatrixXd& x, const VectorXd& y) {
  const Index n = x.rows();
  const VectorXd mean = x.colwise().mean();
  const double y_mean = y.mean();
  MatrixXd xc = x.rowwise() - mean.transpose();
  VectorXd yc = y.array() - y_mean;
  const MatrixXd gram = xc.transpose() * xc / static_cast<double>(n);
  const VectorXd xty = xc.transpose() * yc / static_cast<double>(n);
  OlsFit fit;
  fit.coefficients = solve_by_elimination(gram, xty);
  fit.intercept = y_mean - fit.coefficients.dot(mean);
  return fit;
}

// Brute-force conditional sampler for omega(v) = E[mu(v,Z) | V = v, A = a]:
// draws full Z vectors from p(z | V = v) and keeps each with probability
// pi_a(v, z).
struct RejectionOmega {
  double omega = 0.0;
  double se = 0.0;
  Index accepted = 0;
};

inline RejectionOmega rejection_omega(const rcpred::synth::DgpConfig& c,
                                      const VectorXd& v, int target,
                                      Index draws, std::uint64_t seed) {
  rcpred::Rng rng(seed);
  const double z_sd = std::sqrt(1.0 - c.rho * c.rho);
  MatrixXd v_row = v.transpose();
  double sum = 0.0, sum_sq = 0.0;
  Index kept = 0;
  MatrixXd z_row(1, c.d_z);
  for (Index m = 0; m < draws; ++m) {
    for (Index j = 0; j < c.d_z; ++j)
      z_row(0, j) = j < c.d_v ? c.rho * v(j) + z_sd * rng.normal()
                              : rng.normal();
    const double p1 = rcpred::synth::oracle_pi(c, v_row, z_row)(0);
    const double accept_p = target == 1 ? p1 : 1.0 - p1;
    if (rng.uniform01() < accept_p) {
      const double mu = rcpred::synth::oracle_mu(c, v_row, z_row)(0);
      sum += mu;
      sum_sq += mu * mu;
      ++kept;
    }
  }
  RejectionOmega out;
  out.accepted = kept;
  if (kept > 1) {
    out.omega = sum / static_cast<double>(kept);
    const double var =
        (sum_sq - sum * sum / static_cast<double>(kept)) /
        static_cast<double>(kept - 1);
    out.se = std::sqrt(var / static_cast<double>(kept));
  }
  return out;
}

inline double mean(const std::vector<double>& xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double sample_sd(const std::vector<double>& xs) {
  const double m = mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

inline double standard_error(const std::vector<double>& xs) {
  return sample_sd(xs) / std::sqrt(static_cast<double>(xs.size()));
}

}  // namespace oracles
