#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <ostream>
#include <string>

#include "rcpred/core.hpp"
#include "rcpred/csv.hpp"
#include "rcpred/error.hpp"
#include "rcpred/rng.hpp"

namespace rcpred::synth {

using core::Index;
using core::MatrixXd;
using core::ObservationTable;
using core::TargetTreatment;
using core::VectorXd;

// Sparse linear simulation design. The base process draws
//   V_i ~ N(0,1);  Z_i ~ N(rho V_i, 1 - rho^2)
//   mu(V,Z) = kv/(kv + rho kz) (sum_{i<=kv} V_i + sum_{i<=kz} Z_i)
//   nu(V)   = kv/(kv + rho kz) (sum_{i<=kv} V_i + rho sum_{i<=kz} V_i)
//   pi(V,Z) = 1 - sigmoid((sum_{i<=kv} V_i + sum_{i<=kz} Z_i)/sqrt(kv+kz))
//   A ~ Bernoulli(pi);  Y^a = mu + eps,  eps ~ N(0, noise_variance)
// with noise_variance = noise_scale * (1/2) * mean(mu^2), i.e. a
// signal-to-noise ratio of 2 at the default noise_scale.
//
// The misspecified variant (rho = 0) squares the upper half of V:
//   V_i := V_j^2 for d_v/2 < i <= d_v, j = i - d_v/2
//   mu(V,Z) = sum_{i<=kv/2} (V_i + (2(i mod 2)-1) V_i^2) + sum_{i<=kz} Z_i
//   nu(V)   = sum_{i<=kv/2} (V_i + (2(i mod 2)-1) V_i^2)
struct DgpConfig {
  Index n = 1000;
  Index d_v = 400;
  Index d_z = 100;
  int k_v = 25;
  int k_z = 20;
  double rho = 0.0;
  std::uint64_t seed = 0;
  bool misspecified = false;
  double noise_scale = 1.0;
  int target = 1;  // arm whose potential outcome Y^a is generated
};

inline void validate(const DgpConfig& c) {
  if (c.n < 1) throw ConfigError("dgp: n must be >= 1");
  if (c.d_v < 1) throw ConfigError("dgp: d_v must be >= 1");
  if (c.d_z < 0) throw ConfigError("dgp: d_z must be >= 0");
  if (c.k_v < 0 || c.k_v > c.d_v) throw ConfigError("dgp: need 0 <= k_v <= d_v");
  if (c.k_z < 0 || c.k_z > c.d_z) throw ConfigError("dgp: need 0 <= k_z <= d_z");
  if (!(c.rho >= -1.0 && c.rho <= 1.0))
    throw ConfigError("dgp: rho must lie in [-1, 1]");
  if (c.noise_scale < 0.0) throw ConfigError("dgp: noise_scale must be >= 0");
  if (c.target != 0 && c.target != 1)
    throw ConfigError("dgp: target must be 0 or 1");
  if (c.misspecified) {
    if (c.rho != 0.0) throw ConfigError("dgp: misspecified requires rho = 0");
    if (c.d_v % 2 != 0) throw ConfigError("dgp: misspecified requires even d_v");
    if (c.k_v % 2 != 0) throw ConfigError("dgp: misspecified requires even k_v");
  }
  if (c.misspecified && c.k_v / 2 > c.d_v / 2)
    throw ConfigError("dgp: misspecified requires k_v <= d_v");
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

inline double pi_scale(const DgpConfig& c) {
  const double k = static_cast<double>(c.k_v + c.k_z);
  return k > 0.0 ? 1.0 / std::sqrt(k) : 0.0;
}

inline double nu_coefficient(const DgpConfig& c) {
  return static_cast<double>(c.k_v) /
         (static_cast<double>(c.k_v) + c.rho * static_cast<double>(c.k_z));
}

// (2(i mod 2) - 1) for the 1-based index i: +1 when i is odd, -1 when even.
inline double alternating_sign(Index i_one_based) {
  return i_one_based % 2 == 1 ? 1.0 : -1.0;
}

}  // namespace detail

// Closed-form target nu(v), vectorized over rows of v.
inline VectorXd oracle_nu(const DgpConfig& c, const MatrixXd& v) {
  validate(c);
  if (v.cols() != c.d_v)
    throw DimensionError("oracle_nu: v has " + std::to_string(v.cols()) +
                         " columns, config says d_v=" + std::to_string(c.d_v));
  VectorXd nu = VectorXd::Zero(v.rows());
  if (c.misspecified) {
    for (Index j = 0; j < c.k_v / 2; ++j)
      nu += v.col(j) +
            detail::alternating_sign(j + 1) * v.col(j).array().square().matrix();
    return nu;
  }
  const double coef = detail::nu_coefficient(c);
  if (c.k_v > 0) nu += v.leftCols(c.k_v).rowwise().sum();
  const Index shared = std::min<Index>(c.k_z, c.d_v);
  if (shared > 0) nu += c.rho * v.leftCols(shared).rowwise().sum();
  return coef * nu;
}

// Outcome regression mu(v,z), vectorized.
inline VectorXd oracle_mu(const DgpConfig& c, const MatrixXd& v,
                          const MatrixXd& z) {
  validate(c);
  if (v.cols() != c.d_v || (c.d_z > 0 && z.cols() != c.d_z))
    throw DimensionError("oracle_mu: column counts do not match config");
  VectorXd mu = VectorXd::Zero(v.rows());
  if (c.misspecified) {
    for (Index j = 0; j < c.k_v / 2; ++j)
      mu += v.col(j) +
            detail::alternating_sign(j + 1) * v.col(j).array().square().matrix();
    if (c.k_z > 0) mu += z.leftCols(c.k_z).rowwise().sum();
    return mu;
  }
  if (c.k_v > 0) mu += v.leftCols(c.k_v).rowwise().sum();
  if (c.k_z > 0) mu += z.leftCols(c.k_z).rowwise().sum();
  return detail::nu_coefficient(c) * mu;
}

// Propensity P(A = 1 | v, z), vectorized. Strictly inside (0, 1).
inline VectorXd oracle_pi(const DgpConfig& c, const MatrixXd& v,
                          const MatrixXd& z) {
  validate(c);
  if (v.cols() != c.d_v || (c.d_z > 0 && z.cols() != c.d_z))
    throw DimensionError("oracle_pi: column counts do not match config");
  VectorXd s = VectorXd::Zero(v.rows());
  if (c.k_v > 0) s += v.leftCols(c.k_v).rowwise().sum();
  if (c.k_z > 0) s += z.leftCols(c.k_z).rowwise().sum();
  const double scale = detail::pi_scale(c);
  VectorXd pi(v.rows());
  for (Index i = 0; i < v.rows(); ++i)
    pi(i) = 1.0 - sigmoid(scale * s(i));
  return pi;
}

// Fully generated replicate: observed table plus the oracle quantities that
// exist only in simulation.
struct SyntheticDataset {
  ObservationTable table;
  VectorXd nu_true;
  VectorXd mu_true;
  VectorXd pi_true;
  VectorXd y_potential;  // Y^a for the configured target arm, every row
  double noise_variance = 0.0;
};

namespace detail {

// Draw order is fixed so that identical configs are bit-identical: V columns,
// then Z columns, then potential-outcome noise, then treatment uniforms, then
// noise for the untargeted arm (row order, only where needed).
inline SyntheticDataset generate_impl(const DgpConfig& c) {
  validate(c);
  Rng rng(c.seed);
  SyntheticDataset out;
  ObservationTable& t = out.table;

  t.v.resize(c.n, c.d_v);
  if (c.misspecified) {
    const Index half = c.d_v / 2;
    for (Index j = 0; j < half; ++j)
      for (Index i = 0; i < c.n; ++i) t.v(i, j) = rng.normal();
    for (Index j = 0; j < half; ++j)
      t.v.col(half + j) = t.v.col(j).array().square();
  } else {
    for (Index j = 0; j < c.d_v; ++j)
      for (Index i = 0; i < c.n; ++i) t.v(i, j) = rng.normal();
  }

  t.z.resize(c.n, c.d_z);
  const double z_sd = std::sqrt(1.0 - c.rho * c.rho);
  for (Index j = 0; j < c.d_z; ++j) {
    if (j < c.d_v) {
      for (Index i = 0; i < c.n; ++i)
        t.z(i, j) = c.rho * t.v(i, j) + z_sd * rng.normal();
    } else {
      // Correlation pairing applies only to shared indices.
      for (Index i = 0; i < c.n; ++i) t.z(i, j) = rng.normal();
    }
  }

  out.mu_true = oracle_mu(c, t.v, t.z);
  out.nu_true = oracle_nu(c, t.v);
  out.pi_true = oracle_pi(c, t.v, t.z);

  out.noise_variance =
      c.noise_scale * 0.5 * out.mu_true.squaredNorm() /
      static_cast<double>(c.n);
  const double noise_sd = std::sqrt(out.noise_variance);

  out.y_potential.resize(c.n);
  for (Index i = 0; i < c.n; ++i)
    out.y_potential(i) = out.mu_true(i) + noise_sd * rng.normal();

  t.a.resize(static_cast<std::size_t>(c.n));
  for (Index i = 0; i < c.n; ++i)
    t.a[static_cast<std::size_t>(i)] =
        rng.bernoulli(out.pi_true(i)) ? 1 : 0;

  // Rows on the untargeted arm get an independent draw from the same mu
  // (zero treatment effect); estimators only consume Y where A = a.
  t.y.resize(c.n);
  for (Index i = 0; i < c.n; ++i) {
    if (t.a[static_cast<std::size_t>(i)] == c.target)
      t.y(i) = out.y_potential(i);
    else
      t.y(i) = out.mu_true(i) + noise_sd * rng.normal();
  }
  return out;
}

}  // namespace detail

inline SyntheticDataset generate(const DgpConfig& c) {
  if (c.misspecified)
    throw ConfigError("generate: config is misspecified; use generate_misspec");
  return detail::generate_impl(c);
}

inline SyntheticDataset generate_misspec(const DgpConfig& c) {
  if (!c.misspecified)
    throw ConfigError("generate_misspec: config.misspecified must be true");
  return detail::generate_impl(c);
}

inline SyntheticDataset generate_any(const DgpConfig& c) {
  return c.misspecified ? generate_misspec(c) : generate(c);
}

// Monte Carlo estimate of omega(v) = E[Y | A = a, V = v] and of the pointwise
// confounding bias b(v) = omega(v) - nu(v), with standard errors.
struct McOmegaResult {
  double omega = 0.0;
  double bias = 0.0;
  double se_omega = 0.0;
  double se_bias = 0.0;
};

// Self-normalized importance form: omega(v) =
// E[mu(v,Z) pi_a(v,Z)] / E[pi_a(v,Z)] over Z ~ p(z | V = v). Both mu and pi
// depend on z only through T = sum_{i<=kz} z_i, so T is sampled directly:
// T ~ N(rho * sum_{i<=min(kz,d_v)} v_i, min(kz,d_v)(1-rho^2) + max(kz-d_v,0)).
inline McOmegaResult mc_omega(const DgpConfig& c, const VectorXd& v,
                              TargetTreatment a, Index draws,
                              std::uint64_t seed) {
  validate(c);
  if (draws < 1000) throw InvalidArgument("mc_omega: need draws >= 1000");
  if (v.size() != c.d_v)
    throw DimensionError("mc_omega: v length does not match d_v");

  const Index shared = std::min<Index>(c.k_z, c.d_v);
  const double t_mean = c.rho * v.head(shared).sum();
  const double t_var = static_cast<double>(shared) * (1.0 - c.rho * c.rho) +
                       static_cast<double>(std::max<Index>(c.k_z - c.d_v, 0));
  const double t_sd = std::sqrt(t_var);

  double v_mu_part = 0.0;  // mu(v, z) = v_mu_part + coef_z * T
  double coef_z = 0.0;
  if (c.misspecified) {
    for (Index j = 0; j < c.k_v / 2; ++j)
      v_mu_part += v(j) + detail::alternating_sign(j + 1) * v(j) * v(j);
    coef_z = 1.0;
  } else {
    v_mu_part = detail::nu_coefficient(c) * v.head(c.k_v).sum();
    coef_z = detail::nu_coefficient(c);
  }
  const double v_pi_part = v.head(c.k_v).sum();
  const double scale = detail::pi_scale(c);

  Rng rng(seed);
  double sum_w = 0.0, sum_wmu = 0.0;
  VectorXd mu_draws(draws), w_draws(draws);
  for (Index m = 0; m < draws; ++m) {
    const double t = t_mean + t_sd * rng.normal();
    const double mu = v_mu_part + coef_z * t;
    const double p1 = 1.0 - sigmoid(scale * (v_pi_part + t));
    const double w = a.a == 1 ? p1 : 1.0 - p1;
    mu_draws(m) = mu;
    w_draws(m) = w;
    sum_w += w;
    sum_wmu += w * mu;
  }

  McOmegaResult out;
  out.omega = sum_wmu / sum_w;
  // Delta-method standard error of the self-normalized ratio.
  double num = 0.0;
  for (Index m = 0; m < draws; ++m) {
    const double d = w_draws(m) * (mu_draws(m) - out.omega);
    num += d * d;
  }
  out.se_omega = std::sqrt(num) / sum_w;
  MatrixXd v_row = v.transpose();
  out.bias = out.omega - oracle_nu(c, v_row)(0);
  out.se_bias = out.se_omega;
  return out;
}

// Writes the oracle sidecar: a one-line comment with the full DgpConfig, then
// nu_true,mu_true,pi_true,y_potential rows aligned with the table CSV.
inline void write_sidecar(const SyntheticDataset& data, const DgpConfig& c,
                          std::ostream& out) {
  out << "# dgp n=" << c.n << " d_v=" << c.d_v << " d_z=" << c.d_z
      << " k_v=" << c.k_v << " k_z=" << c.k_z
      << " rho=" << csv::format_double(c.rho) << " seed=" << c.seed
      << " misspecified=" << (c.misspecified ? 1 : 0)
      << " noise_scale=" << csv::format_double(c.noise_scale)
      << " target=" << c.target
      << " noise_variance=" << csv::format_double(data.noise_variance)
      << "\n";
  out << "nu_true,mu_true,pi_true,y_potential\n";
  for (Index i = 0; i < data.table.n(); ++i)
    out << csv::format_double(data.nu_true(i)) << ","
        << csv::format_double(data.mu_true(i)) << ","
        << csv::format_double(data.pi_true(i)) << ","
        << csv::format_double(data.y_potential(i)) << "\n";
}

}  // namespace rcpred::synth
