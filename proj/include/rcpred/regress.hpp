#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rcpred/core.hpp"
#include "rcpred/error.hpp"

namespace rcpred::regress {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;

enum class Family { lasso, knn };

// Declarative choice of regression family and hyperparameters.
struct RegressorSpec {
  Family family = Family::lasso;

  // lasso: descending penalty grid; empty means the data-driven default of
  // 100 log-spaced values from lambda_max down to 1e-3 * lambda_max.
  std::vector<double> lambda_grid;
  int cv_folds = 10;
  std::uint64_t cv_seed = 0;  // seeds the lasso_cv fold split

  // knn: neighbor count; 0 means the default ceil(n^0.7 / 5).
  int neighbors = 0;

  bool standardize = true;

  // Restricts which predictor columns the regressor may see (empty = all).
  std::vector<Index> feature_subset;
};

inline void validate(const RegressorSpec& spec) {
  if (spec.family == Family::lasso) {
    for (std::size_t i = 1; i < spec.lambda_grid.size(); ++i)
      if (spec.lambda_grid[i] > spec.lambda_grid[i - 1])
        throw InvalidArgument("RegressorSpec: lambda_grid must be descending");
    for (double l : spec.lambda_grid)
      if (!(l >= 0.0))
        throw InvalidArgument("RegressorSpec: lambda values must be >= 0");
    if (spec.cv_folds < 2)
      throw InvalidArgument("RegressorSpec: cv_folds must be >= 2");
  }
  if (spec.neighbors < 0)
    throw InvalidArgument("RegressorSpec: neighbors must be >= 1 (0 = auto)");
}

// Immutable fitted predictor. For lasso, coefficients are reported in the
// original units of the (possibly subset) input columns; centering/scaling
// constants are kept for diagnostics. For knn the standardized training data
// is stored whole.
struct FittedRegressor {
  Family family = Family::lasso;
  Index n_features_in = 0;           // expected column count at predict time
  std::vector<Index> feature_subset;  // empty = all columns

  // lasso
  double intercept = 0.0;
  VectorXd coefficients;  // original units, length = subset width
  double chosen_lambda = 0.0;
  VectorXd column_center;
  VectorXd column_scale;

  // knn
  MatrixXd train_x;  // standardized
  VectorXd train_y;
  int neighbors = 0;

  VectorXd predict(const MatrixXd& x) const;
};

namespace detail {

inline MatrixXd select_columns(const MatrixXd& x,
                               const std::vector<Index>& subset) {
  if (subset.empty()) return x;
  MatrixXd out(x.rows(), static_cast<Index>(subset.size()));
  for (std::size_t j = 0; j < subset.size(); ++j) {
    if (subset[j] < 0 || subset[j] >= x.cols())
      throw InvalidArgument("feature_subset index " +
                            std::to_string(subset[j]) + " out of range for " +
                            std::to_string(x.cols()) + " columns");
    out.col(static_cast<Index>(j)) = x.col(subset[j]);
  }
  return out;
}

inline double soft_threshold(double rho, double lambda) {
  if (rho > lambda) return rho - lambda;
  if (rho < -lambda) return rho + lambda;
  return 0.0;
}

// Sufficient statistics of a row subset, composable by subtraction so that
// cross-validation can derive each fold's Gram matrix from the full one.
struct RawStats {
  Index n = 0;
  MatrixXd gram;     // X'X
  VectorXd xty;      // X'y
  VectorXd col_sum;  // column sums of X
  double y_sum = 0.0;
  double y_sq_sum = 0.0;

  static RawStats from(const MatrixXd& x, const VectorXd& y) {
    RawStats s;
    s.n = x.rows();
    s.gram.noalias() = x.transpose() * x;
    s.xty.noalias() = x.transpose() * y;
    s.col_sum = x.colwise().sum();
    s.y_sum = y.sum();
    s.y_sq_sum = y.squaredNorm();
    return s;
  }

  RawStats minus(const RawStats& other) const {
    RawStats s;
    s.n = n - other.n;
    s.gram = gram - other.gram;
    s.xty = xty - other.xty;
    s.col_sum = col_sum - other.col_sum;
    s.y_sum = y_sum - other.y_sum;
    s.y_sq_sum = y_sq_sum - other.y_sq_sum;
    return s;
  }
};

// Centered (and optionally unit-variance) least-squares problem expressed
// through its Gram matrix. Coordinate descent then costs O(d) per coefficient
// update instead of O(n), which is what makes the cross-validated paths cheap.
//
// Internally: A = (1/n) Xs'Xs, c = (1/n) Xs'yc with Xs the transformed
// columns and yc the centered response. Columns with (numerically) zero
// variance are excluded; their coefficients stay 0.
struct StdProblem {
  Index n = 0;
  Index d = 0;
  MatrixXd a_mat;
  VectorXd c;
  VectorXd diag;  // a_mat diagonal; 0 marks an excluded column
  VectorXd center;
  VectorXd scale;
  double y_mean = 0.0;
  // Coefficient tolerances are scaled by the response magnitude, so a
  // regression on heavy-tailed pseudo-outcomes converges on the same relative
  // accuracy as one on unit-scale data.
  double response_scale = 1.0;

  static StdProblem build(const RawStats& raw, bool standardize) {
    StdProblem p;
    p.n = raw.n;
    p.d = raw.gram.rows();
    const double n = static_cast<double>(raw.n);
    p.y_mean = raw.y_sum / n;
    p.response_scale = std::max(
        1.0, std::sqrt(std::max(0.0, raw.y_sq_sum / n - p.y_mean * p.y_mean)));
    p.center = raw.col_sum / n;
    p.scale = VectorXd::Ones(p.d);

    VectorXd variance(p.d);
    for (Index j = 0; j < p.d; ++j)
      variance(j) = raw.gram(j, j) / n - p.center(j) * p.center(j);

    std::vector<bool> excluded(static_cast<std::size_t>(p.d), false);
    for (Index j = 0; j < p.d; ++j) {
      const double floor = 1e-12 * (raw.gram(j, j) / n + 1.0);
      if (variance(j) <= floor) {
        excluded[static_cast<std::size_t>(j)] = true;
      } else if (standardize) {
        p.scale(j) = std::sqrt(variance(j));
      }
    }

    p.a_mat = raw.gram / n;
    p.a_mat.noalias() -= p.center * p.center.transpose();
    for (Index j = 0; j < p.d; ++j) {
      p.a_mat.col(j) /= p.scale(j);
      p.a_mat.row(j) /= p.scale(j);
    }
    p.c = (raw.xty - raw.col_sum * p.y_mean).cwiseQuotient(p.scale) / n;
    p.diag = p.a_mat.diagonal();
    for (Index j = 0; j < p.d; ++j) {
      if (excluded[static_cast<std::size_t>(j)]) {
        p.diag(j) = 0.0;
        p.c(j) = 0.0;
      }
    }
    return p;
  }

  double lambda_max() const {
    double m = 0.0;
    for (Index j = 0; j < d; ++j)
      if (diag(j) > 0.0) m = std::max(m, std::abs(c(j)));
    return m;
  }

  VectorXd gradient_for(const VectorXd& beta) const {
    VectorXd g = VectorXd::Zero(d);
    for (Index j = 0; j < d; ++j)
      if (beta(j) != 0.0) g.noalias() += beta(j) * a_mat.col(j);
    return g;
  }

  // Max KKT violation for the objective (1/2n)||yc - Xs b||^2 + lambda |b|_1,
  // given a fresh gradient g = A b.
  double kkt_violation(double lambda, const VectorXd& beta,
                       const VectorXd& g) const {
    double worst = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (diag(j) <= 0.0) continue;
      const double grad = c(j) - g(j);
      if (beta(j) == 0.0)
        worst = std::max(worst, std::abs(grad) - lambda);
      else
        worst = std::max(worst,
                         std::abs(grad - lambda * (beta(j) > 0 ? 1.0 : -1.0)));
    }
    return worst;
  }

  // Cyclic coordinate descent with an active-set inner loop. Full sweeps
  // maintain the dense gradient; inner cycles keep the gradient only on the
  // active coordinates, which costs O(k) per update instead of O(d). A solve
  // is accepted once a full sweep moves no coefficient by more than `tol`
  // and the exact KKT residual is within `kkt_gate`; it is abandoned after
  // `max_cycles` sweeps either way. Callers scale the tolerances by
  // `response_scale`.
  VectorXd solve(double lambda, VectorXd beta, double tol, double kkt_gate,
                 int max_cycles = 10000) const {
    VectorXd g = gradient_for(beta);
    std::vector<Index> active;

    auto sweep = [&](const std::vector<Index>* subset) {
      double max_change = 0.0;
      const Index count = subset ? static_cast<Index>(subset->size()) : d;
      for (Index t = 0; t < count; ++t) {
        const Index j = subset ? (*subset)[static_cast<std::size_t>(t)] : t;
        if (diag(j) <= 0.0) continue;
        const double rho = c(j) - g(j) + diag(j) * beta(j);
        const double updated = soft_threshold(rho, lambda) / diag(j);
        const double delta = updated - beta(j);
        if (delta != 0.0) {
          beta(j) = updated;
          g.noalias() += delta * a_mat.col(j);
          max_change = std::max(max_change, std::abs(delta));
        }
      }
      return max_change;
    };

    int cycles = 0;
    while (cycles < max_cycles) {
      const double change = sweep(nullptr);
      ++cycles;
      if (change >= tol) {
        active.clear();
        for (Index j = 0; j < d; ++j)
          if (beta(j) != 0.0) active.push_back(j);
        while (cycles < max_cycles) {
          ++cycles;
          if (sweep(&active) < tol) break;
        }
        continue;
      }
      g = gradient_for(beta);  // discard incremental drift before checking
      if (kkt_violation(lambda, beta, g) <= kkt_gate) break;
    }

    if (!beta.allFinite())
      throw NumericalError("lasso coordinate descent diverged");
    return beta;
  }

  // Original-unit coefficients and intercept for a standardized solution.
  void to_original(const VectorXd& beta_std, VectorXd& coef,
                   double& intercept) const {
    coef = beta_std.cwiseQuotient(scale);
    intercept = y_mean - coef.dot(center);
  }
};

// 100 log-spaced values from lambda_max down. The floor ratio is 1e-3 with
// plenty of rows; near and below the square regime (n < 2d) the saturated end
// of the path is degenerate and the floor is raised to 1e-2, following the
// usual package behavior for wide problems.
inline std::vector<double> default_lambda_grid(double lambda_max, Index n,
                                               Index d) {
  if (lambda_max <= 0.0) return {0.0};
  constexpr int kGridSize = 100;
  const double ratio = n < 2 * d ? 1e-2 : 1e-3;
  std::vector<double> grid(kGridSize);
  for (int i = 0; i < kGridSize; ++i)
    grid[static_cast<std::size_t>(i)] =
        lambda_max * std::pow(ratio, static_cast<double>(i) / (kGridSize - 1));
  return grid;
}

inline void check_finite_inputs(const MatrixXd& x, const VectorXd& y) {
  if (x.rows() != y.size())
    throw DimensionError("regression: x rows (" + std::to_string(x.rows()) +
                         ") != y length (" + std::to_string(y.size()) + ")");
  if (!x.allFinite() || !y.allFinite())
    throw DomainError("regression: non-finite input");
}

}  // namespace detail

// Cyclic coordinate descent for
//   (1/2n) sum_i (y_i - b0 - x_i'b)^2 + lambda * |b|_1
// with unpenalized intercept. Columns are centered, and scaled to unit
// (1/n)-variance when spec.standardize is set; coefficients are mapped back
// to original units.
inline FittedRegressor lasso_fit(const MatrixXd& x, const VectorXd& y,
                                 double lambda, const RegressorSpec& spec) {
  validate(spec);
  detail::check_finite_inputs(x, y);
  if (x.rows() < 2) throw InsufficientData("lasso_fit: need n >= 2");
  if (!(lambda >= 0.0)) throw InvalidArgument("lasso_fit: lambda must be >= 0");

  const MatrixXd xs = detail::select_columns(x, spec.feature_subset);
  const auto raw = detail::RawStats::from(xs, y);
  const auto prob = detail::StdProblem::build(raw, spec.standardize);
  const VectorXd beta =
      prob.solve(lambda, VectorXd::Zero(prob.d),
                 1e-7 * prob.response_scale, 1e-6);

  FittedRegressor fit;
  fit.family = Family::lasso;
  fit.n_features_in = x.cols();
  fit.feature_subset = spec.feature_subset;
  fit.chosen_lambda = lambda;
  fit.column_center = prob.center;
  fit.column_scale = prob.scale;
  prob.to_original(beta, fit.coefficients, fit.intercept);
  return fit;
}

// Cross-validated lasso: selects the grid value minimizing mean held-out
// squared error over seeded folds (ties broken toward the larger lambda),
// then refits on all data at the winner.
inline FittedRegressor lasso_cv(const MatrixXd& x, const VectorXd& y,
                                const RegressorSpec& spec,
                                std::uint64_t seed) {
  validate(spec);
  detail::check_finite_inputs(x, y);
  const Index n = x.rows();
  if (n < spec.cv_folds)
    throw InsufficientData("lasso_cv: need n >= cv_folds");

  const MatrixXd xs = detail::select_columns(x, spec.feature_subset);
  const Index d = xs.cols();
  const auto full = detail::RawStats::from(xs, y);
  const auto full_prob = detail::StdProblem::build(full, spec.standardize);

  const std::vector<double> grid =
      spec.lambda_grid.empty()
          ? detail::default_lambda_grid(full_prob.lambda_max(), n, d)
          : spec.lambda_grid;
  const auto n_lambda = static_cast<Index>(grid.size());

  const auto folds = core::split_folds(n, spec.cv_folds, seed).fold_indices();
  VectorXd total_sq_err = VectorXd::Zero(n_lambda);
  for (const auto& held : folds) {
    const auto n_held = static_cast<Index>(held.size());
    MatrixXd x_held(n_held, d);
    VectorXd y_held(n_held);
    for (Index i = 0; i < n_held; ++i) {
      x_held.row(i) = xs.row(held[static_cast<std::size_t>(i)]);
      y_held(i) = y(held[static_cast<std::size_t>(i)]);
    }
    const auto train = full.minus(detail::RawStats::from(x_held, y_held));
    const auto prob = detail::StdProblem::build(train, spec.standardize);

    // Fold models only rank the grid; a looser tolerance and cycle budget
    // change none of the selections in practice (an under-converged saturated
    // fit scores worse held out, not better) and keep the paths cheap. The
    // returned fit below is solved at the full tolerance.
    MatrixXd coef_path(d, n_lambda);
    RowVectorXd intercept_path(n_lambda);
    VectorXd beta = VectorXd::Zero(d);
    for (Index l = 0; l < n_lambda; ++l) {
      beta = prob.solve(grid[static_cast<std::size_t>(l)], beta,
                        1e-4 * prob.response_scale,
                        1e-3 * prob.response_scale, 250);
      VectorXd coef;
      double b0;
      prob.to_original(beta, coef, b0);
      coef_path.col(l) = coef;
      intercept_path(l) = b0;
    }
    MatrixXd pred = x_held * coef_path;
    pred.rowwise() += intercept_path;
    total_sq_err +=
        (pred.colwise() - y_held).colwise().squaredNorm().transpose();
  }

  Index best = 0;
  for (Index l = 1; l < n_lambda; ++l)
    if (total_sq_err(l) < total_sq_err(best)) best = l;

  // Warm-started refit on all data down to the winning lambda, at the full
  // tolerance of a returned fit.
  VectorXd beta = VectorXd::Zero(d);
  for (Index l = 0; l <= best; ++l)
    beta = full_prob.solve(grid[static_cast<std::size_t>(l)], beta,
                           1e-7 * full_prob.response_scale, 1e-6);

  FittedRegressor fit;
  fit.family = Family::lasso;
  fit.n_features_in = x.cols();
  fit.feature_subset = spec.feature_subset;
  fit.chosen_lambda = grid[static_cast<std::size_t>(best)];
  fit.column_center = full_prob.center;
  fit.column_scale = full_prob.scale;
  full_prob.to_original(beta, fit.coefficients, fit.intercept);
  return fit;
}

// k-nearest-neighbor regression on standardized columns. Prediction is the
// unweighted mean of the responses over the `neighbors` closest training rows
// in Euclidean distance; distance ties go to the lower row index.
inline FittedRegressor knn_fit(const MatrixXd& x, const VectorXd& y,
                               const RegressorSpec& spec) {
  validate(spec);
  detail::check_finite_inputs(x, y);
  const Index n = x.rows();
  if (n < 1) throw InsufficientData("knn_fit: need n >= 1");

  int k = spec.neighbors;
  if (k == 0)
    k = static_cast<int>(
        std::ceil(std::pow(static_cast<double>(n), 0.7) / 5.0));
  k = std::max(k, 1);
  if (k > n)
    throw InvalidArgument("knn_fit: neighbors (" + std::to_string(k) +
                          ") exceeds n (" + std::to_string(n) + ")");

  MatrixXd xs = detail::select_columns(x, spec.feature_subset);
  const Index d = xs.cols();
  VectorXd center = xs.colwise().mean();
  VectorXd scale = VectorXd::Ones(d);
  if (spec.standardize) {
    for (Index j = 0; j < d; ++j) {
      const double var =
          (xs.col(j).array() - center(j)).square().sum() / n;
      if (var > 0.0) scale(j) = std::sqrt(var);
    }
  }
  xs.rowwise() -= center.transpose();
  xs.array().rowwise() /= scale.transpose().array();

  FittedRegressor fit;
  fit.family = Family::knn;
  fit.n_features_in = x.cols();
  fit.feature_subset = spec.feature_subset;
  fit.column_center = center;
  fit.column_scale = scale;
  fit.train_x = std::move(xs);
  fit.train_y = y;
  fit.neighbors = k;
  return fit;
}

inline VectorXd FittedRegressor::predict(const MatrixXd& x) const {
  if (x.cols() != n_features_in)
    throw InvalidArgument("predict: input has " + std::to_string(x.cols()) +
                          " columns, model expects " +
                          std::to_string(n_features_in));
  const MatrixXd xs = detail::select_columns(x, feature_subset);
  if (family == Family::lasso)
    return ((xs * coefficients).array() + intercept).matrix();

  const Index n_train = train_x.rows();
  VectorXd out(xs.rows());
  std::vector<Index> order(static_cast<std::size_t>(n_train));
  VectorXd dist2(n_train);
  for (Index i = 0; i < xs.rows(); ++i) {
    VectorXd q = (xs.row(i).transpose() - column_center)
                     .cwiseQuotient(column_scale);
    dist2 = (train_x.rowwise() - q.transpose()).rowwise().squaredNorm();
    std::iota(order.begin(), order.end(), Index{0});
    std::partial_sort(order.begin(), order.begin() + neighbors, order.end(),
                      [&](Index a, Index b) {
                        if (dist2(a) != dist2(b)) return dist2(a) < dist2(b);
                        return a < b;
                      });
    double sum = 0.0;
    for (int t = 0; t < neighbors; ++t)
      sum += train_y(order[static_cast<std::size_t>(t)]);
    out(i) = sum / neighbors;
  }
  return out;
}

inline VectorXd predict(const FittedRegressor& model, const MatrixXd& x) {
  return model.predict(x);
}

// Fits by family; lasso goes through cross-validation seeded by the spec.
inline FittedRegressor fit_regressor(const MatrixXd& x, const VectorXd& y,
                                     const RegressorSpec& spec) {
  if (spec.family == Family::lasso) return lasso_cv(x, y, spec, spec.cv_seed);
  return knn_fit(x, y, spec);
}

// KKT residuals of a lasso model on its training data, on the internal
// standardized scale: zero coefficients need |(1/n) x_j'r| <= lambda and
// active ones |(1/n) x_j'r - lambda * sign(b_j)| ~ 0.
struct KktResidual {
  double max_zero_violation = 0.0;    // max over zero coords of |grad|-lambda
  double max_active_violation = 0.0;  // max over active coords
};

inline KktResidual kkt_residual(const FittedRegressor& model,
                                const MatrixXd& x, const VectorXd& y) {
  if (model.family != Family::lasso)
    throw InvalidArgument("kkt_residual: lasso models only");
  const MatrixXd xs = detail::select_columns(x, model.feature_subset);
  const Index n = xs.rows();
  const Index d = xs.cols();
  MatrixXd xstd = xs.rowwise() - model.column_center.transpose();
  xstd.array().rowwise() /= model.column_scale.transpose().array();
  const VectorXd beta_std =
      model.coefficients.cwiseProduct(model.column_scale);
  const VectorXd yc = y.array() - y.mean();
  const VectorXd r = yc - xstd * beta_std;
  const VectorXd grad = xstd.transpose() * r / static_cast<double>(n);

  KktResidual out;
  for (Index j = 0; j < d; ++j) {
    if (beta_std(j) == 0.0) {
      out.max_zero_violation = std::max(
          out.max_zero_violation, std::abs(grad(j)) - model.chosen_lambda);
    } else {
      const double target = model.chosen_lambda * (beta_std(j) > 0 ? 1. : -1.);
      out.max_active_violation =
          std::max(out.max_active_violation, std::abs(grad(j) - target));
    }
  }
  return out;
}

}  // namespace rcpred::regress
