#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "rcpred/core.hpp"
#include "rcpred/csv.hpp"
#include "rcpred/error.hpp"
#include "rcpred/methods.hpp"
#include "rcpred/mse_estimate.hpp"
#include "rcpred/regress.hpp"

namespace rcpred::eval {

using core::Index;
using core::MatrixXd;
using core::ObservationTable;
using core::TargetTreatment;
using core::VectorXd;

// Test hooks: when set, these replace the fitted propensity / error
// regressions inside dr_mse (the invariant checks in the test suite inject
// the true pi and eta here). Injected propensities are still clipped.
struct NuisanceOracles {
  std::function<VectorXd(const MatrixXd& v, const MatrixXd& z)> pi;
  std::function<VectorXd(const MatrixXd& v, const MatrixXd& z)> eta;
};

// Doubly-robust estimate of E[(Y^a - nu(V))^2] with cross-fitting over two
// partitions of the test data: on fold p fit the (clipped) propensity and the
// error regression eta ~ (Y - nu(V))^2 among A = a; on fold q compute the
// influence values phi; pool all of them into the point estimate and CI.
// `predictions` holds nu(V_i) for every test row.
inline MseEstimate dr_mse_for_predictions(
    const ObservationTable& test, const VectorXd& predictions,
    const std::string& method, TargetTreatment a,
    const regress::RegressorSpec& spec_pi,
    const regress::RegressorSpec& spec_eta, double clip_epsilon,
    std::uint64_t seed, const NuisanceOracles* oracles = nullptr) {
  methods::check_clip_epsilon(clip_epsilon);
  if (predictions.size() != test.n())
    throw DimensionError("dr_mse: predictions length != test rows");

  const auto folds = core::split_folds(test.n(), 2, seed).fold_indices();
  VectorXd phi(test.n());
  Index filled = 0;

  for (const auto [p, q] : {std::pair{0, 1}, std::pair{1, 0}}) {
    const auto& idx_p = folds[static_cast<std::size_t>(p)];
    const auto& idx_q = folds[static_cast<std::size_t>(q)];
    const ObservationTable part_p = test.rows(idx_p);
    const ObservationTable part_q = test.rows(idx_q);

    const auto treated_idx = part_p.indices_with_treatment(a.a);
    if (treated_idx.size() < 2)
      throw InsufficientData("dr_mse: fold " + std::to_string(p + 1) +
                             " has fewer than 2 rows with a=" +
                             std::to_string(a.a));

    VectorXd pi_q;
    if (oracles && oracles->pi) {
      pi_q = methods::clip_propensity(oracles->pi(part_q.v, part_q.z),
                                      clip_epsilon);
    } else {
      const auto pi_hat = regress::fit_regressor(
          part_p.vz(), methods::detail::indicator(part_p, a), spec_pi);
      pi_q = methods::clip_propensity(pi_hat.predict(part_q.vz()),
                                      clip_epsilon);
    }

    VectorXd eta_q;
    if (oracles && oracles->eta) {
      eta_q = oracles->eta(part_q.v, part_q.z);
    } else {
      const ObservationTable treated = part_p.rows(treated_idx);
      VectorXd pred_treated(treated.n());
      for (Index i = 0; i < treated.n(); ++i)
        pred_treated(i) = predictions(
            idx_p[static_cast<std::size_t>(treated_idx[static_cast<std::size_t>(i)])]);
      const VectorXd sq_err =
          (treated.y - pred_treated).array().square();
      const auto eta_hat =
          regress::fit_regressor(treated.vz(), sq_err, spec_eta);
      eta_q = eta_hat.predict(part_q.vz());
    }

    for (Index j = 0; j < part_q.n(); ++j) {
      const Index row = idx_q[static_cast<std::size_t>(j)];
      const double ind =
          part_q.a[static_cast<std::size_t>(j)] == a.a ? 1.0 : 0.0;
      const double err = test.y(row) - predictions(row);
      phi(filled++) =
          ind / pi_q(j) * (err * err - eta_q(j)) + eta_q(j);
    }
  }
  return make_mse_estimate(std::move(phi), method);
}

inline MseEstimate dr_mse(const ObservationTable& test,
                          const methods::PredictionModel& model,
                          TargetTreatment a,
                          const regress::RegressorSpec& spec_pi,
                          const regress::RegressorSpec& spec_eta,
                          double clip_epsilon, std::uint64_t seed,
                          const NuisanceOracles* oracles = nullptr) {
  return dr_mse_for_predictions(test, model.predict(test),
                                methods::method_name(model.method), a,
                                spec_pi, spec_eta, clip_epsilon, seed,
                                oracles);
}

// Mean squared deviation from the closed-form target, available in simulation.
inline double oracle_mse(const VectorXd& predictions,
                         const VectorXd& nu_true) {
  if (predictions.size() != nu_true.size())
    throw InvalidArgument("oracle_mse: length mismatch");
  return (predictions - nu_true).squaredNorm() /
         static_cast<double>(nu_true.size());
}

inline double oracle_mse(const methods::PredictionModel& model,
                         const MatrixXd& v, const VectorXd& nu_true) {
  if (v.rows() != nu_true.size())
    throw InvalidArgument("oracle_mse: length mismatch");
  return oracle_mse(model.predict(v), nu_true);
}

// Same against drawn potential outcomes; equals oracle_mse plus the noise
// variance in expectation.
inline double oracle_prediction_error(const methods::PredictionModel& model,
                                      const MatrixXd& v,
                                      const VectorXd& y_potential) {
  if (v.rows() != y_potential.size())
    throw InvalidArgument("oracle_prediction_error: length mismatch");
  return (model.predict(v) - y_potential).squaredNorm() /
         static_cast<double>(y_potential.size());
}

// Calibration-style diagnostic over equal-count bins of the predictions.
struct CalibrationReport {
  std::vector<double> bin_edges;  // size bins+1, partitioning the range
  std::vector<Index> counts;
  std::vector<double> mean_pred;
  std::vector<double> mean_true;
  std::vector<double> mean_sq_err;
};

// Quantile bins over the predictions. Cut points never split a run of tied
// prediction values, so a constant predictor collapses to a single bin;
// counts always sum to n and bin mean predictions are non-decreasing.
inline CalibrationReport calibration_bins(const VectorXd& predictions,
                                          const VectorXd& nu_true,
                                          int bins) {
  if (bins < 2) throw InvalidArgument("calibration_bins: need bins >= 2");
  if (predictions.size() != nu_true.size())
    throw InvalidArgument("calibration_bins: length mismatch");
  const Index n = predictions.size();
  if (n < bins)
    throw InvalidArgument("calibration_bins: fewer rows than bins");

  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) {
    if (predictions(a) != predictions(b))
      return predictions(a) < predictions(b);
    return a < b;
  });

  CalibrationReport report;
  report.bin_edges.push_back(predictions(order.front()));
  const Index base = n / bins;
  const Index remainder = n % bins;
  Index start = 0;
  for (int b = 0; b < bins && start < n; ++b) {
    Index stop = start + base + (b < remainder ? 1 : 0);
    if (stop > n) stop = n;
    // Do not split ties across bins.
    while (stop < n &&
           predictions(order[static_cast<std::size_t>(stop)]) ==
               predictions(order[static_cast<std::size_t>(stop - 1)]))
      ++stop;
    if (b == bins - 1) stop = n;
    if (stop <= start) continue;

    double sum_pred = 0.0, sum_true = 0.0, sum_sq = 0.0;
    for (Index i = start; i < stop; ++i) {
      const Index row = order[static_cast<std::size_t>(i)];
      sum_pred += predictions(row);
      sum_true += nu_true(row);
      const double e = predictions(row) - nu_true(row);
      sum_sq += e * e;
    }
    const auto count = static_cast<double>(stop - start);
    report.counts.push_back(stop - start);
    report.mean_pred.push_back(sum_pred / count);
    report.mean_true.push_back(sum_true / count);
    report.mean_sq_err.push_back(sum_sq / count);
    report.bin_edges.push_back(
        predictions(order[static_cast<std::size_t>(stop - 1)]));
    start = stop;
  }
  return report;
}

inline void write_calibration_csv(const CalibrationReport& report,
                                  std::ostream& out) {
  out << "bin,count,mean_pred,mean_true,mean_sq_err\n";
  for (std::size_t b = 0; b < report.counts.size(); ++b)
    out << b << "," << report.counts[b] << ","
        << csv::format_double(report.mean_pred[b]) << ","
        << csv::format_double(report.mean_true[b]) << ","
        << csv::format_double(report.mean_sq_err[b]) << "\n";
}

}  // namespace rcpred::eval
