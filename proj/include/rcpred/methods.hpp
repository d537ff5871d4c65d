#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rcpred/core.hpp"
#include "rcpred/error.hpp"
#include "rcpred/mse_estimate.hpp"
#include "rcpred/regress.hpp"

namespace rcpred::methods {

using core::Index;
using core::MatrixXd;
using core::ObservationTable;
using core::TargetTreatment;
using core::VectorXd;

enum class MethodKind { TCR, PL, DR, DECISION };

inline const char* method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::TCR: return "TCR";
    case MethodKind::PL: return "PL";
    case MethodKind::DR: return "DR";
    case MethodKind::DECISION: return "DECISION";
  }
  return "?";
}

inline void check_clip_epsilon(double eps) {
  if (!(eps > 0.0 && eps < 0.5))
    throw InvalidArgument("clip_epsilon must lie in (0, 0.5)");
}

inline VectorXd clip_propensity(VectorXd p, double eps) {
  check_clip_epsilon(eps);
  return p.cwiseMax(eps).cwiseMin(1.0 - eps);
}

// Outcome regression mu(v,z) fit among A == a, and propensity pi(v,z) fit on
// all rows by squared-error regression of the indicator 1{A=a}; propensity
// evaluations are clipped into [clip_epsilon, 1 - clip_epsilon].
struct NuisancePair {
  regress::FittedRegressor mu_hat;
  regress::FittedRegressor pi_hat;
  double clip_epsilon = 0.01;

  VectorXd mu(const MatrixXd& vz) const { return mu_hat.predict(vz); }
  VectorXd pi(const MatrixXd& vz) const {
    return clip_propensity(pi_hat.predict(vz), clip_epsilon);
  }
};

// Counterfactual predictor over V (for DECISION, over (V,Z)): the arithmetic
// mean of the fold models' predictions.
struct PredictionModel {
  MethodKind method = MethodKind::TCR;
  std::vector<regress::FittedRegressor> fold_models;
  bool uses_hidden = false;  // DECISION consumes (V,Z)

  VectorXd predict(const MatrixXd& v) const {
    if (fold_models.empty())
      throw InvalidArgument("PredictionModel: no fold models");
    if (uses_hidden)
      throw InvalidArgument(
          "PredictionModel: this model needs (V,Z); predict from a table");
    VectorXd sum = fold_models.front().predict(v);
    for (std::size_t i = 1; i < fold_models.size(); ++i)
      sum += fold_models[i].predict(v);
    return sum / static_cast<double>(fold_models.size());
  }

  VectorXd predict(const ObservationTable& table) const {
    if (!uses_hidden) return predict(table.v);
    const MatrixXd vz = table.vz();
    VectorXd sum = fold_models.front().predict(vz);
    for (std::size_t i = 1; i < fold_models.size(); ++i)
      sum += fold_models[i].predict(vz);
    return sum / static_cast<double>(fold_models.size());
  }
};

// Bias-corrected regressand for the second stage:
//   1{A=a}/pi * (y - mu) + mu
struct PseudoOutcomeRow {
  double value = 0.0;
};

inline PseudoOutcomeRow dr_pseudo_outcome(double y, int a_obs,
                                          TargetTreatment a, double mu_val,
                                          double pi_val) {
  // pi = 1 is allowed (unit inverse weight); pi <= 0 or > 1 means the caller
  // skipped clipping.
  if (!(pi_val > 0.0 && pi_val <= 1.0))
    throw InvalidArgument(
        "dr_pseudo_outcome: pi must lie in (0,1]; clip upstream");
  if (a_obs != a.a) return {mu_val};
  return {mu_val + (y - mu_val) / pi_val};
}

inline VectorXd pseudo_outcomes(const ObservationTable& rows,
                                TargetTreatment a, const VectorXd& mu_vals,
                                const VectorXd& pi_vals) {
  VectorXd out(rows.n());
  for (Index i = 0; i < rows.n(); ++i)
    out(i) = dr_pseudo_outcome(rows.y(i), rows.a[static_cast<std::size_t>(i)],
                               a, mu_vals(i), pi_vals(i))
                 .value;
  return out;
}

// Regressor choices for the learner stages. eta (the error regression used by
// the joint procedure) falls back to the propensity spec when not overridden.
struct StageSpecs {
  regress::RegressorSpec mu;
  regress::RegressorSpec pi;
  regress::RegressorSpec second;
  std::optional<regress::RegressorSpec> eta;

  const regress::RegressorSpec& eta_spec() const {
    return eta ? *eta : pi;
  }
};

namespace detail {

inline ObservationTable treated_subset(const ObservationTable& table,
                                       TargetTreatment a,
                                       const std::string& context) {
  const auto idx = table.indices_with_treatment(a.a);
  if (idx.size() < 2)
    throw InsufficientData(context + ": fewer than 2 rows with a=" +
                           std::to_string(a.a));
  return table.rows(idx);
}

inline VectorXd indicator(const ObservationTable& table, TargetTreatment a) {
  VectorXd out(table.n());
  for (Index i = 0; i < table.n(); ++i)
    out(i) = table.a[static_cast<std::size_t>(i)] == a.a ? 1.0 : 0.0;
  return out;
}

inline std::vector<Index> concat(const std::vector<Index>& x,
                                 const std::vector<Index>& y) {
  std::vector<Index> out = x;
  out.insert(out.end(), y.begin(), y.end());
  return out;
}

}  // namespace detail

inline NuisancePair fit_nuisances(const ObservationTable& train,
                                  TargetTreatment a,
                                  const regress::RegressorSpec& spec_mu,
                                  const regress::RegressorSpec& spec_pi,
                                  double clip_epsilon) {
  check_clip_epsilon(clip_epsilon);
  const ObservationTable treated =
      detail::treated_subset(train, a, "fit_nuisances");
  NuisancePair pair;
  pair.clip_epsilon = clip_epsilon;
  pair.mu_hat = regress::fit_regressor(treated.vz(), treated.y, spec_mu);
  pair.pi_hat =
      regress::fit_regressor(train.vz(), detail::indicator(train, a), spec_pi);
  return pair;
}

// Treatment-conditional regression: Y ~ V among rows with A = a.
inline PredictionModel fit_tcr(const ObservationTable& train,
                               TargetTreatment a,
                               const regress::RegressorSpec& spec) {
  const ObservationTable treated = detail::treated_subset(train, a, "fit_tcr");
  PredictionModel model;
  model.method = MethodKind::TCR;
  model.fold_models.push_back(
      regress::fit_regressor(treated.v, treated.y, spec));
  return model;
}

// Plug-in learner without sample splitting: stage 1 fits mu on the treated
// rows, stage 2 regresses mu evaluated on all training rows against V.
inline PredictionModel fit_pl(const ObservationTable& train, TargetTreatment a,
                              const regress::RegressorSpec& spec_mu,
                              const regress::RegressorSpec& spec_second) {
  const ObservationTable treated = detail::treated_subset(train, a, "fit_pl");
  const auto mu_hat = regress::fit_regressor(treated.vz(), treated.y, spec_mu);
  const VectorXd stage2_target = mu_hat.predict(train.vz());
  PredictionModel model;
  model.method = MethodKind::PL;
  model.fold_models.push_back(
      regress::fit_regressor(train.v, stage2_target, spec_second));
  return model;
}

// Plug-in learner with cross-fitting over two partitions: for
// (p,q) in {(1,2),(2,1)}, mu is fit on partition p and the second stage on
// partition q; the prediction averages the two fold models.
inline PredictionModel fit_pl_crossfit(const ObservationTable& train,
                                       TargetTreatment a,
                                       const StageSpecs& specs,
                                       const core::FoldAssignment& folds_in) {
  if (folds_in.k != 2)
    throw InvalidArgument("fit_pl_crossfit: need exactly 2 folds");
  const auto folds = folds_in.fold_indices();
  PredictionModel model;
  model.method = MethodKind::PL;
  for (const auto [p, q] : {std::pair{0, 1}, std::pair{1, 0}}) {
    const ObservationTable part_p =
        train.rows(folds[static_cast<std::size_t>(p)]);
    const ObservationTable part_q =
        train.rows(folds[static_cast<std::size_t>(q)]);
    const ObservationTable treated = detail::treated_subset(
        part_p, a, "fit_pl_crossfit: partition " + std::to_string(p + 1));
    const auto mu_hat =
        regress::fit_regressor(treated.vz(), treated.y, specs.mu);
    const VectorXd stage2_target = mu_hat.predict(part_q.vz());
    model.fold_models.push_back(
        regress::fit_regressor(part_q.v, stage2_target, specs.second));
  }
  return model;
}

inline PredictionModel fit_pl_crossfit(const ObservationTable& train,
                                       TargetTreatment a,
                                       const StageSpecs& specs,
                                       std::uint64_t seed) {
  if (train.n() < 4)
    throw InsufficientData("fit_pl_crossfit: need n >= 4");
  return fit_pl_crossfit(train, a, specs,
                         core::split_folds(train.n(), 2, seed));
}

// Doubly-robust learner without sample splitting: nuisances on all rows,
// pseudo-outcomes for all rows, second stage on V.
inline PredictionModel fit_dr(const ObservationTable& train, TargetTreatment a,
                              const StageSpecs& specs, double clip_epsilon) {
  const NuisancePair nuis =
      fit_nuisances(train, a, specs.mu, specs.pi, clip_epsilon);
  const MatrixXd vz = train.vz();
  const VectorXd pseudo =
      pseudo_outcomes(train, a, nuis.mu(vz), nuis.pi(vz));
  PredictionModel model;
  model.method = MethodKind::DR;
  model.fold_models.push_back(
      regress::fit_regressor(train.v, pseudo, specs.second));
  return model;
}

// Doubly-robust learner with cross-fitting over three partitions and
// rotations {(1,2,3),(3,1,2),(2,3,1)}: mu on fold p, pi on fold q, second
// stage on fold r; the prediction averages the three fold models.
inline PredictionModel fit_dr_crossfit(const ObservationTable& train,
                                       TargetTreatment a,
                                       const StageSpecs& specs,
                                       double clip_epsilon,
                                       const core::FoldAssignment& folds_in) {
  check_clip_epsilon(clip_epsilon);
  if (folds_in.k != 3)
    throw InvalidArgument("fit_dr_crossfit: need exactly 3 folds");
  const auto folds = folds_in.fold_indices();
  constexpr int rotations[3][3] = {{0, 1, 2}, {2, 0, 1}, {1, 2, 0}};

  PredictionModel model;
  model.method = MethodKind::DR;
  for (const auto& rot : rotations) {
    const int p = rot[0], q = rot[1], r = rot[2];
    const std::string context =
        "fit_dr_crossfit: rotation (p=" + std::to_string(p + 1) +
        ",q=" + std::to_string(q + 1) + ",r=" + std::to_string(r + 1) + ")";
    const ObservationTable part_p =
        train.rows(folds[static_cast<std::size_t>(p)]);
    const ObservationTable part_q =
        train.rows(folds[static_cast<std::size_t>(q)]);
    const ObservationTable part_r =
        train.rows(folds[static_cast<std::size_t>(r)]);

    const ObservationTable treated = detail::treated_subset(
        part_p, a, context + " fold " + std::to_string(p + 1));
    const auto mu_hat =
        regress::fit_regressor(treated.vz(), treated.y, specs.mu);
    const auto pi_hat = regress::fit_regressor(
        part_q.vz(), detail::indicator(part_q, a), specs.pi);

    const MatrixXd vz_r = part_r.vz();
    const VectorXd mu_r = mu_hat.predict(vz_r);
    const VectorXd pi_r = clip_propensity(pi_hat.predict(vz_r), clip_epsilon);
    const VectorXd pseudo = pseudo_outcomes(part_r, a, mu_r, pi_r);
    model.fold_models.push_back(
        regress::fit_regressor(part_r.v, pseudo, specs.second));
  }
  return model;
}

inline PredictionModel fit_dr_crossfit(const ObservationTable& train,
                                       TargetTreatment a,
                                       const StageSpecs& specs,
                                       double clip_epsilon,
                                       std::uint64_t seed) {
  if (train.n() < 6)
    throw InsufficientData("fit_dr_crossfit: need n >= 6");
  return fit_dr_crossfit(train, a, specs, clip_epsilon,
                         core::split_folds(train.n(), 3, seed));
}

// Baseline that models the historical decision itself: regresses the
// treatment indicator on (V, Z).
inline PredictionModel fit_decision_model(const ObservationTable& train,
                                          const regress::RegressorSpec& spec) {
  PredictionModel model;
  model.method = MethodKind::DECISION;
  model.uses_hidden = true;
  VectorXd indicator(train.n());
  for (Index i = 0; i < train.n(); ++i)
    indicator(i) = static_cast<double>(train.a[static_cast<std::size_t>(i)]);
  model.fold_models.push_back(
      regress::fit_regressor(train.vz(), indicator, spec));
  return model;
}

struct JointResult {
  PredictionModel tcr;
  PredictionModel pl;
  PredictionModel dr;
  eval::MseEstimate mse_tcr;
  eval::MseEstimate mse_pl;
  eval::MseEstimate mse_dr;
};

// Joint cross-fitting procedure that learns and evaluates TCR, PL and DR from
// four partitions with rotations {(1,2,3,4),(4,1,2,3),(3,4,1,2),(2,3,4,1)}:
// per rotation, mu on fold p, pi on fold q, DR second stage on fold r, PL on
// r+q, TCR on r+q+p, error regressions on fold q, influence values on fold s.
inline JointResult fit_and_evaluate_joint(const ObservationTable& data,
                                          TargetTreatment a,
                                          const StageSpecs& specs,
                                          double clip_epsilon,
                                          const core::FoldAssignment& folds_in) {
  check_clip_epsilon(clip_epsilon);
  if (folds_in.k != 4)
    throw InvalidArgument("fit_and_evaluate_joint: need exactly 4 folds");
  const auto folds = folds_in.fold_indices();
  constexpr int rotations[4][4] = {
      {0, 1, 2, 3}, {3, 0, 1, 2}, {2, 3, 0, 1}, {1, 2, 3, 0}};

  JointResult result;
  result.tcr.method = MethodKind::TCR;
  result.pl.method = MethodKind::PL;
  result.dr.method = MethodKind::DR;

  std::vector<double> phi_tcr, phi_pl, phi_dr;
  phi_tcr.reserve(static_cast<std::size_t>(data.n()));
  phi_pl.reserve(static_cast<std::size_t>(data.n()));
  phi_dr.reserve(static_cast<std::size_t>(data.n()));

  for (const auto& rot : rotations) {
    const int p = rot[0], q = rot[1], r = rot[2], s = rot[3];
    const std::string context =
        "fit_and_evaluate_joint: rotation (p=" + std::to_string(p + 1) +
        ",q=" + std::to_string(q + 1) + ",r=" + std::to_string(r + 1) +
        ",s=" + std::to_string(s + 1) + ")";
    const ObservationTable part_p =
        data.rows(folds[static_cast<std::size_t>(p)]);
    const ObservationTable part_q =
        data.rows(folds[static_cast<std::size_t>(q)]);
    const ObservationTable part_r =
        data.rows(folds[static_cast<std::size_t>(r)]);
    const ObservationTable part_s =
        data.rows(folds[static_cast<std::size_t>(s)]);

    // Stage 1 nuisances.
    const ObservationTable treated_p = detail::treated_subset(
        part_p, a, context + " fold " + std::to_string(p + 1));
    const auto mu_hat =
        regress::fit_regressor(treated_p.vz(), treated_p.y, specs.mu);
    const auto pi_hat = regress::fit_regressor(
        part_q.vz(), detail::indicator(part_q, a), specs.pi);

    // Stage 2 learners.
    const MatrixXd vz_r = part_r.vz();
    const VectorXd pseudo = pseudo_outcomes(
        part_r, a, mu_hat.predict(vz_r),
        clip_propensity(pi_hat.predict(vz_r), clip_epsilon));
    result.dr.fold_models.push_back(
        regress::fit_regressor(part_r.v, pseudo, specs.second));

    const ObservationTable part_rq = data.rows(
        detail::concat(folds[static_cast<std::size_t>(r)],
                       folds[static_cast<std::size_t>(q)]));
    result.pl.fold_models.push_back(regress::fit_regressor(
        part_rq.v, mu_hat.predict(part_rq.vz()), specs.second));

    const ObservationTable part_rqp = data.rows(detail::concat(
        detail::concat(folds[static_cast<std::size_t>(r)],
                       folds[static_cast<std::size_t>(q)]),
        folds[static_cast<std::size_t>(p)]));
    const ObservationTable treated_rqp = detail::treated_subset(
        part_rqp, a, context + " folds r+q+p");
    result.tcr.fold_models.push_back(
        regress::fit_regressor(treated_rqp.v, treated_rqp.y, specs.second));

    // Evaluation: error regressions on fold q, influence values on fold s.
    const ObservationTable treated_q = detail::treated_subset(
        part_q, a, context + " fold " + std::to_string(q + 1));
    const MatrixXd vz_s = part_s.vz();
    const VectorXd pi_s = clip_propensity(pi_hat.predict(vz_s), clip_epsilon);

    const regress::FittedRegressor* fold_models[3] = {
        &result.tcr.fold_models.back(), &result.pl.fold_models.back(),
        &result.dr.fold_models.back()};
    std::vector<double>* phis[3] = {&phi_tcr, &phi_pl, &phi_dr};
    for (int m = 0; m < 3; ++m) {
      const VectorXd sq_err_q =
          (treated_q.y - fold_models[m]->predict(treated_q.v))
              .array()
              .square();
      const auto eta_hat = regress::fit_regressor(treated_q.vz(), sq_err_q,
                                                  specs.eta_spec());
      const VectorXd eta_s = eta_hat.predict(vz_s);
      const VectorXd nu_s = fold_models[m]->predict(part_s.v);
      for (Index j = 0; j < part_s.n(); ++j) {
        const double ind =
            part_s.a[static_cast<std::size_t>(j)] == a.a ? 1.0 : 0.0;
        const double sq = (part_s.y(j) - nu_s(j)) * (part_s.y(j) - nu_s(j));
        phis[m]->push_back(ind / pi_s(j) * (sq - eta_s(j)) + eta_s(j));
      }
    }
  }

  auto to_estimate = [](const std::vector<double>& phi, const char* name) {
    VectorXd values(static_cast<Index>(phi.size()));
    for (std::size_t i = 0; i < phi.size(); ++i)
      values(static_cast<Index>(i)) = phi[i];
    return eval::make_mse_estimate(std::move(values), name);
  };
  result.mse_tcr = to_estimate(phi_tcr, "TCR");
  result.mse_pl = to_estimate(phi_pl, "PL");
  result.mse_dr = to_estimate(phi_dr, "DR");
  return result;
}

inline JointResult fit_and_evaluate_joint(const ObservationTable& data,
                                          TargetTreatment a,
                                          const StageSpecs& specs,
                                          double clip_epsilon,
                                          std::uint64_t seed) {
  if (data.n() < 8)
    throw InsufficientData("fit_and_evaluate_joint: need n >= 8");
  return fit_and_evaluate_joint(data, a, specs, clip_epsilon,
                                core::split_folds(data.n(), 4, seed));
}

}  // namespace rcpred::methods
