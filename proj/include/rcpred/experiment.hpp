#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rcpred/core.hpp"
#include "rcpred/csv.hpp"
#include "rcpred/error.hpp"
#include "rcpred/eval.hpp"
#include "rcpred/methods.hpp"
#include "rcpred/parallel.hpp"
#include "rcpred/synth.hpp"

namespace rcpred::cli {

using core::Index;
using core::TargetTreatment;
using core::VectorXd;

// ---------------------------------------------------------------------------
// Config file format: flat key = value lines under [section] headers.
// '#' and ';' start comments. Recognized sections:
//   [dgp]               n, d_v, d_z, k_v, k_z, rho, misspecified, noise_scale,
//                       target
//   [experiment]        sweep, sweep_values, replicates, methods, train_n,
//                       test_n, clip_epsilon, seed, out, jobs, run_dr_mse,
//                       treatment
//   [coverage]          simulations, train_n, ground_truth_n, eval_test_n,
//                       use_oracle_model, clip_epsilon, seed, out, jobs,
//                       treatment
//   [regressor.mu] [regressor.pi] [regressor.second] [regressor.eta]
//                       family, lambda_grid, cv_folds, cv_seed, neighbors,
//                       standardize, feature_subset
// Every key can be overridden on the command line by a flag of the same
// dotted name, e.g. --dgp.k_z 30 or --experiment.replicates 5.
// ---------------------------------------------------------------------------

using KeyValueMap = std::map<std::string, std::string>;

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t");
  return s.substr(begin, end - begin + 1);
}

inline KeyValueMap parse_ini(std::istream& in) {
  KeyValueMap out;
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty())
        throw ConfigError("config line " + std::to_string(line_no) +
                          ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected key = value");
    if (section.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": key outside any [section]");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key");
    out[section + "." + key] = trim(line.substr(eq + 1));
  }
  return out;
}

// Typed accessors over the parsed keys; unconsumed keys are reported as
// config errors so typos do not silently keep defaults.
class ConfigBinder {
 public:
  explicit ConfigBinder(KeyValueMap values) : values_(std::move(values)) {}

  std::optional<std::string> take(const std::string& key) {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    consumed_.insert(key);
    return it->second;
  }

  std::string take_string(const std::string& key, std::string fallback) {
    if (auto v = take(key)) return *v;
    return fallback;
  }

  double take_double(const std::string& key, double fallback) {
    if (auto v = take(key)) return parse_number(key, *v);
    return fallback;
  }

  long take_long(const std::string& key, long fallback) {
    if (auto v = take(key)) {
      const double d = parse_number(key, *v);
      const long l = static_cast<long>(d);
      if (static_cast<double>(l) != d)
        throw ConfigError("config key " + key + ": expected an integer");
      return l;
    }
    return fallback;
  }

  std::uint64_t take_u64(const std::string& key, std::uint64_t fallback) {
    if (auto v = take(key)) {
      char* end = nullptr;
      const auto u = std::strtoull(v->c_str(), &end, 10);
      if (end == v->c_str() || *end != '\0')
        throw ConfigError("config key " + key + ": expected an integer");
      return u;
    }
    return fallback;
  }

  bool take_bool(const std::string& key, bool fallback) {
    if (auto v = take(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") return true;
      if (*v == "false" || *v == "0" || *v == "no") return false;
      throw ConfigError("config key " + key + ": expected true/false");
    }
    return fallback;
  }

  std::vector<double> take_double_list(const std::string& key) {
    std::vector<double> out;
    if (auto v = take(key)) {
      for (const auto& item : split_list(*v))
        out.push_back(parse_number(key, item));
    }
    return out;
  }

  // Accepts comma-separated indices and inclusive ranges like 0..199.
  std::vector<Index> take_index_list(const std::string& key) {
    std::vector<Index> out;
    if (auto v = take(key)) {
      for (const auto& item : split_list(*v)) {
        const auto dots = item.find("..");
        if (dots != std::string::npos) {
          const auto lo =
              static_cast<Index>(parse_number(key, item.substr(0, dots)));
          const auto hi =
              static_cast<Index>(parse_number(key, item.substr(dots + 2)));
          for (Index i = lo; i <= hi; ++i) out.push_back(i);
        } else {
          out.push_back(static_cast<Index>(parse_number(key, item)));
        }
      }
    }
    return out;
  }

  std::vector<std::string> take_string_list(const std::string& key) {
    if (auto v = take(key)) return split_list(*v);
    return {};
  }

  bool has_section(const std::string& section) const {
    const std::string prefix = section + ".";
    const auto it = values_.lower_bound(prefix);
    return it != values_.end() && it->first.rfind(prefix, 0) == 0;
  }

  void finish() const {
    std::string unknown;
    for (const auto& [key, value] : values_)
      if (consumed_.find(key) == consumed_.end())
        unknown += (unknown.empty() ? "" : ", ") + key;
    if (!unknown.empty())
      throw ConfigError("unknown config keys: " + unknown);
  }

 private:
  static std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string current;
    for (char ch : s) {
      if (ch == ',') {
        const auto t = trim(current);
        if (!t.empty()) out.push_back(t);
        current.clear();
      } else {
        current.push_back(ch);
      }
    }
    const auto t = trim(current);
    if (!t.empty()) out.push_back(t);
    return out;
  }

  static double parse_number(const std::string& key, const std::string& v) {
    char* end = nullptr;
    const double d = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
      throw ConfigError("config key " + key + ": cannot parse '" + v + "'");
    return d;
  }

  KeyValueMap values_;
  std::set<std::string> consumed_;
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

enum class MethodChoice { TCR, PL, PL_CF, DR, DR_CF, JOINT, DECISION };

inline const char* method_choice_name(MethodChoice m) {
  switch (m) {
    case MethodChoice::TCR: return "TCR";
    case MethodChoice::PL: return "PL";
    case MethodChoice::PL_CF: return "PL_CF";
    case MethodChoice::DR: return "DR";
    case MethodChoice::DR_CF: return "DR_CF";
    case MethodChoice::JOINT: return "JOINT";
    case MethodChoice::DECISION: return "DECISION";
  }
  return "?";
}

inline MethodChoice method_choice_from_name(const std::string& name) {
  for (MethodChoice m :
       {MethodChoice::TCR, MethodChoice::PL, MethodChoice::PL_CF,
        MethodChoice::DR, MethodChoice::DR_CF, MethodChoice::JOINT,
        MethodChoice::DECISION})
    if (name == method_choice_name(m)) return m;
  throw ConfigError("unknown method '" + name + "'");
}

struct ExperimentConfig {
  synth::DgpConfig dgp;  // template; n/seed are set per replicate
  std::string sweep = "none";  // none | k_z | d_v | rho
  std::vector<double> sweep_values;
  int replicates = 50;
  std::vector<MethodChoice> methods = {MethodChoice::TCR, MethodChoice::PL,
                                       MethodChoice::DR};
  methods::StageSpecs specs;
  double clip_epsilon = 0.01;
  Index train_n = 1000;
  Index test_n = 1000;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int jobs = 0;  // 0 = hardware concurrency
  bool run_dr_mse = false;
  TargetTreatment treatment{1};
};

struct CoverageConfig {
  synth::DgpConfig dgp;
  int simulations = 100;
  Index train_n = 1000;
  Index ground_truth_n = 10000;
  Index eval_test_n = 2000;
  bool use_oracle_model = false;
  methods::StageSpecs specs;
  double clip_epsilon = 0.01;
  std::string out_dir = ".";
  std::uint64_t seed = 1;
  int jobs = 0;
  TargetTreatment treatment{1};
};

inline regress::RegressorSpec bind_regressor(ConfigBinder& kv,
                                             const std::string& section) {
  regress::RegressorSpec spec;
  const std::string family = kv.take_string(section + ".family", "lasso");
  if (family == "lasso")
    spec.family = regress::Family::lasso;
  else if (family == "knn")
    spec.family = regress::Family::knn;
  else
    throw ConfigError(section + ".family must be lasso or knn");
  spec.lambda_grid = kv.take_double_list(section + ".lambda_grid");
  spec.cv_folds =
      static_cast<int>(kv.take_long(section + ".cv_folds", spec.cv_folds));
  spec.cv_seed = kv.take_u64(section + ".cv_seed", spec.cv_seed);
  spec.neighbors =
      static_cast<int>(kv.take_long(section + ".neighbors", spec.neighbors));
  spec.standardize = kv.take_bool(section + ".standardize", spec.standardize);
  spec.feature_subset = kv.take_index_list(section + ".feature_subset");
  regress::validate(spec);
  return spec;
}

inline synth::DgpConfig bind_dgp(ConfigBinder& kv) {
  synth::DgpConfig dgp;
  dgp.n = kv.take_long("dgp.n", dgp.n);
  dgp.d_v = kv.take_long("dgp.d_v", dgp.d_v);
  dgp.d_z = kv.take_long("dgp.d_z", dgp.d_z);
  dgp.k_v = static_cast<int>(kv.take_long("dgp.k_v", dgp.k_v));
  dgp.k_z = static_cast<int>(kv.take_long("dgp.k_z", dgp.k_z));
  dgp.rho = kv.take_double("dgp.rho", dgp.rho);
  dgp.seed = kv.take_u64("dgp.seed", dgp.seed);
  dgp.misspecified = kv.take_bool("dgp.misspecified", dgp.misspecified);
  dgp.noise_scale = kv.take_double("dgp.noise_scale", dgp.noise_scale);
  dgp.target = static_cast<int>(kv.take_long("dgp.target", dgp.target));
  return dgp;
}

inline methods::StageSpecs bind_specs(ConfigBinder& kv) {
  methods::StageSpecs specs;
  specs.mu = bind_regressor(kv, "regressor.mu");
  specs.pi = bind_regressor(kv, "regressor.pi");
  specs.second = bind_regressor(kv, "regressor.second");
  if (kv.has_section("regressor.eta"))
    specs.eta = bind_regressor(kv, "regressor.eta");
  return specs;
}

inline ExperimentConfig bind_experiment_config(ConfigBinder& kv) {
  ExperimentConfig config;
  config.dgp = bind_dgp(kv);
  config.specs = bind_specs(kv);
  config.sweep = kv.take_string("experiment.sweep", config.sweep);
  config.sweep_values = kv.take_double_list("experiment.sweep_values");
  config.replicates = static_cast<int>(
      kv.take_long("experiment.replicates", config.replicates));
  const auto method_names = kv.take_string_list("experiment.methods");
  if (!method_names.empty()) {
    config.methods.clear();
    for (const auto& name : method_names)
      config.methods.push_back(method_choice_from_name(name));
  }
  config.train_n = kv.take_long("experiment.train_n", config.train_n);
  config.test_n = kv.take_long("experiment.test_n", config.test_n);
  config.clip_epsilon =
      kv.take_double("experiment.clip_epsilon", config.clip_epsilon);
  config.seed = kv.take_u64("experiment.seed", config.seed);
  config.out_dir = kv.take_string("experiment.out", config.out_dir);
  config.jobs = static_cast<int>(kv.take_long("experiment.jobs", config.jobs));
  config.run_dr_mse =
      kv.take_bool("experiment.run_dr_mse", config.run_dr_mse);
  config.treatment = TargetTreatment(static_cast<int>(
      kv.take_long("experiment.treatment", config.treatment.a)));

  if (config.sweep != "none" && config.sweep != "k_z" &&
      config.sweep != "d_v" && config.sweep != "rho")
    throw ConfigError("experiment.sweep must be none, k_z, d_v or rho");
  if (config.sweep != "none" && config.sweep_values.empty())
    throw ConfigError("experiment.sweep_values must be set when sweeping");
  if (config.replicates < 1)
    throw ConfigError("experiment.replicates must be >= 1");
  if (config.methods.empty())
    throw ConfigError("experiment.methods must not be empty");
  return config;
}

inline CoverageConfig bind_coverage_config(ConfigBinder& kv) {
  CoverageConfig config;
  config.dgp = bind_dgp(kv);
  config.specs = bind_specs(kv);
  config.simulations = static_cast<int>(
      kv.take_long("coverage.simulations", config.simulations));
  config.train_n = kv.take_long("coverage.train_n", config.train_n);
  config.ground_truth_n =
      kv.take_long("coverage.ground_truth_n", config.ground_truth_n);
  config.eval_test_n =
      kv.take_long("coverage.eval_test_n", config.eval_test_n);
  config.use_oracle_model =
      kv.take_bool("coverage.use_oracle_model", config.use_oracle_model);
  config.clip_epsilon =
      kv.take_double("coverage.clip_epsilon", config.clip_epsilon);
  config.seed = kv.take_u64("coverage.seed", config.seed);
  config.out_dir = kv.take_string("coverage.out", config.out_dir);
  config.jobs = static_cast<int>(kv.take_long("coverage.jobs", config.jobs));
  config.treatment = TargetTreatment(static_cast<int>(
      kv.take_long("coverage.treatment", config.treatment.a)));
  if (config.simulations < 1)
    throw ConfigError("coverage.simulations must be >= 1");
  return config;
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

// Train and test draws share per-replicate seeds seed + replicate; the test
// seed adds a fixed offset so train and test never reuse a stream. Sweep
// values reuse the same replicate seeds, which pairs the comparisons.
inline constexpr std::uint64_t kTestSeedOffset = 1000000007ULL;

struct ResultRow {
  double sweep_value = 0.0;
  int replicate = 0;
  std::string method;
  std::string status = "ok";  // "ok" or "error: <message>"
  double oracle_mse = std::numeric_limits<double>::quiet_NaN();
  double dr_point = std::numeric_limits<double>::quiet_NaN();
  double dr_ci_lo = std::numeric_limits<double>::quiet_NaN();
  double dr_ci_hi = std::numeric_limits<double>::quiet_NaN();
};

struct TimingRow {
  double sweep_value = 0.0;
  int replicate = 0;
  std::string method;
  double seconds = 0.0;
};

struct ExperimentResult {
  std::vector<ResultRow> rows;
  std::vector<TimingRow> timings;  // wall time; excluded from determinism
};

// Applies one sweep value to the DGP template. Sweeping d_v keeps the total
// dimension d_v + d_z fixed, mirroring the fixed-d setups the sweep is for.
inline synth::DgpConfig apply_sweep(const synth::DgpConfig& base,
                                    const std::string& sweep, double value) {
  synth::DgpConfig dgp = base;
  if (sweep == "none") return dgp;
  if (sweep == "k_z") {
    dgp.k_z = static_cast<int>(value);
  } else if (sweep == "d_v") {
    const Index total = base.d_v + base.d_z;
    dgp.d_v = static_cast<Index>(value);
    dgp.d_z = total - dgp.d_v;
    if (dgp.d_z < 0)
      throw ConfigError("sweep d_v value exceeds total dimension");
  } else if (sweep == "rho") {
    dgp.rho = value;
  } else {
    throw ConfigError("unknown sweep '" + sweep + "'");
  }
  return dgp;
}

// Method names as they appear in result rows; JOINT contributes one row per
// learner it trains.
inline std::vector<std::string> result_method_names(
    const std::vector<MethodChoice>& methods) {
  std::vector<std::string> names;
  for (MethodChoice m : methods) {
    if (m == MethodChoice::JOINT) {
      names.push_back("JOINT_TCR");
      names.push_back("JOINT_PL");
      names.push_back("JOINT_DR");
    } else {
      names.push_back(method_choice_name(m));
    }
  }
  return names;
}

namespace detail {

inline methods::PredictionModel fit_choice(MethodChoice choice,
                                           const core::ObservationTable& train,
                                           TargetTreatment a,
                                           const methods::StageSpecs& specs,
                                           double clip_epsilon,
                                           std::uint64_t seed) {
  switch (choice) {
    case MethodChoice::TCR:
      return methods::fit_tcr(train, a, specs.second);
    case MethodChoice::PL:
      return methods::fit_pl(train, a, specs.mu, specs.second);
    case MethodChoice::PL_CF:
      return methods::fit_pl_crossfit(train, a, specs, seed);
    case MethodChoice::DR:
      return methods::fit_dr(train, a, specs, clip_epsilon);
    case MethodChoice::DR_CF:
      return methods::fit_dr_crossfit(train, a, specs, clip_epsilon, seed);
    case MethodChoice::DECISION:
      return methods::fit_decision_model(train, specs.pi);
    case MethodChoice::JOINT:
      break;
  }
  throw InvalidArgument("fit_choice: JOINT is expanded by the runner");
}

inline std::string sanitize_message(std::string message) {
  for (char& ch : message)
    if (ch == ',' || ch == '\n') ch = ';';
  return message;
}

}  // namespace detail

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  const std::vector<double> sweep_values = config.sweep == "none"
                                               ? std::vector<double>{0.0}
                                               : config.sweep_values;
  const auto method_names = result_method_names(config.methods);
  const std::size_t rows_per_cell = method_names.size();
  const std::size_t n_cells =
      sweep_values.size() * static_cast<std::size_t>(config.replicates);

  ExperimentResult result;
  result.rows.resize(n_cells * rows_per_cell);
  result.timings.resize(n_cells * rows_per_cell);

  parallel_for(n_cells, config.jobs, [&](std::size_t cell) {
    const std::size_t value_idx =
        cell / static_cast<std::size_t>(config.replicates);
    const int replicate =
        static_cast<int>(cell % static_cast<std::size_t>(config.replicates));
    const double sweep_value = sweep_values[value_idx];
    const std::size_t row0 = cell * rows_per_cell;

    for (std::size_t m = 0; m < rows_per_cell; ++m) {
      auto& row = result.rows[row0 + m];
      row.sweep_value = sweep_value;
      row.replicate = replicate;
      row.method = method_names[m];
      auto& timing = result.timings[row0 + m];
      timing.sweep_value = sweep_value;
      timing.replicate = replicate;
      timing.method = method_names[m];
    }

    const std::uint64_t train_seed =
        config.seed + static_cast<std::uint64_t>(replicate);
    const std::uint64_t test_seed = train_seed + kTestSeedOffset;

    synth::SyntheticDataset train, test;
    try {
      synth::DgpConfig dgp =
          apply_sweep(config.dgp, config.sweep, sweep_value);
      dgp.n = config.train_n;
      dgp.seed = train_seed;
      train = synth::generate_any(dgp);
      dgp.n = config.test_n;
      dgp.seed = test_seed;
      test = synth::generate_any(dgp);
    } catch (const Error& e) {
      for (std::size_t m = 0; m < rows_per_cell; ++m)
        result.rows[row0 + m].status =
            "error: " + detail::sanitize_message(e.what());
      return;
    }

    std::size_t out = 0;
    for (MethodChoice choice : config.methods) {
      const std::size_t out_start = out;
      const auto started = std::chrono::steady_clock::now();
      try {
        if (choice == MethodChoice::JOINT) {
          const auto joint = methods::fit_and_evaluate_joint(
              train.table, config.treatment, config.specs,
              config.clip_epsilon, train_seed);
          const methods::PredictionModel* models[3] = {&joint.tcr, &joint.pl,
                                                       &joint.dr};
          const eval::MseEstimate* estimates[3] = {
              &joint.mse_tcr, &joint.mse_pl, &joint.mse_dr};
          for (int j = 0; j < 3; ++j) {
            auto& row = result.rows[row0 + out];
            row.oracle_mse =
                eval::oracle_mse(models[j]->predict(test.table.v),
                                 test.nu_true);
            row.dr_point = estimates[j]->point;
            row.dr_ci_lo = estimates[j]->ci_lo;
            row.dr_ci_hi = estimates[j]->ci_hi;
            ++out;
          }
        } else {
          const auto model =
              detail::fit_choice(choice, train.table, config.treatment,
                                 config.specs, config.clip_epsilon,
                                 train_seed);
          auto& row = result.rows[row0 + out];
          row.oracle_mse =
              eval::oracle_mse(model.predict(test.table), test.nu_true);
          if (config.run_dr_mse) {
            const auto est = eval::dr_mse(
                test.table, model, config.treatment, config.specs.pi,
                config.specs.eta_spec(), config.clip_epsilon, test_seed);
            row.dr_point = est.point;
            row.dr_ci_lo = est.ci_lo;
            row.dr_ci_hi = est.ci_hi;
          }
          ++out;
        }
      } catch (const Error& e) {
        const std::size_t span = choice == MethodChoice::JOINT ? 3 : 1;
        for (std::size_t j = 0; j < span; ++j)
          result.rows[row0 + out_start + j].status =
              "error: " + detail::sanitize_message(e.what());
        out = out_start + span;
      }
      const double elapsed =
          std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                        started)
              .count();
      for (std::size_t j = out_start; j < out; ++j)
        result.timings[row0 + j].seconds =
            elapsed / static_cast<double>(out - out_start);
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Result file I/O and summaries
// ---------------------------------------------------------------------------

inline std::string na_or(double v) {
  return std::isnan(v) ? "NA" : csv::format_double(v);
}

inline void write_results_csv(const std::vector<ResultRow>& rows,
                              std::ostream& out) {
  out << "sweep_value,replicate,method,status,oracle_mse,dr_mse,"
         "dr_ci_lo,dr_ci_hi\n";
  for (const auto& row : rows)
    out << csv::format_double(row.sweep_value) << "," << row.replicate << ","
        << row.method << "," << row.status << "," << na_or(row.oracle_mse)
        << "," << na_or(row.dr_point) << "," << na_or(row.dr_ci_lo) << ","
        << na_or(row.dr_ci_hi) << "\n";
}

inline void write_timings_csv(const std::vector<TimingRow>& rows,
                              std::ostream& out) {
  out << "sweep_value,replicate,method,seconds\n";
  for (const auto& row : rows)
    out << csv::format_double(row.sweep_value) << "," << row.replicate << ","
        << row.method << "," << csv::format_double(row.seconds) << "\n";
}

inline std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DomainError("results: empty file");
  std::vector<ResultRow> rows;
  auto parse_na = [](const std::string& s) {
    return s == "NA" ? std::numeric_limits<double>::quiet_NaN()
                     : csv::parse_double(s);
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto fields = csv::split_line(line);
    if (fields.size() != 8)
      throw DomainError("results: expected 8 fields per row");
    ResultRow row;
    row.sweep_value = csv::parse_double(fields[0]);
    row.replicate = static_cast<int>(csv::parse_long(fields[1]));
    row.method = fields[2];
    row.status = fields[3];
    row.oracle_mse = parse_na(fields[4]);
    row.dr_point = parse_na(fields[5]);
    row.dr_ci_lo = parse_na(fields[6]);
    row.dr_ci_hi = parse_na(fields[7]);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DomainError("results: no rows");
  return rows;
}

struct SummaryRow {
  double sweep_value = 0.0;
  std::string method;
  int replicates_ok = 0;
  double mean_oracle_mse = std::numeric_limits<double>::quiet_NaN();
  double oracle_ci_half = std::numeric_limits<double>::quiet_NaN();
  double mean_dr_mse = std::numeric_limits<double>::quiet_NaN();
  double dr_ci_half = std::numeric_limits<double>::quiet_NaN();
};

// Per (sweep value, method): mean MSE across replicates with a 95% normal
// interval, mean +/- 1.96 sd / sqrt(R). A single replicate reports NA.
inline std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows) {
  std::vector<std::pair<double, std::string>> keys;
  std::map<std::pair<double, std::string>, std::vector<const ResultRow*>>
      groups;
  for (const auto& row : rows) {
    const auto key = std::make_pair(row.sweep_value, row.method);
    auto [it, inserted] = groups.try_emplace(key);
    if (inserted) keys.push_back(key);
    it->second.push_back(&row);
  }

  auto mean_and_half = [](const std::vector<double>& xs, double& mean,
                          double& half) {
    mean = std::numeric_limits<double>::quiet_NaN();
    half = std::numeric_limits<double>::quiet_NaN();
    if (xs.empty()) return;
    double sum = 0.0;
    for (double x : xs) sum += x;
    mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    half = 1.96 * sd / std::sqrt(static_cast<double>(xs.size()));
  };

  std::vector<SummaryRow> out;
  for (const auto& key : keys) {
    SummaryRow s;
    s.sweep_value = key.first;
    s.method = key.second;
    std::vector<double> oracle, dr;
    for (const ResultRow* row : groups[key]) {
      if (row->status != "ok") continue;
      if (!std::isnan(row->oracle_mse)) oracle.push_back(row->oracle_mse);
      if (!std::isnan(row->dr_point)) dr.push_back(row->dr_point);
    }
    s.replicates_ok = static_cast<int>(oracle.size());
    mean_and_half(oracle, s.mean_oracle_mse, s.oracle_ci_half);
    mean_and_half(dr, s.mean_dr_mse, s.dr_ci_half);
    out.push_back(std::move(s));
  }
  return out;
}

inline void write_summary_csv(const std::vector<SummaryRow>& rows,
                              std::ostream& out) {
  out << "sweep_value,method,replicates,mean_oracle_mse,oracle_ci_half,"
         "mean_dr_mse,dr_ci_half\n";
  for (const auto& s : rows)
    out << csv::format_double(s.sweep_value) << "," << s.method << ","
        << s.replicates_ok << "," << na_or(s.mean_oracle_mse) << ","
        << na_or(s.oracle_ci_half) << "," << na_or(s.mean_dr_mse) << ","
        << na_or(s.dr_ci_half) << "\n";
}

inline void write_summary_text(const std::vector<SummaryRow>& rows,
                               std::ostream& out) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%10s  %-10s %5s  %22s  %22s\n", "sweep",
                "method", "reps", "oracle MSE (95% CI)", "DR-est MSE (95% CI)");
  out << buf;
  auto cell = [](double mean, double half) {
    char s[64];
    if (std::isnan(mean)) {
      std::snprintf(s, sizeof(s), "%22s", "NA");
    } else if (std::isnan(half)) {
      std::snprintf(s, sizeof(s), "%12.4f %9s", mean, "(NA)");
    } else {
      std::snprintf(s, sizeof(s), "%12.4f +/- %6.4f", mean, half);
    }
    return std::string(s);
  };
  for (const auto& s : rows) {
    std::snprintf(buf, sizeof(buf), "%10.4g  %-10s %5d  %22s  %22s\n",
                  s.sweep_value, s.method.c_str(), s.replicates_ok,
                  cell(s.mean_oracle_mse, s.oracle_ci_half).c_str(),
                  cell(s.mean_dr_mse, s.dr_ci_half).c_str());
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Coverage study
// ---------------------------------------------------------------------------

struct MethodCoverage {
  std::string method;
  double true_mse = 0.0;  // true prediction error on the ground-truth set
  int covered = 0;        // CIs containing true_mse
  int lowest = 0;         // simulations ranking this method's estimate lowest
  double mean_estimate = 0.0;
};

struct CoverageReport {
  std::vector<MethodCoverage> methods;
  int simulations = 0;
};

// Fixes one trained model triple (TCR, PL, DR) on a single training draw,
// measures each model's true prediction error on one large ground-truth set,
// then repeatedly draws realistic test sets and runs the doubly-robust
// evaluation, counting CI coverage of the truth and which method ranks lowest.
inline CoverageReport coverage_study(const CoverageConfig& config) {
  synth::DgpConfig dgp = config.dgp;
  dgp.n = config.train_n;
  dgp.seed = config.seed;
  const auto train = synth::generate_any(dgp);

  dgp.n = config.ground_truth_n;
  dgp.seed = config.seed + kTestSeedOffset;
  const auto ground = synth::generate_any(dgp);

  struct Entry {
    std::string name;
    std::function<VectorXd(const core::MatrixXd&)> predict;
  };
  std::vector<Entry> entries;
  if (config.use_oracle_model) {
    const synth::DgpConfig oracle_dgp = dgp;
    entries.push_back({"ORACLE", [oracle_dgp](const core::MatrixXd& v) {
                         return synth::oracle_nu(oracle_dgp, v);
                       }});
  } else {
    auto tcr = methods::fit_tcr(train.table, config.treatment,
                                config.specs.second);
    auto pl = methods::fit_pl(train.table, config.treatment, config.specs.mu,
                              config.specs.second);
    auto dr = methods::fit_dr(train.table, config.treatment, config.specs,
                              config.clip_epsilon);
    for (auto&& [name, model] :
         {std::pair<std::string, methods::PredictionModel>{"TCR", tcr},
          {"PL", pl},
          {"DR", dr}})
      entries.push_back(
          {name, [model](const core::MatrixXd& v) { return model.predict(v); }});
  }

  CoverageReport report;
  report.simulations = config.simulations;
  std::vector<double> truths;
  for (const auto& entry : entries) {
    MethodCoverage cov;
    cov.method = entry.name;
    const VectorXd pred = entry.predict(ground.table.v);
    cov.true_mse = (ground.y_potential - pred).squaredNorm() /
                   static_cast<double>(ground.table.n());
    truths.push_back(cov.true_mse);
    report.methods.push_back(std::move(cov));
  }

  const auto n_methods = entries.size();
  std::vector<std::vector<double>> points(
      n_methods, std::vector<double>(config.simulations));
  std::vector<std::vector<bool>> covered(
      n_methods, std::vector<bool>(config.simulations));

  parallel_for(static_cast<std::size_t>(config.simulations), config.jobs,
               [&](std::size_t sim) {
                 synth::DgpConfig sim_dgp = config.dgp;
                 sim_dgp.n = config.eval_test_n;
                 sim_dgp.seed = config.seed + 2 * kTestSeedOffset +
                                static_cast<std::uint64_t>(sim);
                 const auto test = synth::generate_any(sim_dgp);
                 for (std::size_t m = 0; m < n_methods; ++m) {
                   const VectorXd pred = entries[m].predict(test.table.v);
                   const auto est = eval::dr_mse_for_predictions(
                       test.table, pred, entries[m].name, config.treatment,
                       config.specs.pi, config.specs.eta_spec(),
                       config.clip_epsilon, sim_dgp.seed);
                   points[m][sim] = est.point;
                   covered[m][sim] = est.ci_lo <= report.methods[m].true_mse &&
                                     report.methods[m].true_mse <= est.ci_hi;
                 }
               });

  for (std::size_t m = 0; m < n_methods; ++m) {
    double sum = 0.0;
    for (int sim = 0; sim < config.simulations; ++sim) {
      if (covered[m][static_cast<std::size_t>(sim)])
        ++report.methods[m].covered;
      sum += points[m][static_cast<std::size_t>(sim)];
    }
    report.methods[m].mean_estimate =
        sum / static_cast<double>(config.simulations);
  }
  for (int sim = 0; sim < config.simulations; ++sim) {
    std::size_t best = 0;
    for (std::size_t m = 1; m < n_methods; ++m)
      if (points[m][static_cast<std::size_t>(sim)] <
          points[best][static_cast<std::size_t>(sim)])
        best = m;
    ++report.methods[best].lowest;
  }
  return report;
}

inline void write_coverage_csv(const CoverageReport& report,
                               std::ostream& out) {
  out << "method,true_mse,covered,lowest,simulations,mean_estimate\n";
  for (const auto& m : report.methods)
    out << m.method << "," << csv::format_double(m.true_mse) << ","
        << m.covered << "," << m.lowest << "," << report.simulations << ","
        << csv::format_double(m.mean_estimate) << "\n";
}

inline void write_coverage_text(const CoverageReport& report,
                                std::ostream& out) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%-10s %12s %12s %10s %10s\n", "method",
                "true MSE", "mean est.", "covered", "lowest");
  out << buf;
  for (const auto& m : report.methods) {
    std::snprintf(buf, sizeof(buf), "%-10s %12.4f %12.4f %6d/%-4d %6d/%-4d\n",
                  m.method.c_str(), m.true_mse, m.mean_estimate, m.covered,
                  report.simulations, m.lowest, report.simulations);
    out << buf;
  }
}

}  // namespace rcpred::cli
