// Command-line front end: config-driven simulation, fitting, evaluation and
// experiment sweeps. Exit codes: 0 success, 2 config error, 3 data error,
// 4 numerical failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rcpred/csv.hpp"
#include "rcpred/error.hpp"
#include "rcpred/eval.hpp"
#include "rcpred/experiment.hpp"
#include "rcpred/methods.hpp"
#include "rcpred/model_io.hpp"
#include "rcpred/synth.hpp"

namespace fs = std::filesystem;
using namespace rcpred;

namespace {

struct ConfigSource {
  std::string path;  // optional config file
  std::vector<std::pair<std::string, std::string>> overrides;

  cli::KeyValueMap load() const {
    cli::KeyValueMap map;
    if (!path.empty()) {
      std::ifstream in(path);
      if (!in) throw ConfigError("cannot open config file " + path);
      map = cli::parse_ini(in);
    }
    for (const auto& [key, value] : overrides) map[key] = value;
    return map;
  }
};

// Every config key gets a command-line flag of the same dotted name.
const std::vector<std::pair<std::string, std::vector<std::string>>>
    kConfigKeys = {
        {"dgp",
         {"n", "d_v", "d_z", "k_v", "k_z", "rho", "misspecified",
          "noise_scale", "target", "seed"}},
        {"experiment",
         {"sweep", "sweep_values", "replicates", "methods", "train_n",
          "test_n", "clip_epsilon", "seed", "out", "jobs", "run_dr_mse",
          "treatment"}},
        {"coverage",
         {"simulations", "train_n", "ground_truth_n", "eval_test_n",
          "use_oracle_model", "clip_epsilon", "seed", "out", "jobs",
          "treatment"}},
        {"regressor.mu",
         {"family", "lambda_grid", "cv_folds", "cv_seed", "neighbors",
          "standardize", "feature_subset"}},
        {"regressor.pi",
         {"family", "lambda_grid", "cv_folds", "cv_seed", "neighbors",
          "standardize", "feature_subset"}},
        {"regressor.second",
         {"family", "lambda_grid", "cv_folds", "cv_seed", "neighbors",
          "standardize", "feature_subset"}},
        {"regressor.eta",
         {"family", "lambda_grid", "cv_folds", "cv_seed", "neighbors",
          "standardize", "feature_subset"}},
};

void add_config_flags(CLI::App* cmd, ConfigSource* source,
                      const std::vector<std::string>& sections) {
  cmd->add_option("--config", source->path, "Config file (INI sections)");
  for (const auto& [section, keys] : kConfigKeys) {
    if (std::find(sections.begin(), sections.end(), section) ==
        sections.end())
      continue;
    for (const auto& key : keys) {
      const std::string full = section + "." + key;
      cmd->add_option_function<std::string>(
          "--" + full,
          [source, full](const std::string& value) {
            source->overrides.emplace_back(full, value);
          },
          "Override config key " + full);
    }
  }
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  out << contents;
}

std::string mse_csv(const eval::MseEstimate& est) {
  std::ostringstream out;
  out << est.method << "," << csv::format_double(est.point) << ","
      << csv::format_double(est.ci_lo) << "," << csv::format_double(est.ci_hi)
      << "," << est.n << "\n";
  return out.str();
}

int run_simulate(const ConfigSource& source, const std::string& out_dir) {
  cli::ConfigBinder kv(source.load());
  const synth::DgpConfig dgp = cli::bind_dgp(kv);
  kv.finish();
  const auto data = synth::generate_any(dgp);

  fs::create_directories(out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "data.csv");
    if (!out) throw Error("cannot write data.csv");
    csv::write_table(data.table, out);
  }
  {
    std::ofstream out(fs::path(out_dir) / "oracle.csv");
    if (!out) throw Error("cannot write oracle.csv");
    synth::write_sidecar(data, dgp, out);
  }
  std::cout << "wrote " << data.table.n() << " rows to " << out_dir
            << "/data.csv (+ oracle.csv)\n";
  return 0;
}

int run_fit(const ConfigSource& source, const std::string& data_path,
            const std::string& method, int treatment, double clip,
            std::uint64_t seed, const std::string& out_path) {
  cli::ConfigBinder kv(source.load());
  const methods::StageSpecs specs = cli::bind_specs(kv);
  kv.finish();

  const auto table = csv::read_table_file(data_path);
  const core::TargetTreatment a(treatment);

  if (method == "JOINT") {
    const auto joint =
        methods::fit_and_evaluate_joint(table, a, specs, clip, seed);
    fs::create_directories(out_path);
    model_io::write_model(joint.tcr, (fs::path(out_path) / "joint_tcr.model").string());
    model_io::write_model(joint.pl, (fs::path(out_path) / "joint_pl.model").string());
    model_io::write_model(joint.dr, (fs::path(out_path) / "joint_dr.model").string());
    std::string rows = "method,point,ci_lo,ci_hi,n\n";
    rows += mse_csv(joint.mse_tcr);
    rows += mse_csv(joint.mse_pl);
    rows += mse_csv(joint.mse_dr);
    write_file((fs::path(out_path) / "joint_mse.csv").string(), rows);
    std::cout << "wrote joint models and estimates to " << out_path << "\n";
    return 0;
  }

  const auto choice = cli::method_choice_from_name(method);
  const auto model =
      cli::detail::fit_choice(choice, table, a, specs, clip, seed);
  model_io::write_model(model, out_path);
  std::cout << "fit " << method << " on " << table.n() << " rows; model -> "
            << out_path << "\n";
  for (std::size_t f = 0; f < model.fold_models.size(); ++f) {
    const auto& m = model.fold_models[f];
    if (m.family == regress::Family::lasso)
      std::cout << "  fold " << f << ": lambda "
                << csv::format_double(m.chosen_lambda) << ", "
                << (m.coefficients.array() != 0.0).count()
                << " active coefficients\n";
  }
  return 0;
}

int run_evaluate(const ConfigSource& source, const std::string& data_path,
                 const std::string& model_path, int treatment, double clip,
                 std::uint64_t seed, const std::string& out_path) {
  cli::ConfigBinder kv(source.load());
  const methods::StageSpecs specs = cli::bind_specs(kv);
  kv.finish();

  const auto table = csv::read_table_file(data_path);
  const auto model = model_io::read_model(model_path);
  const auto est = eval::dr_mse(table, model, core::TargetTreatment(treatment),
                                specs.pi, specs.eta_spec(), clip, seed);
  const std::string contents = "method,point,ci_lo,ci_hi,n\n" + mse_csv(est);
  if (out_path.empty() || out_path == "-") {
    std::cout << contents;
  } else {
    write_file(out_path, contents);
    std::cout << est.method << " MSE " << csv::format_double(est.point)
              << " [" << csv::format_double(est.ci_lo) << ", "
              << csv::format_double(est.ci_hi) << "] -> " << out_path << "\n";
  }
  return 0;
}

int run_experiment_cmd(const ConfigSource& source) {
  cli::ConfigBinder kv(source.load());
  const cli::ExperimentConfig config = cli::bind_experiment_config(kv);
  kv.finish();

  const auto result = cli::run_experiment(config);
  fs::create_directories(config.out_dir);
  {
    std::ofstream out(fs::path(config.out_dir) / "results.csv");
    cli::write_results_csv(result.rows, out);
  }
  {
    std::ofstream out(fs::path(config.out_dir) / "timings.csv");
    cli::write_timings_csv(result.timings, out);
  }
  const auto summary = cli::summarize(result.rows);
  {
    std::ofstream out(fs::path(config.out_dir) / "summary.csv");
    cli::write_summary_csv(summary, out);
  }
  {
    std::ofstream out(fs::path(config.out_dir) / "summary.txt");
    cli::write_summary_text(summary, out);
  }
  cli::write_summary_text(summary, std::cout);
  std::cout << "results in " << config.out_dir << "/results.csv\n";
  return 0;
}

int run_coverage_cmd(const ConfigSource& source) {
  cli::ConfigBinder kv(source.load());
  const cli::CoverageConfig config = cli::bind_coverage_config(kv);
  kv.finish();

  const auto report = cli::coverage_study(config);
  fs::create_directories(config.out_dir);
  {
    std::ofstream out(fs::path(config.out_dir) / "coverage.csv");
    cli::write_coverage_csv(report, out);
  }
  {
    std::ofstream out(fs::path(config.out_dir) / "coverage.txt");
    cli::write_coverage_text(report, out);
  }
  cli::write_coverage_text(report, std::cout);
  return 0;
}

int run_report(const std::string& results_path, const std::string& out_dir) {
  std::ifstream in(results_path);
  if (!in) throw Error("cannot open " + results_path);
  const auto rows = cli::read_results_csv(in);
  const auto summary = cli::summarize(rows);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream csv_out(fs::path(out_dir) / "summary.csv");
    cli::write_summary_csv(summary, csv_out);
    std::ofstream txt_out(fs::path(out_dir) / "summary.txt");
    cli::write_summary_text(summary, txt_out);
  }
  cli::write_summary_text(summary, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Counterfactual prediction under runtime confounding: "
      "learners, doubly-robust evaluation and simulation studies"};
  app.require_subcommand(1);

  // simulate
  auto* simulate = app.add_subcommand(
      "simulate", "Generate a synthetic dataset (data.csv + oracle.csv)");
  ConfigSource sim_source;
  std::string sim_out = "sim_out";
  add_config_flags(simulate, &sim_source, {"dgp"});
  simulate->add_option("--out", sim_out, "Output directory");
  simulate->add_option_function<std::uint64_t>(
      "--seed",
      [&sim_source](std::uint64_t s) {
        sim_source.overrides.emplace_back("dgp.seed", std::to_string(s));
      },
      "Shortcut for --dgp.seed");

  // fit
  auto* fit = app.add_subcommand("fit", "Train a method on a CSV dataset");
  ConfigSource fit_source;
  std::string fit_data, fit_method = "DR", fit_out = "model.out";
  int fit_treatment = 1;
  double fit_clip = 0.01;
  std::uint64_t fit_seed = 1;
  add_config_flags(fit, &fit_source,
                   {"regressor.mu", "regressor.pi", "regressor.second",
                    "regressor.eta"});
  fit->add_option("--data", fit_data, "Training CSV")->required();
  fit->add_option("--method", fit_method,
                  "TCR|PL|PL_CF|DR|DR_CF|JOINT|DECISION");
  fit->add_option("--treatment", fit_treatment, "Target treatment (0 or 1)");
  fit->add_option("--clip", fit_clip, "Propensity clip epsilon");
  fit->add_option("--seed", fit_seed, "Seed for fold splits");
  fit->add_option("--out", fit_out, "Model output path (directory for JOINT)");

  // evaluate
  auto* evaluate = app.add_subcommand(
      "evaluate", "Doubly-robust MSE of a saved model on a test CSV");
  ConfigSource eval_source;
  std::string eval_data, eval_model, eval_out;
  int eval_treatment = 1;
  double eval_clip = 0.01;
  std::uint64_t eval_seed = 1;
  add_config_flags(evaluate, &eval_source,
                   {"regressor.mu", "regressor.pi", "regressor.second",
                    "regressor.eta"});
  evaluate->add_option("--data", eval_data, "Test CSV")->required();
  evaluate->add_option("--model", eval_model, "Saved model path")->required();
  evaluate->add_option("--treatment", eval_treatment,
                       "Target treatment (0 or 1)");
  evaluate->add_option("--clip", eval_clip, "Propensity clip epsilon");
  evaluate->add_option("--seed", eval_seed, "Seed for the evaluation split");
  evaluate->add_option("--out", eval_out, "Output CSV ('-' for stdout)");

  // experiment
  auto* experiment =
      app.add_subcommand("experiment", "Run a config-driven simulation sweep");
  ConfigSource exp_source;
  add_config_flags(experiment, &exp_source,
                   {"dgp", "experiment", "regressor.mu", "regressor.pi",
                    "regressor.second", "regressor.eta"});
  for (const auto& [flag, key] :
       std::vector<std::pair<std::string, std::string>>{
           {"--seed", "experiment.seed"},
           {"--out", "experiment.out"},
           {"--jobs", "experiment.jobs"},
           {"--treatment", "experiment.treatment"}})
    experiment->add_option_function<std::string>(
        flag,
        [&exp_source, key](const std::string& value) {
          exp_source.overrides.emplace_back(key, value);
        },
        "Shortcut for --" + key);

  // coverage
  auto* coverage = app.add_subcommand(
      "coverage", "Coverage study of the doubly-robust evaluation");
  ConfigSource cov_source;
  add_config_flags(coverage, &cov_source,
                   {"dgp", "coverage", "regressor.mu", "regressor.pi",
                    "regressor.second", "regressor.eta"});
  for (const auto& [flag, key] :
       std::vector<std::pair<std::string, std::string>>{
           {"--seed", "coverage.seed"},
           {"--out", "coverage.out"},
           {"--jobs", "coverage.jobs"},
           {"--treatment", "coverage.treatment"}})
    coverage->add_option_function<std::string>(
        flag,
        [&cov_source, key](const std::string& value) {
          cov_source.overrides.emplace_back(key, value);
        },
        "Shortcut for --" + key);

  // report
  auto* report =
      app.add_subcommand("report", "Summarize a results.csv into tables");
  std::string report_results, report_out;
  report->add_option("--results", report_results, "results.csv path")
      ->required();
  report->add_option("--out", report_out, "Output directory (optional)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim_source, sim_out);
    if (fit->parsed())
      return run_fit(fit_source, fit_data, fit_method, fit_treatment,
                     fit_clip, fit_seed, fit_out);
    if (evaluate->parsed())
      return run_evaluate(eval_source, eval_data, eval_model, eval_treatment,
                          eval_clip, eval_seed, eval_out);
    if (experiment->parsed()) return run_experiment_cmd(exp_source);
    if (coverage->parsed()) return run_coverage_cmd(cov_source);
    if (report->parsed()) return run_report(report_results, report_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
