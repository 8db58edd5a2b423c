#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "igauss/experiments.hpp"
#include "igauss/oracle.hpp"

namespace {

enum ExitCode { kOk = 0, kInternal = 1, kConfig = 2, kOracle = 3 };

struct CommonFlags {
  std::string config;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<long> replicates;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Configuration JSON (defaults apply to missing fields)");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--seed", f.seed, "Base seed");
  cmd->add_option("--replicates", f.replicates, "Number of replicates");
  cmd->add_option("--threads", f.threads, "Worker threads");
}

igauss::RunConfig resolve(const CommonFlags& f, const std::string& experiment) {
  igauss::Json j = igauss::Json::object();
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw igauss::ConfigError("cannot open config file '" + f.config + "'");
    try {
      j = igauss::Json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw igauss::ConfigError("config file '" + f.config + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw igauss::ConfigError("config: expected a JSON object");
  }
  if (j.contains("experiment") && j["experiment"] != experiment) {
    throw igauss::ConfigError("config experiment '" + j["experiment"].dump() + "' does not match subcommand (" +
                              experiment + ")");
  }
  j["experiment"] = experiment;
  if (f.out) j["output_dir"] = *f.out;
  if (f.seed) j["seed"] = *f.seed;
  if (f.replicates) j["replicates"] = *f.replicates;
  if (f.threads) j["threads"] = *f.threads;
  return igauss::config_from_json(j);
}

void report(const igauss::RunConfig& c, const std::vector<std::string>& files) {
  std::cout << "config_hash=" << igauss::config_hash(c) << " seed=" << c.seed << "\n";
  for (const auto& f : files) std::cout << c.output_dir << "/" << f << "\n";
  std::cout << c.output_dir << "/manifest.json\n";
}

int run_sweep(const CommonFlags& f) {
  const igauss::RunConfig c = resolve(f, "gaussian_sweep");
  const auto rows = igauss::run_gaussian_sweep(c);
  const auto files = igauss::write_sweep_outputs(c, rows);
  igauss::write_manifest(c, files);
  report(c, files);
  return kOk;
}

int run_logistic(const CommonFlags& f) {
  const igauss::RunConfig c = resolve(f, "logistic");
  const auto result = igauss::run_logistic_experiment(c);
  const auto files = igauss::write_logistic_outputs(c, result);
  igauss::write_manifest(c, files);
  for (const auto& rep : result.replicates)
    for (const auto& v : rep.runs)
      if (!v.error.empty())
        std::cerr << "igauss: replicate " << rep.replicate << " variant " << v.variant << " failed: " << v.error << "\n";
  report(c, files);
  return kOk;
}

int run_custom(const CommonFlags& f) {
  const igauss::RunConfig c = resolve(f, "custom");
  const auto result = igauss::run_custom(c);
  const auto files = igauss::write_custom_outputs(c, result);
  igauss::write_manifest(c, files);
  report(c, files);
  return kOk;
}

int run_eval(const std::string& run_file, const CommonFlags& f, std::optional<long> eval_samples) {
  std::ifstream in(run_file);
  if (!in) throw igauss::ConfigError("cannot open run file '" + run_file + "'");
  igauss::Json j;
  try {
    j = igauss::Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw igauss::ConfigError("run file '" + run_file + "' is not valid JSON: " + e.what());
  }
  igauss::SavedRun saved = igauss::saved_run_from_json(j);
  igauss::RunConfig& c = saved.config;
  if (f.out) c.output_dir = *f.out;
  if (f.seed) c.seed = *f.seed;
  if (eval_samples) c.eval_samples = *eval_samples;
  c.validate();
  const auto rows = igauss::evaluate_saved_run(saved, igauss::evaluation_seed(c.seed), c.eval_samples);
  igauss::write_text_file(c.output_dir + "/metrics.csv", igauss::metrics_csv(c, rows));
  const std::vector<std::string> files{"metrics.csv"};
  igauss::write_manifest(c, files);
  report(c, files);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative Gaussianization: transport maps from score-based PCA rotations and mean-field VI"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(igauss::kLibraryVersion));

  CommonFlags sweep_flags, logistic_flags, run_flags, eval_flags;
  auto* sweep = app.add_subcommand("gaussian-sweep", "Iterations-to-threshold sweep on Gaussian targets");
  add_common(sweep, sweep_flags);
  auto* logistic = app.add_subcommand("logistic", "Bayesian logistic-regression study");
  add_common(logistic, logistic_flags);
  auto* run = app.add_subcommand("run", "Run on a built-in target or an external score oracle");
  add_common(run, run_flags);
  auto* eval = app.add_subcommand("eval", "Re-evaluate a saved run");
  std::string run_file;
  std::optional<long> eval_samples;
  eval->add_option("--run", run_file, "Saved run (chain JSON)")->required();
  eval->add_option("--out", eval_flags.out, "Output directory");
  eval->add_option("--seed", eval_flags.seed, "Evaluation seed");
  eval->add_option("--eval-samples", eval_samples, "Samples drawn from q for each metric");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    if (*sweep) return run_sweep(sweep_flags);
    if (*logistic) return run_logistic(logistic_flags);
    if (*run) return run_custom(run_flags);
    if (*eval) return run_eval(run_file, eval_flags, eval_samples);
  } catch (const igauss::ConfigError& e) {
    std::cerr << "igauss: config error: " << e.what() << "\n";
    return kConfig;
  } catch (const igauss::OracleError& e) {
    std::cerr << "igauss: oracle error: " << e.what() << "\n";
    return kOracle;
  } catch (const std::exception& e) {
    std::cerr << "igauss: error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
