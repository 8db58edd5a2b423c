#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "igauss/config.hpp"

namespace igauss {

// ---- Gaussian iterations-to-threshold sweep -------------------------------

struct SweepRow {
  long d = 0;
  double kappa = 1.0;
  std::string strategy;
  SweepCell cell;
};

std::vector<SweepRow> run_gaussian_sweep(const RunConfig& config);
std::string sweep_csv(const RunConfig& config, const std::vector<SweepRow>& rows);

// ---- Logistic-regression study --------------------------------------------

inline constexpr const char* kVariantIdentity = "identity";
inline constexpr const char* kVariantRandom = "random";
inline constexpr const char* kVariantPca = "pca";
inline constexpr const char* kVariantRandomIter = "random_iter";

/// Common-random-number reverse-KL estimate of q^(k) (up to log Z) and its step change.
struct MonotonicityRow {
  long k = 0;
  double kl = 0.0;
  double kl_se = 0.0;
  double diff = 0.0;     // kl_k - kl_{k-1}
  double diff_se = 0.0;  // paired standard error of diff
};

struct VariantRun {
  std::string variant;
  std::optional<GaussianizationRun> run;
  std::string error;
};

struct LogisticReplicate {
  long replicate = 0;
  std::uint64_t seed = 0;
  TargetSpec data;  // explicit design and labels
  LaplaceResult laplace;
  std::vector<VariantRun> runs;
  std::vector<MetricsRecord> metrics;
  std::vector<MonotonicityRow> monotonicity;
};

struct LogisticResult {
  std::vector<LogisticReplicate> replicates;
};

LogisticResult run_logistic_experiment(const RunConfig& config);

// ---- Custom runs and evaluation -------------------------------------------

/// Materialized base target; generated targets become explicit so a saved run reloads without the seed.
struct BuiltTarget {
  TargetPtr target;
  TargetSpec spec;
};
BuiltTarget build_target(const TargetSpec& spec, RandomStream& rng);

/// A finished run together with everything needed to reload and re-evaluate it.
struct SavedRun {
  RunConfig config;
  std::string variant;
  long replicate = 0;
  std::uint64_t run_seed = 0;
  TargetSpec target;
  std::optional<Vector> shift;
  std::optional<Vector> scale;
  TransportChain chain{0};
  std::vector<IterationRecord> records;
};

Json saved_run_to_json(const SavedRun& s);
SavedRun saved_run_from_json(const Json& j);

/// Target in the coordinates the chain was trained in (standardized when a shift/scale is present).
TargetPtr working_target(const SavedRun& s);

struct CustomResult {
  SavedRun saved;
  std::vector<MetricsRecord> metrics;
};

CustomResult run_custom(const RunConfig& config);

/// Seed `run` uses for its metrics; `eval` with the same base seed reproduces them exactly.
std::uint64_t evaluation_seed(std::uint64_t base_seed);

/// Metrics for every prefix k = 0..K of a saved run, evaluated with `seed`.
std::vector<MetricsRecord> evaluate_saved_run(const SavedRun& s, std::uint64_t seed, long eval_samples);

// ---- Output ----------------------------------------------------------------

/// Comment line that opens every CSV: "# igauss <kind> v1 config_hash=<h> seed=<s>".
std::string csv_preamble(const std::string& kind, const RunConfig& config);
std::string metrics_csv(const RunConfig& config, const std::vector<MetricsRecord>& rows);
std::string monotonicity_csv(const RunConfig& config, const std::vector<std::pair<std::string, MonotonicityRow>>& rows);

/// Writes files under config.output_dir and returns their paths relative to it.
std::vector<std::string> write_sweep_outputs(const RunConfig& config, const std::vector<SweepRow>& rows);
std::vector<std::string> write_logistic_outputs(const RunConfig& config, const LogisticResult& result);
std::vector<std::string> write_custom_outputs(const RunConfig& config, const CustomResult& result);
void write_manifest(const RunConfig& config, const std::vector<std::string>& files);

/// Creates parent directories as needed.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace igauss
