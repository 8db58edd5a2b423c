#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "igauss/diagnostics.hpp"
#include "igauss/serialization.hpp"

namespace igauss {

/// Invalid or unreadable configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr const char* kLibraryVersion = "0.1.0";
inline constexpr int kConfigVersion = 1;

/// Target selection for `run`/`eval`. Unused fields keep their defaults.
struct TargetSpec {
  enum class Kind { gaussian, logistic, oracle };
  Kind kind = Kind::gaussian;
  // gaussian: either explicit mean/covariance or a generated (dim, kappa) instance.
  Eigen::Index dim = 2;
  double kappa = 4.0;
  std::optional<Vector> mean;
  std::optional<Matrix> covariance;
  // logistic: explicit data, or benchmark synthetic data drawn from the seed.
  std::optional<Matrix> design;
  std::optional<Vector> labels;
  LogisticDataOptions data;
  // oracle: argv of the child process.
  std::vector<std::string> command;

  static std::string kind_name(Kind k);
};

struct LogisticExperimentOptions {
  LogisticDataOptions data;
  /// Reuse one dataset across replicates instead of drawing a new one per replicate.
  bool fixed_data = false;
  /// Iteration counts reported for the random-rotation iterative runs.
  std::vector<long> random_iterations{3, 5, 7};
  /// Iterations checked for the monotone reverse-KL property.
  long monotonicity_iterations = 5;
  long reference_samples = 2000;
  RwmOptions rwm;
};

struct RunConfig {
  enum class Experiment { gaussian_sweep, logistic, custom };
  Experiment experiment = Experiment::custom;

  std::uint64_t seed = 0;
  long replicates = 1;
  int threads = 1;
  std::string output_dir = "igauss-out";

  // gaussian_sweep
  std::vector<long> dims{2, 4, 8, 16};
  std::vector<double> kappas{4.0};
  std::vector<std::string> strategies{"pca", "random"};
  double kl_threshold = 0.01;

  // shared by logistic and custom runs
  RotationStrategy strategy = RotationStrategy::pca();
  MapFamily family = MapFamily::spline();
  MfviOptions mfvi;
  long iterations = 1;
  long eval_samples = 2000;
  double early_stop_eigen_threshold = 0.0;
  bool laplace = false;
  OptimizerOptions optimizer;

  LogisticExperimentOptions logistic;
  TargetSpec target;

  /// Throws ConfigError on any out-of-range value.
  void validate() const;
  GaussianizationOptions gaussianization_options() const;
  static std::string experiment_name(Experiment e);
};

/// Parse and validate; missing fields take their defaults. Unknown keys are rejected.
RunConfig config_from_json(const Json& j);
/// Complete serialization (every field, defaults included).
Json config_to_json(const RunConfig& c);
RunConfig load_config(const std::string& path);

Json target_spec_to_json(const TargetSpec& t);
TargetSpec target_spec_from_json(const Json& j);

/// 64-bit FNV-1a of the bytes.
std::uint64_t fnv1a64(const std::string& bytes);
/// Hash of the result-affecting configuration (excludes threads and output_dir), as 16 hex digits.
std::string config_hash(const RunConfig& c);

}  // namespace igauss
