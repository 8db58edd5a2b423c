#pragma once

#include <mutex>
#include <stdexcept>
#include <string>
#include <sys/types.h>
#include <vector>

#include "igauss/target.hpp"

namespace igauss {

/// Failure of an external score oracle: spawn error, early exit or malformed reply (CLI exit code 3).
class OracleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Target evaluated by a child process speaking line-delimited JSON on stdin/stdout.
/// Request: {"x":[...]}; reply: {"logp":r,"score":[...]}. A batched request
/// {"x":[[...],...]} is answered by {"logp":[...],"score":[[...],...]}.
/// Calls are serialized, so one instance may be shared between threads.
class OracleTarget final : public TargetDistribution {
 public:
  OracleTarget(std::vector<std::string> command, Eigen::Index dim);
  ~OracleTarget() override;
  OracleTarget(const OracleTarget&) = delete;
  OracleTarget& operator=(const OracleTarget&) = delete;

  Eigen::Index dim() const override { return dim_; }
  double log_density(const Vector& x) const override;
  Vector score(const Vector& x) const override;
  double log_density_and_score(const Vector& x, Vector& score_out) const override;
  std::string name() const override { return "oracle(" + command_.front() + ")"; }

  /// One round trip for many points (rows of x).
  void evaluate_batch(const Matrix& x, Vector& logp, Matrix& scores) const;

 private:
  std::string exchange(const std::string& line) const;

  std::vector<std::string> command_;
  Eigen::Index dim_;
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  mutable std::string buffer_;
  mutable std::mutex mutex_;
};

}  // namespace igauss
