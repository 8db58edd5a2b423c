#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "igauss/adam.hpp"
#include "igauss/coordinatewise.hpp"
#include "igauss/random.hpp"
#include "igauss/target.hpp"

namespace igauss {

struct MfviOptions {
  long mc_batch = 1000;
  int steps = 100;
  double learning_rate = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  /// Halve the learning rate and restart once when the loss blows up.
  bool divergence_guard = true;

  void validate() const;
  AdamOptions adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

/// Training failure; carries the objective trace up to the failure.
class MfviError : public std::runtime_error {
 public:
  MfviError(const std::string& what, std::vector<double> trace) : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::vector<double> trace_;
};

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Batch mean of log gamma(z) - log|F'(z)| - log p(F(z)) over rows of z.
///
/// log gamma and log p are both unnormalized, so the value is
/// KL(F#gamma || p) + log Z_gamma - log Z_p; its negation is the ELBO up to
/// the same constant.
McEstimate reverse_kl_estimate(const CoordinatewiseMap& map, const TargetDistribution& target, const Matrix& z_batch);

/// Reparameterization gradient of reverse_kl_estimate with respect to the raw map parameters.
Vector reverse_kl_gradient(const CoordinatewiseMap& map, const TargetDistribution& target, const Matrix& z_batch);

/// Objective and gradient from one pass over the batch.
double reverse_kl_value_and_gradient(const CoordinatewiseMap& map, const TargetDistribution& target,
                                     const Matrix& z_batch, Vector& grad);

struct MfviResult {
  CoordinatewiseMap map;
  /// Objective before each Adam step.
  std::vector<double> loss_trace;
  double final_loss = 0.0;
  double learning_rate = 0.0;
  bool restarted = false;
};

/// Fits F in the family by minimizing reverse KL on one fixed batch of
/// opts.mc_batch standard normal draws (sample-average approximation),
/// starting from the identity map.
MfviResult train_mfvi(const TargetDistribution& target, const MapFamily& family, const MfviOptions& opts);

/// Binned Monte Carlo estimate of the projected Fisher information between
/// gamma and F^{-1}#p; zero exactly when gamma satisfies the mean-field
/// optimality condition for the transformed target.
McEstimate mf_optimality_residual(const CoordinatewiseMap& map, const TargetDistribution& target, long n_samples,
                                  RandomStream& rng);

inline constexpr int kResidualBins = 20;

}  // namespace igauss
