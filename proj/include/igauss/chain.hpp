#pragma once

#include <memory>
#include <string>
#include <vector>

#include "igauss/coordinatewise.hpp"
#include "igauss/rotation.hpp"
#include "igauss/target.hpp"

namespace igauss {

/// One Gaussianization step: rotate, then apply a coordinatewise map.
struct TransportLayer {
  Rotation rotation;
  CoordinatewiseMap map;

  TransportLayer(Rotation r, CoordinatewiseMap m);
};

/// Ordered layers 1..k. Pushing forward applies x <- R_j^T F_j(x) for
/// j = k, ..., 1 starting from z, so the chain pushes gamma toward the target;
/// pulling back applies the inverse in the opposite order.
class TransportChain {
 public:
  TransportChain() = default;
  explicit TransportChain(Eigen::Index d) : dim_(d) {}

  Eigen::Index dim() const { return dim_; }
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  const std::vector<TransportLayer>& layers() const { return layers_; }
  const TransportLayer& layer(std::size_t j) const { return layers_.at(j); }

  void push_back(TransportLayer layer);
  void pop_back() { layers_.pop_back(); }
  /// Chain made of the first `k` layers.
  TransportChain prefix(std::size_t k) const;

  /// x = (R_1^T F_1 ... R_k^T F_k)(z), with the accumulated log|det|.
  std::pair<Vector, double> push_forward(const Vector& z) const;
  /// Inverse of push_forward; the log-det is that of the inverse map.
  std::pair<Vector, double> pull_back(const Vector& x) const;

 private:
  Eigen::Index dim_ = 0;
  std::vector<TransportLayer> layers_;
};

std::pair<Vector, double> chain_push_forward(const TransportChain& c, const Vector& z);
std::pair<Vector, double> chain_pull_back(const TransportChain& c, const Vector& x);

/// log p^(k)(y) = log p(G(y)) + log|det dG(y)| with G the chain's push-forward.
double pullback_log_density(const TransportChain& c, const TargetDistribution& base, const Vector& y);
Vector pullback_score(const TransportChain& c, const TargetDistribution& base, const Vector& y);
/// Both quantities with one pass through the chain.
double pullback_log_density_and_score(const TransportChain& c, const TargetDistribution& base, const Vector& y,
                                      Vector& score_out);

/// The transformed target p^(k) = (chain pull-back) # p as a TargetDistribution.
class PullbackTarget final : public TargetDistribution {
 public:
  PullbackTarget(TransportChain chain, TargetPtr base);

  Eigen::Index dim() const override { return base_->dim(); }
  double log_density(const Vector& y) const override;
  Vector score(const Vector& y) const override;
  double log_density_and_score(const Vector& y, Vector& score_out) const override;
  std::string name() const override { return "pullback(" + base_->name() + ")"; }

  const TransportChain& chain() const { return chain_; }

 private:
  TransportChain chain_;
  TargetPtr base_;
};

/// p_R(x) = p(R^T x).
class RotatedTarget final : public TargetDistribution {
 public:
  RotatedTarget(Rotation rotation, TargetPtr base);

  Eigen::Index dim() const override { return base_->dim(); }
  double log_density(const Vector& x) const override;
  Vector score(const Vector& x) const override;
  double log_density_and_score(const Vector& x, Vector& score_out) const override;
  std::string name() const override { return "rotated(" + base_->name() + ")"; }

 private:
  Rotation rotation_;
  TargetPtr base_;
};

}  // namespace igauss
