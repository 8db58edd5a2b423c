#include "igauss/chain.hpp"

namespace igauss {

TransportLayer::TransportLayer(Rotation r, CoordinatewiseMap m) : rotation(std::move(r)), map(std::move(m)) {
  require_dim(map.dim(), rotation.dim(), "TransportLayer");
}

void TransportChain::push_back(TransportLayer layer) {
  if (dim_ == 0 && layers_.empty()) dim_ = layer.rotation.dim();
  require_dim(layer.rotation.dim(), dim_, "TransportChain::push_back");
  layers_.push_back(std::move(layer));
}

TransportChain TransportChain::prefix(std::size_t k) const {
  require(k <= layers_.size(), "TransportChain::prefix: k exceeds chain length");
  TransportChain out(dim_);
  for (std::size_t j = 0; j < k; ++j) out.layers_.push_back(layers_[j]);
  return out;
}

std::pair<Vector, double> TransportChain::push_forward(const Vector& z) const {
  require_dim(z.size(), dim_, "chain_push_forward");
  Vector x = z;
  double logdet = 0.0;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) {
    auto [y, ld] = it->map.forward(x);
    logdet += ld;
    x = it->rotation.apply(y, /*transpose=*/true);
  }
  return {x, logdet};
}

std::pair<Vector, double> TransportChain::pull_back(const Vector& x) const {
  require_dim(x.size(), dim_, "chain_pull_back");
  Vector z = x;
  double logdet = 0.0;
  for (const auto& layer : layers_) {
    auto [u, ld] = layer.map.inverse(layer.rotation.apply(z));
    logdet += ld;
    z = std::move(u);
  }
  return {z, logdet};
}

std::pair<Vector, double> chain_push_forward(const TransportChain& c, const Vector& z) { return c.push_forward(z); }
std::pair<Vector, double> chain_pull_back(const TransportChain& c, const Vector& x) { return c.pull_back(x); }

double pullback_log_density_and_score(const TransportChain& c, const TargetDistribution& base, const Vector& y,
                                      Vector& score_out) {
  require_dim(y.size(), base.dim(), "pullback_log_density");
  if (c.empty()) return base.log_density_and_score(y, score_out);
  require_dim(c.dim(), base.dim(), "pullback_log_density chain");

  const auto& layers = c.layers();
  const std::size_t k = layers.size();
  // Forward pass from y through layers k..1, keeping each map's local derivatives.
  std::vector<CoordEval> evals(k);
  Vector x = y;
  double logdet = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    const std::size_t j = k - 1 - t;
    evals[j] = layers[j].map.evaluate(x);
    logdet += evals[j].logdet();
    x = layers[j].rotation.apply(evals[j].y, /*transpose=*/true);
  }
  Vector g;
  const double lp = base.log_density_and_score(x, g);
  // Backward pass: layers 1..k.
  for (std::size_t j = 0; j < k; ++j) {
    const Vector gy = layers[j].rotation.apply(g);
    g = gy.cwiseProduct(evals[j].log_deriv.array().exp().matrix()) + evals[j].dlog_deriv_dx;
  }
  score_out = std::move(g);
  return lp + logdet;
}

double pullback_log_density(const TransportChain& c, const TargetDistribution& base, const Vector& y) {
  require_dim(y.size(), base.dim(), "pullback_log_density");
  if (c.empty()) return base.log_density(y);
  auto [x, logdet] = c.push_forward(y);
  return base.log_density(x) + logdet;
}

Vector pullback_score(const TransportChain& c, const TargetDistribution& base, const Vector& y) {
  Vector s;
  pullback_log_density_and_score(c, base, y, s);
  return s;
}

PullbackTarget::PullbackTarget(TransportChain chain, TargetPtr base) : chain_(std::move(chain)), base_(std::move(base)) {
  require(base_ != nullptr, "PullbackTarget: null base");
  if (!chain_.empty()) require_dim(chain_.dim(), base_->dim(), "PullbackTarget");
}

double PullbackTarget::log_density(const Vector& y) const { return pullback_log_density(chain_, *base_, y); }
Vector PullbackTarget::score(const Vector& y) const { return pullback_score(chain_, *base_, y); }
double PullbackTarget::log_density_and_score(const Vector& y, Vector& score_out) const {
  return pullback_log_density_and_score(chain_, *base_, y, score_out);
}

RotatedTarget::RotatedTarget(Rotation rotation, TargetPtr base) : rotation_(std::move(rotation)), base_(std::move(base)) {
  require(base_ != nullptr, "RotatedTarget: null base");
  require_dim(rotation_.dim(), base_->dim(), "RotatedTarget");
}

double RotatedTarget::log_density(const Vector& x) const { return base_->log_density(rotation_.apply(x, true)); }

Vector RotatedTarget::score(const Vector& x) const { return rotation_.apply(base_->score(rotation_.apply(x, true))); }

double RotatedTarget::log_density_and_score(const Vector& x, Vector& score_out) const {
  Vector s;
  const double lp = base_->log_density_and_score(rotation_.apply(x, true), s);
  score_out = rotation_.apply(s);
  return lp;
}

}  // namespace igauss
