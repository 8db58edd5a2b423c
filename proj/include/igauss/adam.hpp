#pragma once

#include <cmath>

#include "igauss/types.hpp"

namespace igauss {

struct AdamOptions {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Vector first_moment;
  Vector second_moment;
  long step_count = 0;

  explicit AdamState(Eigen::Index n = 0)
      : first_moment(Vector::Zero(n)), second_moment(Vector::Zero(n)) {}
};

/// One bias-corrected Adam update minimizing the objective whose gradient is `grad`.
inline void adam_step(AdamState& state, Vector& params, const Vector& grad, const AdamOptions& opts) {
  require_dim(grad.size(), params.size(), "adam_step");
  if (state.first_moment.size() != params.size()) state = AdamState(params.size());
  ++state.step_count;
  state.first_moment = opts.beta1 * state.first_moment + (1.0 - opts.beta1) * grad;
  state.second_moment = opts.beta2 * state.second_moment + (1.0 - opts.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step_count));
  const double c2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step_count));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double m_hat = state.first_moment(i) / c1;
    const double v_hat = state.second_moment(i) / c2;
    params(i) -= opts.learning_rate * m_hat / (std::sqrt(v_hat) + opts.eps);
  }
}

}  // namespace igauss
