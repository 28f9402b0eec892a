// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace crafted {

void adamw_update(std::span<double> params, std::span<const double> grads, AdamWState& state,
                  const AdamWOptions& options) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("adamw_update: params/grads length mismatch");
  }
  if (state.step == 0 && state.m.empty() && state.v.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adamw_update: optimizer state length mismatch");
  }
  ++state.step;
  const double b1 = options.beta1, b2 = options.beta2;
  const double bias1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
    state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
    const double m_hat = state.m[i] / bias1;
    const double v_hat = state.v[i] / bias2;
    params[i] -= options.learning_rate *
                 (m_hat / (std::sqrt(v_hat) + options.eps) + options.weight_decay * params[i]);
  }
}

}  // namespace crafted
