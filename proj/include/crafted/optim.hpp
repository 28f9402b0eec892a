// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace crafted {

struct AdamWOptions {
  double learning_rate = 1e-3;
  double weight_decay = 1e-2;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment buffers; sized lazily on the first update.
struct AdamWState {
  std::vector<double> m;
  std::vector<double> v;
  std::int64_t step = 0;
};

/// Decoupled-weight-decay Adam step:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   theta <- theta - lr (m_hat / (sqrt(v_hat) + eps) + wd theta)
/// Decay pulls towards zero, not towards any reference point.
void adamw_update(std::span<double> params, std::span<const double> grads, AdamWState& state,
                  const AdamWOptions& options);

}  // namespace crafted
