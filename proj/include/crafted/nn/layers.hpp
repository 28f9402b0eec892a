// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "crafted/tensor.hpp"

// Stateless layer kernels with explicit backward passes. Activations are
// [N, C, H, W]; dense inputs are [N, F]. Backward functions accumulate into
// the parameter-gradient spans they are given (+=), and overwrite grad inputs.
namespace crafted::nn {

inline constexpr std::size_t kKernel = 3;

/// 3x3 convolution, stride 1, zero padding 1. weight is [out, in, 3, 3].
Tensor conv2d(const Tensor& x, std::span<const double> weight, std::span<const double> bias,
              std::size_t out_channels);
void conv2d_backward(const Tensor& x, std::span<const double> weight, std::size_t out_channels,
                     const Tensor& grad_out, std::span<double> grad_weight,
                     std::span<double> grad_bias, Tensor* grad_x);

/// y = x W^T + b with weight [out, in].
Tensor linear(const Tensor& x, std::span<const double> weight, std::span<const double> bias,
              std::size_t out_features);
void linear_backward(const Tensor& x, std::span<const double> weight, std::size_t out_features,
                     const Tensor& grad_out, std::span<double> grad_weight,
                     std::span<double> grad_bias, Tensor* grad_x);

Tensor silu(const Tensor& x);
/// Uses the pre-activation input.
Tensor silu_backward(const Tensor& x, const Tensor& grad_out);

Tensor avg_pool2(const Tensor& x);
Tensor avg_pool2_backward(const Tensor& grad_out);

Tensor upsample2(const Tensor& x);
Tensor upsample2_backward(const Tensor& grad_out);

Tensor concat_channels(const Tensor& a, const Tensor& b);
void split_channels(const Tensor& grad, std::size_t channels_a, Tensor& grad_a, Tensor& grad_b);

/// Adds a per-sample channel bias [N, C] to [N, C, H, W] in place.
void add_channel_bias(Tensor& x, const Tensor& bias);
/// Sum of grad over spatial positions: [N, C, H, W] -> [N, C].
Tensor channel_bias_backward(const Tensor& grad_out);

Tensor add(const Tensor& a, const Tensor& b);
void add_inplace(Tensor& a, const Tensor& b);

/// Sinusoidal embedding of integer timesteps: [N] -> [N, dim] (sin half, cos half).
Tensor timestep_embedding(std::span<const int> timesteps, std::size_t dim);

}  // namespace crafted::nn
