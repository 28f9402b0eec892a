// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crafted/diffusion.hpp"
#include "crafted/params.hpp"
#include "crafted/tensor.hpp"

namespace crafted {

struct NoisePredictorArch {
  int image_channels = 1;
  int image_size = 16;
  int base_channels = 16;
  int embed_dim = 32;
  int num_classes = 3;

  void validate() const;
  friend bool operator==(const NoisePredictorArch&, const NoisePredictorArch&) = default;
};

/// Two-level conditional encoder-decoder predicting the noise in a latent.
///
/// The conditioning vector is SiLU(W sinusoid(t) + b + class_table[label]);
/// the class table has num_classes + 1 rows and the last one is the NULL
/// (unconditional) row. Layout:
///
///   conv_in -> down1.conv(+emb) -> pool -> down2.conv(+emb) -> pool
///           -> mid.conv1(+emb) -> mid.conv2
///           -> upsample, concat(down2) -> up2.conv
///           -> upsample, concat(down1) -> up1.conv -> conv_out
class NoisePredictor final : public NoiseModel {
 public:
  /// Activations kept for the backward pass.
  struct Cache {
    std::vector<int> rows;
    Tensor emb_in, emb_pre, emb;
    Tensor x, h0, a1, h1, p1, a2, h2, p2, a3, h3, a4, h4, m2, a5, h5, m1, a6, h6;
  };

  /// Zero parameters; use initialize() for a usable model.
  explicit NoisePredictor(NoisePredictorArch arch);
  static NoisePredictor initialize(const NoisePredictorArch& arch, std::uint64_t seed);

  const NoisePredictorArch& arch() const { return arch_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  Tensor predict_noise(const Tensor& x, std::span<const int> timesteps,
                       std::span<const int> labels) const override;
  Shape latent_shape() const override;

  Tensor forward(const Tensor& x, std::span<const int> timesteps, std::span<const int> labels,
                 Cache* cache) const;
  /// Accumulates d(loss)/d(params) into param_grads (flat, params() order).
  /// Writes d(loss)/d(x) into grad_input when given.
  void backward(const Cache& cache, const Tensor& grad_out, std::span<double> param_grads,
                Tensor* grad_input = nullptr) const;

  /// Row of the class table used for a label (kUnconditional maps to the NULL row).
  std::size_t class_row(int label) const;

 private:
  NoisePredictorArch arch_;
  ParameterSet params_;
};

}  // namespace crafted
