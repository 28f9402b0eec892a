// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>

#include "crafted/params.hpp"
#include "crafted/tensor.hpp"

namespace crafted {

struct ClassifierArch {
  int image_channels = 1;
  int image_size = 16;
  int channels = 8;
  int feature_dim = 64;
  int num_classes = 3;

  void validate() const;
  friend bool operator==(const ClassifierArch&, const ClassifierArch&) = default;
};

struct ClassifierOutput {
  Tensor logits;    // [N, num_classes]
  Tensor features;  // [N, feature_dim], penultimate activations
};

/// Small convolutional image classifier.
///
/// Input images are in [0, 1]; the [0, 1] -> [-1, 1] preprocessing sits
/// inside the differentiable path.
class Classifier {
 public:
  struct Cache {
    Tensor input, a1, h1, p1, a2, h2, flat, a3, features;
  };

  explicit Classifier(ClassifierArch arch);
  static Classifier initialize(const ClassifierArch& arch, std::uint64_t seed);

  const ClassifierArch& arch() const { return arch_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  ClassifierOutput forward(const Tensor& images, Cache* cache = nullptr) const;

  /// Back-propagates d(loss)/d(logits). Parameter gradients are accumulated
  /// into param_grads when it is non-empty; d(loss)/d(images) goes to grad_images.
  void backward(const Cache& cache, const Tensor& grad_logits, std::span<double> param_grads,
                Tensor* grad_images) const;

 private:
  void check_input(const Tensor& images) const;

  ClassifierArch arch_;
  ParameterSet params_;
};

/// Logits and penultimate features of a batch of [0, 1] images.
ClassifierOutput classify(const Classifier& classifier, const Tensor& images);

/// Argmax per row of a [N, C] logits tensor.
std::vector<int> predicted_labels(const Tensor& logits);

}  // namespace crafted
