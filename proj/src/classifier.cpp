// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/classifier.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "crafted/nn/layers.hpp"
#include "crafted/rng.hpp"

namespace crafted {
namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

void ClassifierArch::validate() const {
  if (image_channels < 1) throw std::invalid_argument("image_channels must be positive");
  if (image_size < 4 || image_size % 4) {
    throw std::invalid_argument("classifier image_size must be a positive multiple of 4");
  }
  if (channels < 1) throw std::invalid_argument("classifier channels must be positive");
  if (feature_dim < 1) throw std::invalid_argument("feature_dim must be positive");
  if (num_classes < 2) throw std::invalid_argument("classifier needs at least two classes");
}

Classifier::Classifier(ClassifierArch arch) : arch_(arch) {
  arch_.validate();
  const std::size_t c = sz(arch_.channels), k = nn::kKernel;
  const std::size_t flat = 2 * c * sz(arch_.image_size / 4) * sz(arch_.image_size / 4);
  params_.add("conv1.weight", {c, sz(arch_.image_channels), k, k});
  params_.add("conv1.bias", {c});
  params_.add("conv2.weight", {2 * c, c, k, k});
  params_.add("conv2.bias", {2 * c});
  params_.add("fc.weight", {sz(arch_.feature_dim), flat});
  params_.add("fc.bias", {sz(arch_.feature_dim)});
  params_.add("head.weight", {sz(arch_.num_classes), sz(arch_.feature_dim)});
  params_.add("head.bias", {sz(arch_.num_classes)});
}

Classifier Classifier::initialize(const ClassifierArch& arch, std::uint64_t seed) {
  Classifier model(arch);
  Rng rng(seed);
  for (std::size_t i = 0; i < model.params_.entries().size(); ++i) {
    const auto& e = model.params_.entry(i);
    if (e.shape.size() < 2) continue;
    const std::size_t fan_in = e.size / e.shape[0];
    rng.fill_normal(model.params_.view(i), 1.0 / std::sqrt(static_cast<double>(fan_in)));
  }
  return model;
}

void Classifier::check_input(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != sz(arch_.image_channels) ||
      images.dim(2) != sz(arch_.image_size) || images.dim(3) != sz(arch_.image_size)) {
    throw std::invalid_argument("classifier input must be [N, " +
                                std::to_string(arch_.image_channels) + ", " +
                                std::to_string(arch_.image_size) + ", " +
                                std::to_string(arch_.image_size) + "], got " +
                                shape_to_string(images.shape()));
  }
}

ClassifierOutput Classifier::forward(const Tensor& images, Cache* cache) const {
  check_input(images);
  const std::size_t c = sz(arch_.channels), n = images.dim(0);
  Cache local;
  Cache& k = cache ? *cache : local;
  k.input = Tensor(images.shape());
  for (std::size_t i = 0; i < images.numel(); ++i) k.input[i] = 2.0 * images[i] - 1.0;
  k.a1 = nn::conv2d(k.input, params_.view("conv1.weight"), params_.view("conv1.bias"), c);
  k.h1 = nn::silu(k.a1);
  k.p1 = nn::avg_pool2(k.h1);
  k.a2 = nn::conv2d(k.p1, params_.view("conv2.weight"), params_.view("conv2.bias"), 2 * c);
  k.h2 = nn::silu(k.a2);
  const Tensor p2 = nn::avg_pool2(k.h2);
  k.flat = p2.reshaped({n, p2.numel() / n});
  k.a3 = nn::linear(k.flat, params_.view("fc.weight"), params_.view("fc.bias"),
                    sz(arch_.feature_dim));
  k.features = nn::silu(k.a3);
  ClassifierOutput out;
  out.logits = nn::linear(k.features, params_.view("head.weight"), params_.view("head.bias"),
                          sz(arch_.num_classes));
  out.features = k.features;
  return out;
}

void Classifier::backward(const Cache& k, const Tensor& grad_logits,
                          std::span<double> param_grads, Tensor* grad_images) const {
  // Frozen-classifier callers pass an empty span; gradients land in scratch.
  std::vector<double> scratch;
  if (param_grads.empty()) {
    scratch.assign(params_.size(), 0.0);
    param_grads = scratch;
  }
  if (param_grads.size() != params_.size()) {
    throw std::invalid_argument("classifier backward: gradient buffer size mismatch");
  }
  auto grad = [&](const char* name) {
    const auto& e = params_.entry(name);
    return param_grads.subspan(e.offset, e.size);
  };
  const std::size_t c = sz(arch_.channels);

  Tensor dfeat, dflat, dp1, dinput;
  nn::linear_backward(k.features, params_.view("head.weight"), sz(arch_.num_classes),
                      grad_logits, grad("head.weight"), grad("head.bias"), &dfeat);
  const Tensor da3 = nn::silu_backward(k.a3, dfeat);
  nn::linear_backward(k.flat, params_.view("fc.weight"), sz(arch_.feature_dim), da3,
                      grad("fc.weight"), grad("fc.bias"), &dflat);
  const std::size_t q = sz(arch_.image_size / 4);
  const Tensor dp2 = dflat.reshaped({k.flat.dim(0), 2 * c, q, q});
  const Tensor da2 = nn::silu_backward(k.a2, nn::avg_pool2_backward(dp2));
  nn::conv2d_backward(k.p1, params_.view("conv2.weight"), 2 * c, da2, grad("conv2.weight"),
                      grad("conv2.bias"), &dp1);
  const Tensor da1 = nn::silu_backward(k.a1, nn::avg_pool2_backward(dp1));
  nn::conv2d_backward(k.input, params_.view("conv1.weight"), c, da1, grad("conv1.weight"),
                      grad("conv1.bias"), grad_images ? &dinput : nullptr);
  if (grad_images) {
    *grad_images = Tensor(dinput.shape());
    for (std::size_t i = 0; i < dinput.numel(); ++i) (*grad_images)[i] = 2.0 * dinput[i];
  }
}

ClassifierOutput classify(const Classifier& classifier, const Tensor& images) {
  return classifier.forward(images, nullptr);
}

std::vector<int> predicted_labels(const Tensor& logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < c; ++j) {
      if (logits[i * c + j] > logits[i * c + best]) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace crafted
