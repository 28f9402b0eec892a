// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/noise_predictor.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "crafted/nn/layers.hpp"
#include "crafted/rng.hpp"

namespace crafted {
namespace {

std::size_t sz(int v) { return static_cast<std::size_t>(v); }

}  // namespace

void NoisePredictorArch::validate() const {
  if (image_channels < 1) throw std::invalid_argument("image_channels must be positive");
  if (image_size < 4 || image_size % 4) {
    throw std::invalid_argument("image_size must be a positive multiple of 4");
  }
  if (base_channels < 1) throw std::invalid_argument("base_channels must be positive");
  if (embed_dim < 2 || embed_dim % 2) throw std::invalid_argument("embed_dim must be even");
  if (num_classes < 1) throw std::invalid_argument("num_classes must be positive");
}

NoisePredictor::NoisePredictor(NoisePredictorArch arch) : arch_(arch) {
  arch_.validate();
  const std::size_t cin = sz(arch_.image_channels), c = sz(arch_.base_channels);
  const std::size_t d = sz(arch_.embed_dim), k = nn::kKernel;
  params_.add("time_embed.weight", {d, d});
  params_.add("time_embed.bias", {d});
  params_.add("class_embed.weight", {sz(arch_.num_classes) + 1, d});
  params_.add("conv_in.weight", {c, cin, k, k});
  params_.add("conv_in.bias", {c});
  params_.add("down1.conv.weight", {c, c, k, k});
  params_.add("down1.conv.bias", {c});
  params_.add("down1.emb_proj.weight", {c, d});
  params_.add("down1.emb_proj.bias", {c});
  params_.add("down2.conv.weight", {2 * c, c, k, k});
  params_.add("down2.conv.bias", {2 * c});
  params_.add("down2.emb_proj.weight", {2 * c, d});
  params_.add("down2.emb_proj.bias", {2 * c});
  params_.add("mid.conv1.weight", {2 * c, 2 * c, k, k});
  params_.add("mid.conv1.bias", {2 * c});
  params_.add("mid.emb_proj.weight", {2 * c, d});
  params_.add("mid.emb_proj.bias", {2 * c});
  params_.add("mid.conv2.weight", {2 * c, 2 * c, k, k});
  params_.add("mid.conv2.bias", {2 * c});
  params_.add("up2.conv.weight", {2 * c, 4 * c, k, k});
  params_.add("up2.conv.bias", {2 * c});
  params_.add("up1.conv.weight", {c, 3 * c, k, k});
  params_.add("up1.conv.bias", {c});
  params_.add("conv_out.weight", {cin, c, k, k});
  params_.add("conv_out.bias", {cin});
}

NoisePredictor NoisePredictor::initialize(const NoisePredictorArch& arch, std::uint64_t seed) {
  NoisePredictor model(arch);
  Rng rng(seed);
  for (std::size_t i = 0; i < model.params_.entries().size(); ++i) {
    const auto& e = model.params_.entry(i);
    auto values = model.params_.view(i);
    if (e.name == "class_embed.weight") {
      rng.fill_normal(values, 1.0);
    } else if (e.shape.size() >= 2) {
      const std::size_t fan_in = e.size / e.shape[0];
      rng.fill_normal(values, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    }
  }
  return model;
}

Shape NoisePredictor::latent_shape() const {
  return {sz(arch_.image_channels), sz(arch_.image_size), sz(arch_.image_size)};
}

std::size_t NoisePredictor::class_row(int label) const {
  if (label == kUnconditional) return sz(arch_.num_classes);
  if (label < 0 || label >= arch_.num_classes) {
    throw std::out_of_range("class label " + std::to_string(label) + " outside [0, " +
                            std::to_string(arch_.num_classes) + ")");
  }
  return sz(label);
}

Tensor NoisePredictor::predict_noise(const Tensor& x, std::span<const int> timesteps,
                                     std::span<const int> labels) const {
  return forward(x, timesteps, labels, nullptr);
}

Tensor NoisePredictor::forward(const Tensor& x, std::span<const int> timesteps,
                               std::span<const int> labels, Cache* cache) const {
  const std::size_t c = sz(arch_.base_channels), d = sz(arch_.embed_dim);
  if (x.rank() != 4 || x.dim(1) != sz(arch_.image_channels) ||
      x.dim(2) != sz(arch_.image_size) || x.dim(3) != sz(arch_.image_size)) {
    throw std::invalid_argument("noise predictor input must be [N, " +
                                std::to_string(arch_.image_channels) + ", " +
                                std::to_string(arch_.image_size) + ", " +
                                std::to_string(arch_.image_size) + "], got " +
                                shape_to_string(x.shape()));
  }
  const std::size_t n = x.dim(0);
  if (timesteps.size() != n || labels.size() != n) {
    throw std::invalid_argument("noise predictor: timesteps/labels length must match batch");
  }

  Cache local;
  Cache& k = cache ? *cache : local;
  k.rows.resize(n);
  for (std::size_t i = 0; i < n; ++i) k.rows[i] = static_cast<int>(class_row(labels[i]));

  k.emb_in = nn::timestep_embedding(timesteps, d);
  k.emb_pre = nn::linear(k.emb_in, params_.view("time_embed.weight"),
                         params_.view("time_embed.bias"), d);
  const auto table = params_.view("class_embed.weight");
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = table.data() + sz(k.rows[i]) * d;
    for (std::size_t j = 0; j < d; ++j) k.emb_pre[i * d + j] += row[j];
  }
  k.emb = nn::silu(k.emb_pre);

  auto emb_bias = [&](const char* w, const char* b, std::size_t channels) {
    return nn::linear(k.emb, params_.view(w), params_.view(b), channels);
  };
  k.x = x;
  k.h0 = nn::conv2d(x, params_.view("conv_in.weight"), params_.view("conv_in.bias"), c);
  k.a1 = nn::conv2d(k.h0, params_.view("down1.conv.weight"), params_.view("down1.conv.bias"), c);
  nn::add_channel_bias(k.a1, emb_bias("down1.emb_proj.weight", "down1.emb_proj.bias", c));
  k.h1 = nn::silu(k.a1);
  k.p1 = nn::avg_pool2(k.h1);
  k.a2 = nn::conv2d(k.p1, params_.view("down2.conv.weight"), params_.view("down2.conv.bias"),
                    2 * c);
  nn::add_channel_bias(k.a2, emb_bias("down2.emb_proj.weight", "down2.emb_proj.bias", 2 * c));
  k.h2 = nn::silu(k.a2);
  k.p2 = nn::avg_pool2(k.h2);
  k.a3 = nn::conv2d(k.p2, params_.view("mid.conv1.weight"), params_.view("mid.conv1.bias"),
                    2 * c);
  nn::add_channel_bias(k.a3, emb_bias("mid.emb_proj.weight", "mid.emb_proj.bias", 2 * c));
  k.h3 = nn::silu(k.a3);
  k.a4 = nn::conv2d(k.h3, params_.view("mid.conv2.weight"), params_.view("mid.conv2.bias"),
                    2 * c);
  k.h4 = nn::silu(k.a4);
  k.m2 = nn::concat_channels(nn::upsample2(k.h4), k.h2);
  k.a5 = nn::conv2d(k.m2, params_.view("up2.conv.weight"), params_.view("up2.conv.bias"), 2 * c);
  k.h5 = nn::silu(k.a5);
  k.m1 = nn::concat_channels(nn::upsample2(k.h5), k.h1);
  k.a6 = nn::conv2d(k.m1, params_.view("up1.conv.weight"), params_.view("up1.conv.bias"), c);
  k.h6 = nn::silu(k.a6);
  return nn::conv2d(k.h6, params_.view("conv_out.weight"), params_.view("conv_out.bias"),
                    sz(arch_.image_channels));
}

void NoisePredictor::backward(const Cache& k, const Tensor& grad_out,
                              std::span<double> param_grads, Tensor* grad_input) const {
  if (param_grads.size() != params_.size()) {
    throw std::invalid_argument("noise predictor backward: gradient buffer size mismatch");
  }
  const std::size_t c = sz(arch_.base_channels), d = sz(arch_.embed_dim);
  const std::size_t n = k.x.dim(0);
  auto grad = [&](const char* name) {
    const auto& e = params_.entry(name);
    return param_grads.subspan(e.offset, e.size);
  };

  Tensor de(Shape{n, d}), de_part;
  auto emb_backward = [&](const char* w, const char* b, std::size_t channels, const Tensor& da) {
    nn::linear_backward(k.emb, params_.view(w), channels, nn::channel_bias_backward(da), grad(w),
                        grad(b), &de_part);
    nn::add_inplace(de, de_part);
  };

  Tensor dh6, dm1, dup1, dskip1, dm2, dup2, dskip2, dh3, dp2, dp1, dh0;
  nn::conv2d_backward(k.h6, params_.view("conv_out.weight"), sz(arch_.image_channels), grad_out,
                      grad("conv_out.weight"), grad("conv_out.bias"), &dh6);
  const Tensor da6 = nn::silu_backward(k.a6, dh6);
  nn::conv2d_backward(k.m1, params_.view("up1.conv.weight"), c, da6, grad("up1.conv.weight"),
                      grad("up1.conv.bias"), &dm1);
  nn::split_channels(dm1, 2 * c, dup1, dskip1);
  const Tensor da5 = nn::silu_backward(k.a5, nn::upsample2_backward(dup1));
  nn::conv2d_backward(k.m2, params_.view("up2.conv.weight"), 2 * c, da5,
                      grad("up2.conv.weight"), grad("up2.conv.bias"), &dm2);
  nn::split_channels(dm2, 2 * c, dup2, dskip2);
  const Tensor da4 = nn::silu_backward(k.a4, nn::upsample2_backward(dup2));
  nn::conv2d_backward(k.h3, params_.view("mid.conv2.weight"), 2 * c, da4,
                      grad("mid.conv2.weight"), grad("mid.conv2.bias"), &dh3);
  const Tensor da3 = nn::silu_backward(k.a3, dh3);
  nn::conv2d_backward(k.p2, params_.view("mid.conv1.weight"), 2 * c, da3,
                      grad("mid.conv1.weight"), grad("mid.conv1.bias"), &dp2);
  emb_backward("mid.emb_proj.weight", "mid.emb_proj.bias", 2 * c, da3);

  Tensor dh2 = nn::avg_pool2_backward(dp2);
  nn::add_inplace(dh2, dskip2);
  const Tensor da2 = nn::silu_backward(k.a2, dh2);
  nn::conv2d_backward(k.p1, params_.view("down2.conv.weight"), 2 * c, da2,
                      grad("down2.conv.weight"), grad("down2.conv.bias"), &dp1);
  emb_backward("down2.emb_proj.weight", "down2.emb_proj.bias", 2 * c, da2);

  Tensor dh1 = nn::avg_pool2_backward(dp1);
  nn::add_inplace(dh1, dskip1);
  const Tensor da1 = nn::silu_backward(k.a1, dh1);
  nn::conv2d_backward(k.h0, params_.view("down1.conv.weight"), c, da1,
                      grad("down1.conv.weight"), grad("down1.conv.bias"), &dh0);
  emb_backward("down1.emb_proj.weight", "down1.emb_proj.bias", c, da1);
  nn::conv2d_backward(k.x, params_.view("conv_in.weight"), c, dh0, grad("conv_in.weight"),
                      grad("conv_in.bias"), grad_input);

  const Tensor de_pre = nn::silu_backward(k.emb_pre, de);
  nn::linear_backward(k.emb_in, params_.view("time_embed.weight"), d, de_pre,
                      grad("time_embed.weight"), grad("time_embed.bias"), nullptr);
  auto table = grad("class_embed.weight");
  for (std::size_t i = 0; i < n; ++i) {
    double* row = table.data() + sz(k.rows[i]) * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += de_pre[i * d + j];
  }
}

}  // namespace crafted
