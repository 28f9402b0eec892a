// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "crafted/tensor.hpp"

// Deterministic DDIM machinery in pixel space. Latents live in [-1, 1];
// finished samples are remapped to [0, 1].
namespace crafted {

/// Beta sequence and cumulative products. alphas_cumprod()[0] is 1 so that
/// timestep 0 denotes the clean image; betas()[i - 1] is the beta of step i.
class NoiseSchedule {
 public:
  static NoiseSchedule linear(int num_train_steps, double beta_start, double beta_end);
  static NoiseSchedule from_betas(std::vector<double> betas);

  int num_train_steps() const { return static_cast<int>(betas_.size()); }
  const std::vector<double>& betas() const { return betas_; }
  const std::vector<double>& alphas_cumprod() const { return alphas_cumprod_; }
  double alpha_cumprod(int t) const;

 private:
  explicit NoiseSchedule(std::vector<double> betas);

  std::vector<double> betas_;
  std::vector<double> alphas_cumprod_;
};

/// Decreasing inference timesteps; the last transition always targets 0.
/// The final grad_split_k entries form the gradient-enabled phase.
struct InferencePlan {
  std::vector<int> timesteps;
  int grad_split_k = 0;

  /// Trailing spacing: steps timesteps from num_train_steps down to num_train_steps/steps.
  static InferencePlan evenly_spaced(const NoiseSchedule& schedule, int steps, int grad_split_k);

  void validate(const NoiseSchedule& schedule) const;
  std::size_t size() const { return timesteps.size(); }
  /// Timestep reached after step i (0 after the last step).
  int target(std::size_t i) const { return i + 1 < timesteps.size() ? timesteps[i + 1] : 0; }
  /// Index of the first gradient-phase step.
  std::size_t grad_phase_begin() const { return timesteps.size() - static_cast<std::size_t>(grad_split_k); }
};

/// Label used for the unconditional (NULL) branch.
inline constexpr int kUnconditional = -1;

struct Conditioning {
  int class_index = kUnconditional;
  double guidance_scale = 3.0;

  bool unconditional() const { return class_index == kUnconditional; }
};

/// Anything that predicts noise for a batch of latents.
class NoiseModel {
 public:
  virtual ~NoiseModel() = default;
  /// x is [N, C, H, W]; timesteps and labels have length N. Labels may be kUnconditional.
  virtual Tensor predict_noise(const Tensor& x, std::span<const int> timesteps,
                               std::span<const int> labels) const = 0;
  /// Shape of one latent, [C, H, W].
  virtual Shape latent_shape() const = 0;
};

/// sqrt(abar_t) x0 + sqrt(1 - abar_t) noise.
Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& noise, const NoiseSchedule& schedule);

/// (x_t - sqrt(1 - abar_t) eps) / sqrt(abar_t); requires t >= 1.
Tensor predict_x0(const Tensor& x_t, const Tensor& eps_pred, int t, const NoiseSchedule& schedule);

/// Deterministic DDIM transition from t to t_prev < t.
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev,
                 const NoiseSchedule& schedule);

/// DDIM transition expressed directly in cumulative alphas.
Tensor ddim_update(const Tensor& x_t, const Tensor& eps_pred, double alpha_t, double alpha_prev);

/// Linear coefficients of an affine map out = x_coeff * x_t + eps_coeff * eps.
struct AffineCoefficients {
  double x_coeff = 0.0;
  double eps_coeff = 0.0;
};
AffineCoefficients predict_x0_coefficients(int t, const NoiseSchedule& schedule);
AffineCoefficients ddim_step_coefficients(int t, int t_prev, const NoiseSchedule& schedule);

/// eps_uncond + scale (eps_cond - eps_uncond).
Tensor combine_guidance(const Tensor& eps_cond, const Tensor& eps_uncond, double scale);

/// Model-call layout behind guided_eps. A guided call stacks the conditional
/// items first and the unconditional items second in one doubled batch.
struct GuidanceBatch {
  Tensor x;
  std::vector<int> timesteps;
  std::vector<int> labels;
  bool doubled = false;
};
GuidanceBatch make_guidance_batch(const Tensor& x_t, int t, const Conditioning& cond);
/// Reduces the model output for a GuidanceBatch to the guided prediction.
Tensor finish_guidance(const Tensor& eps_batch, const GuidanceBatch& batch, double scale);
/// Adjoint of finish_guidance: maps d/d(guided eps) to d/d(model output).
Tensor finish_guidance_backward(const Tensor& grad_eps, const GuidanceBatch& batch, double scale);

/// Classifier-free guided noise prediction for a batch sharing one conditioning.
Tensor guided_eps(const NoiseModel& model, const Tensor& x_t, int t, const Conditioning& cond);

/// Standard normal latent drawn from its own seed.
Tensor initial_latent(const Shape& latent_shape, std::uint64_t seed);

/// [-1, 1] -> [0, 1], clamped.
Tensor to_image(const Tensor& x);

/// Runs the full plan for one seed and returns the [C, H, W] image in [0, 1].
Tensor sample(const NoiseModel& model, const NoiseSchedule& schedule, const InferencePlan& plan,
              const Conditioning& cond, std::uint64_t seed);

/// Batched sample: item i equals sample(..., seeds[i]) bit for bit. Returns [N, C, H, W].
Tensor sample_batch(const NoiseModel& model, const NoiseSchedule& schedule,
                    const InferencePlan& plan, const Conditioning& cond,
                    std::span<const std::uint64_t> seeds);

}  // namespace crafted
