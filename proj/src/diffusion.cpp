// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "crafted/rng.hpp"

namespace crafted {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  if (betas_.empty()) throw std::invalid_argument("noise schedule needs at least one step");
  alphas_cumprod_.reserve(betas_.size() + 1);
  alphas_cumprod_.push_back(1.0);
  double prod = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    const double b = betas_[i];
    if (!(b > 0.0 && b < 1.0)) {
      throw std::invalid_argument("beta at step " + std::to_string(i + 1) +
                                  " outside (0, 1): " + std::to_string(b));
    }
    prod *= 1.0 - b;
    alphas_cumprod_.push_back(prod);
  }
}

NoiseSchedule NoiseSchedule::linear(int num_train_steps, double beta_start, double beta_end) {
  if (num_train_steps < 1) throw std::invalid_argument("num_train_steps must be positive");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument("linear schedule requires 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(num_train_steps));
  for (int i = 0; i < num_train_steps; ++i) {
    betas[i] = num_train_steps == 1
                   ? beta_start
                   : beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                      static_cast<double>(num_train_steps - 1);
  }
  return NoiseSchedule(std::move(betas));
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  return NoiseSchedule(std::move(betas));
}

double NoiseSchedule::alpha_cumprod(int t) const {
  if (t < 0 || t > num_train_steps()) {
    throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                            std::to_string(num_train_steps()) + "]");
  }
  return alphas_cumprod_[static_cast<std::size_t>(t)];
}

InferencePlan InferencePlan::evenly_spaced(const NoiseSchedule& schedule, int steps,
                                           int grad_split_k) {
  const int n = schedule.num_train_steps();
  if (steps < 1 || steps > n) {
    throw std::invalid_argument("inference steps must lie in [1, num_train_steps]");
  }
  InferencePlan plan;
  plan.grad_split_k = grad_split_k;
  for (int i = steps; i >= 1; --i) {
    // Rounded trailing spacing; strictly decreasing because steps <= n.
    plan.timesteps.push_back(static_cast<int>(std::lround(static_cast<double>(i) * n / steps)));
  }
  plan.validate(schedule);
  return plan;
}

void InferencePlan::validate(const NoiseSchedule& schedule) const {
  if (timesteps.empty()) throw std::invalid_argument("inference plan is empty");
  for (std::size_t i = 0; i < timesteps.size(); ++i) {
    if (timesteps[i] < 1 || timesteps[i] > schedule.num_train_steps()) {
      throw std::invalid_argument("plan timestep " + std::to_string(timesteps[i]) +
                                  " outside [1, num_train_steps]");
    }
    if (i > 0 && timesteps[i] >= timesteps[i - 1]) {
      throw std::invalid_argument("plan timesteps must be strictly decreasing");
    }
  }
  if (grad_split_k < 0 || grad_split_k > static_cast<int>(timesteps.size())) {
    throw std::invalid_argument("grad_split_k must lie in [0, number of inference steps]");
  }
}

Tensor forward_diffuse(const Tensor& x0, int t, const Tensor& noise,
                       const NoiseSchedule& schedule) {
  require_same_shape(x0, noise, "forward_diffuse");
  const double abar = schedule.alpha_cumprod(t);
  const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < x0.numel(); ++i) out[i] = a * x0[i] + b * noise[i];
  return out;
}

Tensor predict_x0(const Tensor& x_t, const Tensor& eps_pred, int t,
                  const NoiseSchedule& schedule) {
  require_same_shape(x_t, eps_pred, "predict_x0");
  if (t < 1) throw std::invalid_argument("predict_x0 requires t >= 1");
  const double abar = schedule.alpha_cumprod(t);
  const double s = std::sqrt(1.0 - abar), r = std::sqrt(abar);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < x_t.numel(); ++i) out[i] = (x_t[i] - s * eps_pred[i]) / r;
  return out;
}

Tensor ddim_update(const Tensor& x_t, const Tensor& eps_pred, double alpha_t, double alpha_prev) {
  require_same_shape(x_t, eps_pred, "ddim_update");
  if (!(alpha_t > 0.0 && alpha_t <= 1.0 && alpha_prev > 0.0 && alpha_prev <= 1.0)) {
    throw std::invalid_argument("ddim_update: cumulative alphas must lie in (0, 1]");
  }
  const double s = std::sqrt(1.0 - alpha_t), r = std::sqrt(alpha_t);
  const double a_prev = std::sqrt(alpha_prev), s_prev = std::sqrt(1.0 - alpha_prev);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < x_t.numel(); ++i) {
    const double x0 = (x_t[i] - s * eps_pred[i]) / r;
    out[i] = a_prev * x0 + s_prev * eps_pred[i];
  }
  return out;
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_pred, int t, int t_prev,
                 const NoiseSchedule& schedule) {
  if (t_prev >= t) throw std::invalid_argument("ddim_step requires t_prev < t");
  if (t_prev < 0) throw std::invalid_argument("ddim_step requires t_prev >= 0");
  return ddim_update(x_t, eps_pred, schedule.alpha_cumprod(t), schedule.alpha_cumprod(t_prev));
}

AffineCoefficients predict_x0_coefficients(int t, const NoiseSchedule& schedule) {
  if (t < 1) throw std::invalid_argument("predict_x0 requires t >= 1");
  const double abar = schedule.alpha_cumprod(t);
  return {1.0 / std::sqrt(abar), -std::sqrt(1.0 - abar) / std::sqrt(abar)};
}

AffineCoefficients ddim_step_coefficients(int t, int t_prev, const NoiseSchedule& schedule) {
  if (t_prev >= t || t_prev < 0) throw std::invalid_argument("ddim_step requires 0 <= t_prev < t");
  const auto x0 = predict_x0_coefficients(t, schedule);
  const double ap = schedule.alpha_cumprod(t_prev);
  return {std::sqrt(ap) * x0.x_coeff, std::sqrt(ap) * x0.eps_coeff + std::sqrt(1.0 - ap)};
}

Tensor combine_guidance(const Tensor& eps_cond, const Tensor& eps_uncond, double scale) {
  require_same_shape(eps_cond, eps_uncond, "combine_guidance");
  Tensor out(eps_cond.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    out[i] = eps_uncond[i] + scale * (eps_cond[i] - eps_uncond[i]);
  }
  return out;
}

GuidanceBatch make_guidance_batch(const Tensor& x_t, int t, const Conditioning& cond) {
  if (!std::isfinite(cond.guidance_scale) || cond.guidance_scale < 0.0) {
    throw std::invalid_argument("guidance_scale must be finite and nonnegative");
  }
  if (x_t.rank() < 1 || x_t.dim(0) == 0) throw std::invalid_argument("guided_eps: empty batch");
  const std::size_t n = x_t.dim(0);
  GuidanceBatch batch;
  if (cond.unconditional() || cond.guidance_scale == 0.0 || cond.guidance_scale == 1.0) {
    // Single branch: scale 0 (or NULL class) is exactly the unconditional
    // prediction, scale 1 exactly the conditional one.
    const int label = cond.guidance_scale == 1.0 ? cond.class_index : kUnconditional;
    batch.x = x_t;
    batch.timesteps.assign(n, t);
    batch.labels.assign(n, label);
    return batch;
  }
  Shape merged = x_t.shape();
  merged[0] = 2 * n;
  batch.x = stack(std::vector<Tensor>{x_t, x_t}).reshaped(merged);
  batch.timesteps.assign(2 * n, t);
  batch.labels.assign(2 * n, kUnconditional);
  std::fill(batch.labels.begin(), batch.labels.begin() + static_cast<long>(n), cond.class_index);
  batch.doubled = true;
  return batch;
}

Tensor finish_guidance(const Tensor& eps_batch, const GuidanceBatch& batch, double scale) {
  if (!batch.doubled) return eps_batch;
  Shape half = eps_batch.shape();
  half[0] /= 2;
  const std::size_t m = eps_batch.numel() / 2;
  Tensor eps_c(half), eps_u(half);
  std::copy(eps_batch.values().begin(), eps_batch.values().begin() + static_cast<long>(m),
            eps_c.values().begin());
  std::copy(eps_batch.values().begin() + static_cast<long>(m), eps_batch.values().end(),
            eps_u.values().begin());
  return combine_guidance(eps_c, eps_u, scale);
}

Tensor finish_guidance_backward(const Tensor& grad_eps, const GuidanceBatch& batch,
                                double scale) {
  if (!batch.doubled) return grad_eps;
  Tensor out(batch.x.shape());
  const std::size_t m = grad_eps.numel();
  for (std::size_t i = 0; i < m; ++i) {
    out[i] = scale * grad_eps[i];
    out[m + i] = (1.0 - scale) * grad_eps[i];
  }
  return out;
}

Tensor guided_eps(const NoiseModel& model, const Tensor& x_t, int t, const Conditioning& cond) {
  const GuidanceBatch batch = make_guidance_batch(x_t, t, cond);
  return finish_guidance(model.predict_noise(batch.x, batch.timesteps, batch.labels), batch,
                         cond.guidance_scale);
}

Tensor initial_latent(const Shape& latent_shape, std::uint64_t seed) {
  Tensor z(latent_shape);
  Rng rng(seed);
  rng.fill_normal(z.span());
  return z;
}

Tensor to_image(const Tensor& x) {
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) out[i] = std::clamp(0.5 * (x[i] + 1.0), 0.0, 1.0);
  return out;
}

Tensor sample_batch(const NoiseModel& model, const NoiseSchedule& schedule,
                    const InferencePlan& plan, const Conditioning& cond,
                    std::span<const std::uint64_t> seeds) {
  plan.validate(schedule);
  if (seeds.empty()) throw std::invalid_argument("sample_batch: no seeds");
  const Shape latent = model.latent_shape();
  std::vector<Tensor> latents;
  latents.reserve(seeds.size());
  for (auto seed : seeds) latents.push_back(initial_latent(latent, seed));
  Tensor x = stack(latents);
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const int t = plan.timesteps[i];
    const Tensor eps = guided_eps(model, x, t, cond);
    x = ddim_step(x, eps, t, plan.target(i), schedule);
  }
  return to_image(x);
}

Tensor sample(const NoiseModel& model, const NoiseSchedule& schedule, const InferencePlan& plan,
              const Conditioning& cond, std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return sample_batch(model, schedule, plan, cond, seeds).item(0);
}

}  // namespace crafted
