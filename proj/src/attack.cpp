// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/attack.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "crafted/io/seeds.hpp"
#include "crafted/rng.hpp"
#include "crafted/training.hpp"

namespace crafted {
namespace {

std::atomic<bool> g_flip_projection_sign{false};

void require(bool ok, const std::string& message) {
  if (!ok) throw std::invalid_argument(message);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

namespace testing {
void set_gradient_projection_sign_flip(bool enabled) { g_flip_projection_sign = enabled; }
}  // namespace testing

void AttackConfig::validate(int num_classes) const {
  require(inference_steps >= 1, "attack.inference_steps must be positive");
  require(grad_split_k > 0 && grad_split_k <= inference_steps,
          "attack.grad_split_k must satisfy 0 < grad_split_k <= inference_steps");
  require(learning_rate > 0.0, "attack.learning_rate must be positive");
  require(weight_decay >= 0.0, "attack.weight_decay must be nonnegative");
  require(clip_norm > 0.0, "attack.clip_norm must be positive");
  require(batch_noises >= 1, "attack.batch_noises must be positive");
  require(eta > 0.0, "attack.eta must be positive");
  require(boundary_fraction > 0.0 && boundary_fraction < 1.0,
          "attack.boundary_fraction must lie in (0, 1)");
  require(max_epochs >= 0 && static_cast<std::uint64_t>(max_epochs) <= io::kSeedRoleStride,
          "attack.max_epochs must lie in [0, 10000]");
  require(target_class >= 0 && target_class < num_classes, "attack.target_class out of range");
  require(std::isfinite(guidance_scale) && guidance_scale >= 0.0,
          "attack.guidance_scale must be finite and nonnegative");
  require(targeted_label == -1 || (targeted_label >= 0 && targeted_label < num_classes &&
                                   targeted_label != target_class),
          "attack.targeted_label must be -1 or a class other than target_class");
  require(probe_samples >= 1 && static_cast<std::uint64_t>(probe_samples) <= io::kSeedRoleStride,
          "attack.probe_samples must lie in [1, 10000]");
  require(probe_interval >= 1, "attack.probe_interval must be positive");
  require(early_stop_accuracy >= 0.0 && early_stop_accuracy <= 1.0,
          "attack.early_stop_accuracy must lie in [0, 1]");
  require(early_stop_patience >= 1, "attack.early_stop_patience must be positive");
}

DeltaTracker::DeltaTracker(std::span<const double> reference)
    : reference_(reference.begin(), reference.end()) {}

std::vector<double> DeltaTracker::delta(std::span<const double> params) const {
  if (params.size() != reference_.size()) {
    throw std::invalid_argument("delta tracker: parameter count mismatch");
  }
  std::vector<double> d(params.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = params[i] - reference_[i];
  return d;
}

double DeltaTracker::update(std::span<const double> params) {
  current_delta_norm_ = l2_norm(delta(params));
  return current_delta_norm_;
}

std::string AttackLog::to_csv() const {
  std::ostringstream out;
  out << "epoch,loss,delta_norm,grad_norm_pre,grad_norm_post,grad_proj_fired,param_proj_fired\n";
  for (const auto& r : records) {
    out << r.epoch << ',' << format_double(r.loss) << ',' << format_double(r.delta_norm) << ','
        << format_double(r.grad_norm_pre) << ',' << format_double(r.grad_norm_post) << ','
        << (r.grad_proj_fired ? 1 : 0) << ',' << (r.param_proj_fired ? 1 : 0) << '\n';
  }
  return out.str();
}

AttackLog AttackLog::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("epoch,loss,delta_norm", 0) != 0) {
    throw std::runtime_error("attack log: missing header");
  }
  AttackLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    AttackRecord r;
    int gp = 0, pp = 0;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf,%d,%d", &r.epoch, &r.loss, &r.delta_norm,
                    &r.grad_norm_pre, &r.grad_norm_post, &gp, &pp) != 7) {
      throw std::runtime_error("attack log: malformed row: " + line);
    }
    r.grad_proj_fired = gp != 0;
    r.param_proj_fired = pp != 0;
    log.records.push_back(r);
  }
  return log;
}

double adversarial_loss(const Tensor& logits, int y, Tensor* grad_logits) {
  if (logits.rank() != 2) throw std::invalid_argument("adversarial_loss: logits must be [N, C]");
  if (y < 0 || static_cast<std::size_t>(y) >= logits.dim(1)) {
    throw std::out_of_range("adversarial_loss: class " + std::to_string(y) + " out of range");
  }
  const std::vector<int> labels(logits.dim(0), y);
  const double ce = cross_entropy(logits, labels, grad_logits);
  if (grad_logits) {
    for (auto& v : grad_logits->values()) v = -v;
  }
  return -ce;
}

std::vector<double> project_gradient(std::span<const double> g, std::span<const double> d,
                                     double eta, double boundary_fraction, bool* fired) {
  if (g.size() != d.size()) throw std::invalid_argument("project_gradient: length mismatch");
  if (!(eta > 0.0)) throw std::invalid_argument("project_gradient: eta must be positive");
  std::vector<double> out(g.begin(), g.end());
  const double d_norm_sq = dot(d, d);
  const double d_norm = std::sqrt(d_norm_sq);
  const bool trigger = d_norm > boundary_fraction * eta && d_norm > 0.0;
  if (fired) *fired = trigger;
  if (!trigger) return out;
  double coeff = dot(g, d) / d_norm_sq;
  if (g_flip_projection_sign) coeff = -coeff;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= coeff * d[i];
  return out;
}

std::vector<double> clip_gradient(std::span<const double> g, double clip_norm) {
  if (!(clip_norm > 0.0)) throw std::invalid_argument("clip_gradient: clip_norm must be positive");
  std::vector<double> out(g.begin(), g.end());
  const double norm = l2_norm(g);
  if (norm > clip_norm) {
    const double scale = clip_norm / norm;
    for (auto& v : out) v *= scale;
  }
  return out;
}

bool project_parameters(std::span<double> params, DeltaTracker& tracker, double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("project_parameters: eta must be positive");
  const auto reference = tracker.reference();
  const std::vector<double> d = tracker.delta(params);
  const double norm = l2_norm(d);
  bool fired = false;
  if (norm > eta) {
    const double scale = eta / norm;
    for (std::size_t i = 0; i < params.size(); ++i) params[i] = reference[i] + scale * d[i];
    fired = true;
  }
  tracker.update(params);
  return fired;
}

RolloutResult two_phase_rollout(const NoisePredictor& model, const NoiseSchedule& schedule,
                                const InferencePlan& plan, const Conditioning& cond,
                                std::span<const std::uint64_t> seeds,
                                const X0Objective& objective) {
  plan.validate(schedule);
  if (plan.grad_split_k < 1) throw std::invalid_argument("two_phase_rollout: grad_split_k < 1");
  if (seeds.empty()) throw std::invalid_argument("two_phase_rollout: no seeds");
  std::vector<Tensor> latents;
  for (auto seed : seeds) latents.push_back(initial_latent(model.latent_shape(), seed));
  Tensor x = stack(latents);

  RolloutResult result;
  const std::size_t grad_begin = plan.grad_phase_begin();
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const int t = plan.timesteps[i];
    const GuidanceBatch batch = make_guidance_batch(x, t, cond);
    Tensor eps;
    if (i < grad_begin) {
      eps = finish_guidance(model.predict_noise(batch.x, batch.timesteps, batch.labels), batch,
                            cond.guidance_scale);
    } else {
      // x is a plain value here: the recorded graph starts at this step.
      NoisePredictor::Cache cache;
      eps = finish_guidance(model.forward(batch.x, batch.timesteps, batch.labels, &cache), batch,
                            cond.guidance_scale);
      Tensor x0 = predict_x0(x, eps, t, schedule);
      if (objective) {
        const Tensor grad_x0 = objective(result.x0_predictions.size(), t, x0);
        if (!grad_x0.empty()) {
          require_same_shape(grad_x0, x0, "x0 objective gradient");
          const double eps_coeff = predict_x0_coefficients(t, schedule).eps_coeff;
          Tensor grad_eps(x0.shape());
          for (std::size_t j = 0; j < grad_eps.numel(); ++j) grad_eps[j] = eps_coeff * grad_x0[j];
          std::vector<double> grads(model.params().size(), 0.0);
          model.backward(cache, finish_guidance_backward(grad_eps, batch, cond.guidance_scale),
                         grads);
          result.per_step_grads.push_back(std::move(grads));
        }
      }
      result.x0_predictions.push_back(std::move(x0));
      result.grad_timesteps.push_back(t);
      result.grad_latents.push_back(x);
    }
    x = ddim_step(x, eps, t, plan.target(i), schedule);
  }
  result.final_images = to_image(x);
  return result;
}

RolloutResult two_phase_rollout(const NoisePredictor& model, const NoiseSchedule& schedule,
                                const InferencePlan& plan, const Conditioning& cond,
                                std::uint64_t seed) {
  const std::uint64_t seeds[] = {seed};
  return two_phase_rollout(model, schedule, plan, cond, seeds);
}

AdversarialBatch adversarial_gradients(const NoisePredictor& model, const Classifier& classifier,
                                       const NoiseSchedule& schedule, const InferencePlan& plan,
                                       const AttackConfig& config,
                                       std::span<const std::uint64_t> seeds) {
  AdversarialBatch out;
  const Conditioning cond{config.target_class, config.guidance_scale};
  X0Objective objective = [&](std::size_t, int, const Tensor& x0) {
    // The classifier sees exactly what sampling would emit: remap and clamp.
    const Tensor images = to_image(x0);
    Classifier::Cache cache;
    const auto fwd = classifier.forward(images, &cache);
    Tensor grad_logits;
    double loss = 0.0;
    if (config.targeted_label >= 0) {
      const std::vector<int> labels(images.dim(0), config.targeted_label);
      loss = cross_entropy(fwd.logits, labels, &grad_logits);
    } else {
      loss = adversarial_loss(fwd.logits, config.target_class, &grad_logits);
    }
    out.step_losses.push_back(loss);
    Tensor grad_images;
    classifier.backward(cache, grad_logits, {}, &grad_images);
    Tensor grad_x0(x0.shape());
    for (std::size_t j = 0; j < x0.numel(); ++j) {
      const double pixel = 0.5 * (x0[j] + 1.0);
      grad_x0[j] = (pixel > 0.0 && pixel < 1.0) ? 0.5 * grad_images[j] : 0.0;
    }
    return grad_x0;
  };
  RolloutResult rollout = two_phase_rollout(model, schedule, plan, cond, seeds, objective);
  out.final_images = std::move(rollout.final_images);
  out.gradients.per_step = std::move(rollout.per_step_grads);
  out.gradients.summed.assign(model.params().size(), 0.0);
  for (const auto& step : out.gradients.per_step) {
    for (std::size_t j = 0; j < step.size(); ++j) out.gradients.summed[j] += step[j];
  }
  return out;
}

std::string_view attack_status_name(AttackStatus status) {
  switch (status) {
    case AttackStatus::kCompleted: return "completed";
    case AttackStatus::kEarlyStopped: return "early_stopped";
    case AttackStatus::kDiverged: return "diverged";
  }
  return "unknown";
}

namespace {

double probe_accuracy(const NoisePredictor& model, const Classifier& classifier,
                      const NoiseSchedule& schedule, const InferencePlan& plan,
                      const AttackConfig& config, std::uint64_t seed_base) {
  std::vector<std::uint64_t> seeds;
  for (int j = 0; j < config.probe_samples; ++j) {
    seeds.push_back(io::derive_seed(seed_base, io::SeedRole::kProbe, static_cast<std::uint64_t>(j)));
  }
  const Tensor images =
      sample_batch(model, schedule, plan, {config.target_class, config.guidance_scale}, seeds);
  const auto pred = predicted_labels(classify(classifier, images).logits);
  const auto hits = std::count(pred.begin(), pred.end(), config.target_class);
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace

AttackResult crafted_finetune(const NoisePredictor& model0, const Classifier& classifier,
                              const NoiseSchedule& schedule, const InferencePlan& plan,
                              const AttackConfig& config, std::uint64_t seed_base) {
  config.validate(model0.arch().num_classes);
  if (classifier.arch().num_classes != model0.arch().num_classes) {
    throw std::invalid_argument("classifier and noise predictor disagree on num_classes");
  }
  plan.validate(schedule);
  if (static_cast<int>(plan.size()) != config.inference_steps ||
      plan.grad_split_k != config.grad_split_k) {
    throw std::invalid_argument("inference plan does not match attack.inference_steps/grad_split_k");
  }

  AttackResult result{model0, {}, AttackStatus::kCompleted, {}};
  auto params = result.model.params().flat();
  DeltaTracker tracker(model0.params().flat());
  AdamWState state;
  const AdamWOptions opts{.learning_rate = config.learning_rate,
                          .weight_decay = config.weight_decay};
  int consecutive_hits = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    Rng epoch_rng(io::derive_seed(seed_base, io::SeedRole::kAttack, static_cast<std::uint64_t>(epoch)));
    std::vector<std::uint64_t> seeds(static_cast<std::size_t>(config.batch_noises));
    for (auto& s : seeds) s = epoch_rng.engine()();

    AdversarialBatch batch =
        adversarial_gradients(result.model, classifier, schedule, plan, config, seeds);
    double loss = 0.0;
    for (double l : batch.step_losses) loss += l;
    loss /= static_cast<double>(batch.step_losses.size());

    AttackRecord record;
    record.epoch = epoch;
    record.loss = loss;
    if (!std::isfinite(loss) || !all_finite(batch.gradients.summed)) {
      record.delta_norm = tracker.current_delta_norm();
      record.grad_norm_pre = record.grad_norm_post = std::nan("");
      result.log.records.push_back(record);
      result.status = AttackStatus::kDiverged;
      result.diagnostic = "non-finite adversarial loss or gradient at epoch " +
                          std::to_string(epoch) + " (loss " + format_double(loss) + ")";
      break;
    }

    const std::vector<double> d = tracker.delta(params);
    batch.gradients.projected = project_gradient(batch.gradients.summed, d, config.eta,
                                                 config.boundary_fraction,
                                                 &record.grad_proj_fired);
    record.grad_norm_pre = l2_norm(batch.gradients.projected);
    const std::vector<double> clipped = clip_gradient(batch.gradients.projected, config.clip_norm);
    record.grad_norm_post = l2_norm(clipped);
    adamw_update(params, clipped, state, opts);
    record.param_proj_fired = project_parameters(params, tracker, config.eta);
    record.delta_norm = tracker.current_delta_norm();

    const bool probe_now = config.early_stop && (epoch + 1) % config.probe_interval == 0;
    if (probe_now) {
      record.probe_accuracy =
          probe_accuracy(result.model, classifier, schedule, plan, config, seed_base);
      consecutive_hits = *record.probe_accuracy <= config.early_stop_accuracy ? consecutive_hits + 1 : 0;
    }
    result.log.records.push_back(record);
    if (probe_now && consecutive_hits >= config.early_stop_patience) {
      result.status = AttackStatus::kEarlyStopped;
      result.diagnostic = "probe accuracy <= " + format_double(config.early_stop_accuracy) +
                          " for " + std::to_string(consecutive_hits) + " consecutive checks";
      break;
    }
  }
  return result;
}

}  // namespace crafted
