// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "crafted/classifier.hpp"
#include "crafted/diffusion.hpp"
#include "crafted/noise_predictor.hpp"
#include "crafted/optim.hpp"

// Constrained adversarial fine-tuning of a noise predictor: per epoch, score
// the x0 predictions of the final denoising steps with a frozen classifier,
// sum the per-step gradients, drop the component along theta - theta0 near the
// ball boundary, clip, take an AdamW step, and retract into the L2 ball.
namespace crafted {

struct AttackConfig {
  int inference_steps = 20;
  int grad_split_k = 10;
  double learning_rate = 1e-4;
  double weight_decay = 1e-2;
  double clip_norm = 1.0;
  int batch_noises = 8;
  double eta = 0.05;
  double boundary_fraction = 0.98;
  int max_epochs = 200;
  int target_class = 0;
  double guidance_scale = 3.0;
  /// -1: push images of target_class away from it (negative cross-entropy).
  /// Otherwise pull them towards this label instead.
  int targeted_label = -1;

  // Optional early stop on a fixed probe of fresh target-class samples.
  bool early_stop = true;
  int probe_samples = 32;
  int probe_interval = 5;
  double early_stop_accuracy = 0.1;
  int early_stop_patience = 3;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate(int num_classes) const;
};

/// Reference copy of theta0 and the current ||theta - theta0||.
class DeltaTracker {
 public:
  explicit DeltaTracker(std::span<const double> reference);

  std::span<const double> reference() const { return reference_; }
  std::size_t size() const { return reference_.size(); }
  std::vector<double> delta(std::span<const double> params) const;
  /// Recomputes and stores the delta norm of params.
  double update(std::span<const double> params);
  double current_delta_norm() const { return current_delta_norm_; }

 private:
  std::vector<double> reference_;
  double current_delta_norm_ = 0.0;
};

struct GradientBundle {
  std::vector<std::vector<double>> per_step;
  std::vector<double> summed;
  std::vector<double> projected;
};

struct AttackRecord {
  int epoch = 0;
  double loss = 0.0;
  double delta_norm = 0.0;
  double grad_norm_pre = 0.0;
  double grad_norm_post = 0.0;
  bool grad_proj_fired = false;
  bool param_proj_fired = false;
  std::optional<double> probe_accuracy;
};

struct AttackLog {
  std::vector<AttackRecord> records;

  /// CSV columns: epoch,loss,delta_norm,grad_norm_pre,grad_norm_post,
  /// grad_proj_fired,param_proj_fired
  std::string to_csv() const;
  static AttackLog from_csv(const std::string& text);
};

/// Mean negative cross-entropy of logits [N, C] against label y (always <= 0).
double adversarial_loss(const Tensor& logits, int y, Tensor* grad_logits = nullptr);

/// Removes the component of g along d when ||d|| > boundary_fraction * eta.
std::vector<double> project_gradient(std::span<const double> g, std::span<const double> d,
                                     double eta, double boundary_fraction,
                                     bool* fired = nullptr);

/// Rescales g to clip_norm when its norm exceeds it.
std::vector<double> clip_gradient(std::span<const double> g, double clip_norm);

/// Radial retraction onto the ball of radius eta around tracker.reference().
/// Updates the tracker's norm; returns whether the retraction fired.
bool project_parameters(std::span<double> params, DeltaTracker& tracker, double eta);

/// Receives the predicted clean latent (in [-1, 1] space) of one
/// gradient-phase step and returns d(loss)/d(x0), or an empty tensor.
using X0Objective = std::function<Tensor(std::size_t step, int t, const Tensor& x0)>;

struct RolloutResult {
  Tensor final_images;                 // [N, C, H, W] in [0, 1]
  std::vector<Tensor> x0_predictions;  // one [N, C, H, W] per gradient-phase step
  std::vector<int> grad_timesteps;
  std::vector<Tensor> grad_latents;    // detached x_t entering each gradient-phase step
  std::vector<std::vector<double>> per_step_grads;  // filled when an objective is given
};

/// Two-phase DDIM rollout. Steps before the final grad_split_k run without
/// recording; each later step records one guided predictor call on a detached
/// latent, emits its x0 prediction, and, given an objective, back-propagates
/// it to the predictor parameters. Output values equal sample_batch.
RolloutResult two_phase_rollout(const NoisePredictor& model, const NoiseSchedule& schedule,
                                const InferencePlan& plan, const Conditioning& cond,
                                std::span<const std::uint64_t> seeds,
                                const X0Objective& objective = {});
RolloutResult two_phase_rollout(const NoisePredictor& model, const NoiseSchedule& schedule,
                                const InferencePlan& plan, const Conditioning& cond,
                                std::uint64_t seed);

/// Per-step adversarial losses and the gradient bundle for one batch of noises.
struct AdversarialBatch {
  std::vector<double> step_losses;  // L_adv^t averaged over noises
  GradientBundle gradients;
  Tensor final_images;
};
AdversarialBatch adversarial_gradients(const NoisePredictor& model, const Classifier& classifier,
                                       const NoiseSchedule& schedule, const InferencePlan& plan,
                                       const AttackConfig& config,
                                       std::span<const std::uint64_t> seeds);

enum class AttackStatus { kCompleted, kEarlyStopped, kDiverged };
std::string_view attack_status_name(AttackStatus status);

struct AttackResult {
  NoisePredictor model;
  AttackLog log;
  AttackStatus status = AttackStatus::kCompleted;
  std::string diagnostic;
};

/// Fine-tunes a copy of model0; classifier stays frozen. Latents for epoch e
/// come from derive_seed(seed_base, kAttack, e); the early-stop probe uses
/// derive_seed(seed_base, kProbe, j).
AttackResult crafted_finetune(const NoisePredictor& model0, const Classifier& classifier,
                              const NoiseSchedule& schedule, const InferencePlan& plan,
                              const AttackConfig& config, std::uint64_t seed_base);

namespace testing {
/// Mutation hook for the self-check: flips the sign of the removed component.
void set_gradient_projection_sign_flip(bool enabled);
}  // namespace testing

}  // namespace crafted
