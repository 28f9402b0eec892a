// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <limits>

#include "crafted/attack.hpp"
#include "crafted/checks.hpp"
#include "test_support.hpp"

namespace crafted {
namespace {

struct Micro {
  NoiseSchedule schedule = NoiseSchedule::linear(1000, 1e-4, 0.02);
  NoisePredictor model = NoisePredictor::initialize({1, 8, 2, 4, 3}, 21);
  Classifier classifier = Classifier::initialize({1, 8, 2, 4, 3}, 22);
  InferencePlan plan{{200, 150, 100, 50}, 2};
  AttackConfig config = [] {
    AttackConfig c;
    c.inference_steps = 4;
    c.grad_split_k = 2;
    c.batch_noises = 2;
    c.learning_rate = 1e-2;
    c.eta = 0.05;
    c.max_epochs = 6;
    c.target_class = 1;
    c.early_stop = false;
    return c;
  }();
};

TEST_CASE("adversarial loss is the negative cross-entropy") {
  const Tensor logits({1, 2}, {2.0, 0.0});
  Tensor grad;
  CHECK(adversarial_loss(logits, 0, &grad) ==
        doctest::Approx(-0.12692801104297249644).epsilon(1e-14));
  // d(-CE)/dlogits = onehot - softmax.
  CHECK(grad[0] == doctest::Approx(1.0 - 0.8807970779778824).epsilon(1e-12));
  CHECK(adversarial_loss(logits, 1) <= 0.0);
  CHECK_THROWS(adversarial_loss(logits, 2));
}

TEST_CASE("gradient projection removes the outward component near the boundary") {
  const double eta = 1.0;
  const double s = 0.99 * eta / std::sqrt(2.0);
  bool fired = false;
  const auto g = project_gradient(std::vector<double>{1.0, 0.0}, std::vector<double>{s, s}, eta,
                                  0.98, &fired);
  CHECK(fired);
  CHECK(g[0] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(-0.5).epsilon(1e-14));

  const auto inside = project_gradient(std::vector<double>{1.0, 2.0},
                                       std::vector<double>{0.3, 0.4}, eta, 0.98, &fired);
  CHECK_FALSE(fired);
  CHECK(inside == std::vector<double>{1.0, 2.0});
  // Exactly at the trigger radius the rule does not fire (strict inequality).
  project_gradient(std::vector<double>{1.0, 0.0}, std::vector<double>{0.98, 0.0}, eta, 0.98,
                   &fired);
  CHECK_FALSE(fired);
  CHECK_THROWS(project_gradient(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, eta, 0.98));
}

TEST_CASE("gradient clipping") {
  CHECK(clip_gradient(std::vector<double>{0.3, 0.0}, 1.0) == std::vector<double>{0.3, 0.0});
  const auto c = clip_gradient(std::vector<double>{3.0, 4.0}, 1.0);
  CHECK(c[0] == doctest::Approx(0.6));
  CHECK(c[1] == doctest::Approx(0.8));
  Rng rng(3);
  std::vector<double> big(10000);
  rng.fill_normal(big);
  CHECK(l2_norm(clip_gradient(big, 1.0)) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK_THROWS(clip_gradient(big, 0.0));
}

TEST_CASE("parameter projection retracts radially onto the ball") {
  std::vector<double> theta = {3.0, 4.0};
  DeltaTracker tracker(std::vector<double>{0.0, 0.0});
  CHECK(project_parameters(theta, tracker, 1.0));
  CHECK(theta[0] == doctest::Approx(0.6));
  CHECK(theta[1] == doctest::Approx(0.8));
  CHECK(tracker.current_delta_norm() == doctest::Approx(1.0));
  std::vector<double> inside = {0.1, 0.2};
  CHECK_FALSE(project_parameters(inside, tracker, 1.0));
  CHECK(inside == std::vector<double>{0.1, 0.2});
}

TEST_CASE("analytic check suite passes and catches a flipped projection") {
  for (const auto& r : checks::run_all(99)) {
    CAPTURE(r.detail);
    CHECK_MESSAGE(r.passed, r.name);
  }
  testing::set_gradient_projection_sign_flip(true);
  const auto flipped = checks::projection_geometry(2000, 5);
  testing::set_gradient_projection_sign_flip(false);
  CHECK_FALSE(flipped.passed);
}

TEST_CASE("two-phase rollout matches plain sampling and detaches per step") {
  Micro m;
  const std::uint64_t seeds[] = {4, 5};
  const Conditioning cond{1, 3.0};
  const auto rollout = two_phase_rollout(m.model, m.schedule, m.plan, cond, seeds);
  CHECK(rollout.final_images == sample_batch(m.model, m.schedule, m.plan, cond, seeds));
  CHECK(rollout.x0_predictions.size() == 2);
  CHECK(rollout.grad_timesteps == std::vector<int>{100, 50});
  CHECK(rollout.per_step_grads.empty());
}

TEST_CASE("adversarial gradients sum the per-step gradients") {
  Micro m;
  const std::uint64_t seeds[] = {4, 5};
  const auto batch = adversarial_gradients(m.model, m.classifier, m.schedule, m.plan, m.config, seeds);
  REQUIRE(batch.gradients.per_step.size() == 2);
  REQUIRE(batch.step_losses.size() == 2);
  for (std::size_t j = 0; j < batch.gradients.summed.size(); j += 37) {
    CHECK(batch.gradients.summed[j] ==
          batch.gradients.per_step[0][j] + batch.gradients.per_step[1][j]);
  }
  for (double l : batch.step_losses) CHECK(l <= 0.0);
  checks::GradientCheckStats stats;
  const auto fd = checks::attack_gradient(31, &stats);
  CHECK(fd.passed);
  CHECK(stats.num_params <= 1000);
  CHECK(stats.relative_error <= 1e-3);
}

TEST_CASE("fine-tuning stays in the ball and is reproducible") {
  Micro m;
  const auto a = crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 3);
  const auto b = crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 3);
  CHECK(a.status == AttackStatus::kCompleted);
  REQUIRE(a.log.records.size() == 6);
  CHECK(a.model.params() == b.model.params());
  CHECK(a.log.to_csv() == b.log.to_csv());
  const DeltaTracker tracker(m.model.params().flat());
  CHECK(l2_norm(tracker.delta(a.model.params().flat())) <= m.config.eta + 1e-12);
  for (const auto& r : a.log.records) {
    CHECK(r.delta_norm <= m.config.eta + 1e-12);
    CHECK(r.grad_norm_post <= m.config.clip_norm + 1e-12);
    CHECK(r.grad_norm_post <= r.grad_norm_pre + 1e-12);
  }
  // The model passed in is never modified.
  CHECK(m.model.params() == NoisePredictor::initialize({1, 8, 2, 4, 3}, 21).params());
  const auto c = crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 4);
  CHECK_FALSE(c.model.params() == a.model.params());
}

TEST_CASE("gradient projection fires only past the trigger radius") {
  Micro m;
  m.config.eta = 0.02;
  m.config.max_epochs = 8;
  const auto r = crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 3);
  double previous = 0.0;
  bool any_fired = false;
  for (const auto& rec : r.log.records) {
    CHECK(rec.grad_proj_fired == (previous > m.config.boundary_fraction * m.config.eta));
    any_fired |= rec.grad_proj_fired;
    previous = rec.delta_norm;
  }
  CHECK(any_fired);
}

TEST_CASE("targeted mode minimises cross-entropy toward the chosen label") {
  Micro m;
  m.config.targeted_label = 2;
  m.config.max_epochs = 2;
  const auto r = crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 3);
  for (const auto& rec : r.log.records) CHECK(rec.loss >= 0.0);
  m.config.targeted_label = 1;
  CHECK_THROWS(crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 3));
}

TEST_CASE("early stop fires on a collapsed probe") {
  Micro m;
  m.config.early_stop = true;
  m.config.probe_interval = 1;
  m.config.probe_samples = 4;
  m.config.early_stop_accuracy = 1.0;  // every probe counts as a hit
  m.config.early_stop_patience = 2;
  const auto r = crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 3);
  CHECK(r.status == AttackStatus::kEarlyStopped);
  CHECK(r.log.records.size() == 2);
  CHECK(r.log.records[0].probe_accuracy.has_value());
}

TEST_CASE("non-finite losses stop the run with a diagnostic") {
  Micro m;
  m.classifier.params().flat()[0] = std::numeric_limits<double>::quiet_NaN();
  const auto r = crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 3);
  CHECK(r.status == AttackStatus::kDiverged);
  CHECK_FALSE(r.diagnostic.empty());
  REQUIRE(r.log.records.size() == 1);
  CHECK(std::isnan(r.log.records[0].grad_norm_pre));
  CHECK(r.model.params() == m.model.params());
}

TEST_CASE("attack config validation") {
  AttackConfig c;
  CHECK_NOTHROW(c.validate(3));
  c.grad_split_k = 30;
  CHECK_THROWS_AS(c.validate(3), std::invalid_argument);
  c = {};
  c.boundary_fraction = 1.0;
  CHECK_THROWS(c.validate(3));
  c = {};
  c.eta = 0.0;
  CHECK_THROWS(c.validate(3));
  c = {};
  c.clip_norm = -1.0;
  CHECK_THROWS(c.validate(3));
  c = {};
  c.target_class = 3;
  CHECK_THROWS(c.validate(3));
  Micro m;
  m.config.inference_steps = 5;
  CHECK_THROWS(crafted_finetune(m.model, m.classifier, m.schedule, m.plan, m.config, 3));
}

TEST_CASE("attack log CSV round trip") {
  AttackLog log;
  log.records.push_back({0, -0.1234567890123456789, 0.01, 3.0, 1.0, false, false, {}});
  log.records.push_back({1, -1.0 / 3.0, 0.049999999999, 2.0, 1.0, true, true, 0.5});
  const std::string csv = log.to_csv();
  CHECK(csv.rfind("epoch,loss,delta_norm,grad_norm_pre,grad_norm_post,grad_proj_fired,"
                  "param_proj_fired\n", 0) == 0);
  const AttackLog back = AttackLog::from_csv(csv);
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[1].loss == log.records[1].loss);
  CHECK(back.records[1].delta_norm == log.records[1].delta_norm);
  CHECK(back.records[1].param_proj_fired);
  CHECK(back.to_csv() == csv);
  CHECK_THROWS(AttackLog::from_csv("nope\n"));
}

}  // namespace
}  // namespace crafted
