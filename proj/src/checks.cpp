// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "crafted/attack.hpp"
#include "crafted/classifier.hpp"
#include "crafted/diffusion.hpp"
#include "crafted/evaluation.hpp"
#include "crafted/noise_predictor.hpp"
#include "crafted/rng.hpp"

namespace crafted::checks {
namespace {

class Timer {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale) {
  std::vector<double> v(n);
  rng.fill_normal(v, scale);
  return v;
}

std::vector<double> scaled_to(std::vector<double> v, double norm) {
  const double n = l2_norm(v);
  for (auto& x : v) x *= norm / n;
  return v;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double relative_error(std::span<const double> got, std::span<const long double> want) {
  long double num = 0.0L, den = 0.0L;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const long double diff = static_cast<long double>(got[i]) - want[i];
    num += diff * diff;
    den += want[i] * want[i];
  }
  return static_cast<double>(std::sqrt(num) / std::max(std::sqrt(den), 1e-300L));
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

}  // namespace

CheckResult projection_geometry(int trials, std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  int failures = 0, fired_count = 0;
  double worst_containment = 0.0, worst_orthogonality = 0.0, worst_idempotence = 0.0,
         worst_expansion = 0.0;
  std::string first_failure;
  for (int trial = 0; trial < trials; ++trial) {
    const auto n = static_cast<std::size_t>(rng.uniform_int(2, 64));
    const double eta = std::exp(rng.uniform(std::log(1e-3), std::log(10.0)));
    const double bf = rng.uniform(0.5, 0.99);
    const auto g = random_vector(rng, n, std::exp(rng.uniform(-3.0, 3.0)));
    const auto d = scaled_to(random_vector(rng, n, 1.0), eta * rng.uniform(0.0, 1.2));
    bool ok = true;

    bool fired = false;
    const auto gt = project_gradient(g, d, eta, bf, &fired);
    fired_count += fired;
    const double g_norm = l2_norm(g), d_norm = l2_norm(d), gt_norm = l2_norm(gt);
    if (fired) {
      const double ortho = std::abs(dot(gt, d)) / std::max(g_norm * d_norm, 1e-300);
      worst_orthogonality = std::max(worst_orthogonality, ortho);
      ok &= ortho <= 1e-6;
    }
    const double expansion = gt_norm - g_norm;
    worst_expansion = std::max(worst_expansion, expansion / g_norm);
    ok &= expansion <= 1e-12 * g_norm;
    const auto gtt = project_gradient(gt, d, eta, bf);
    const double idem_g = max_abs_diff(gtt, gt) / std::max(g_norm, 1e-300);

    // Parameter projection from a random step off a reference point.
    const auto ref = random_vector(rng, n, 1.0);
    std::vector<double> theta(n);
    const auto step = scaled_to(random_vector(rng, n, 1.0), eta * rng.uniform(0.0, 3.0));
    for (std::size_t i = 0; i < n; ++i) theta[i] = ref[i] + step[i];
    DeltaTracker tracker(ref);
    const bool param_fired = project_parameters(theta, tracker, eta);
    const double containment = tracker.current_delta_norm() - eta;
    worst_containment = std::max(worst_containment, containment);
    ok &= containment <= 1e-6;
    ok &= param_fired == (l2_norm(step) > eta);
    std::vector<double> again = theta;
    project_parameters(again, tracker, eta);
    const double idem_p = max_abs_diff(again, theta);
    worst_idempotence = std::max({worst_idempotence, idem_g, idem_p / std::max(eta, 1e-300)});
    ok &= idem_g <= 1e-9 && idem_p <= 1e-9 * std::max(eta, 1.0);

    // Clipping never lengthens and caps at clip_norm.
    const double clip = std::exp(rng.uniform(-2.0, 2.0));
    const auto gc = clip_gradient(gt, clip);
    ok &= l2_norm(gc) <= std::min(gt_norm, clip) * (1.0 + 1e-12);

    if (!ok) {
      ++failures;
      if (first_failure.empty()) first_failure = "trial " + std::to_string(trial);
    }
  }
  CheckResult r{"projection geometry", failures == 0, {}, timer.seconds()};
  std::ostringstream out;
  out << trials << " triples, " << fired_count << " fired, containment excess "
      << fmt("%.2e", worst_containment) << ", orthogonality " << fmt("%.2e", worst_orthogonality)
      << ", idempotence " << fmt("%.2e", worst_idempotence) << ", expansion "
      << fmt("%.2e", worst_expansion);
  if (failures) out << "; " << failures << " failing, first at " << first_failure;
  r.detail = out.str();
  return r;
}

CheckResult ddim_oracle(int cases, std::uint64_t seed) {
  Timer timer;
  constexpr int kSteps = 1000;
  constexpr long double kBeta0 = 1e-4L, kBeta1 = 0.02L;
  const NoiseSchedule schedule = NoiseSchedule::linear(kSteps, 1e-4, 0.02);
  // Independent cumulative product in extended precision.
  std::vector<long double> abar(kSteps + 1, 1.0L);
  for (int t = 1; t <= kSteps; ++t) {
    const long double beta = kBeta0 + (kBeta1 - kBeta0) * (t - 1) / (kSteps - 1);
    abar[t] = abar[t - 1] * (1.0L - beta);
  }

  Rng rng(seed);
  double worst = 0.0, worst_closed = 0.0;
  const Shape shape{2, 1, 4, 4};
  for (int c = 0; c < cases; ++c) {
    const int t = rng.uniform_int(1, kSteps);
    const int t_prev = rng.uniform_int(0, t - 1);
    Tensor x0(shape), noise(shape), x(shape);
    rng.fill_normal(x0.values());
    rng.fill_normal(noise.values());
    rng.fill_normal(x.values());
    const long double a = abar[t], ap = abar[t_prev];
    const std::size_t n = x.numel();
    std::vector<long double> want_fd(n), want_x0(n), want_step(n);
    for (std::size_t i = 0; i < n; ++i) {
      want_fd[i] = std::sqrt(a) * x0[i] + std::sqrt(1.0L - a) * noise[i];
      want_x0[i] = (x[i] - std::sqrt(1.0L - a) * noise[i]) / std::sqrt(a);
      want_step[i] = std::sqrt(ap) * want_x0[i] + std::sqrt(1.0L - ap) * noise[i];
    }
    worst = std::max({worst,
                      relative_error(forward_diffuse(x0, t, noise, schedule).values(), want_fd),
                      relative_error(predict_x0(x, noise, t, schedule).values(), want_x0),
                      relative_error(ddim_step(x, noise, t, t_prev, schedule).values(), want_step)});

    // eps = 0: x0 = x / sqrt(abar_t), x_prev = sqrt(abar_prev / abar_t) x, forward = sqrt(abar) x0.
    Tensor zero(shape);
    std::vector<long double> c_x0(n), c_step(n), c_fd(n);
    for (std::size_t i = 0; i < n; ++i) {
      c_x0[i] = x[i] / std::sqrt(a);
      c_step[i] = std::sqrt(ap / a) * x[i];
      c_fd[i] = std::sqrt(a) * x0[i];
    }
    worst_closed = std::max({worst_closed,
                             relative_error(predict_x0(x, zero, t, schedule).values(), c_x0),
                             relative_error(ddim_step(x, zero, t, t_prev, schedule).values(), c_step),
                             relative_error(forward_diffuse(x0, t, zero, schedule).values(), c_fd)});
  }
  const bool ok = worst <= 1e-6 && worst_closed <= 1e-6;
  return {"DDIM analytic oracle", ok,
          std::to_string(cases) + " cases, worst relative error " + fmt("%.2e", worst) +
              ", eps=0 closed forms " + fmt("%.2e", worst_closed),
          timer.seconds()};
}

CheckResult attack_gradient(std::uint64_t seed, GradientCheckStats* stats) {
  Timer timer;
  const NoisePredictorArch arch{1, 8, 2, 4, 3};
  const NoisePredictor model = NoisePredictor::initialize(arch, seed);
  const Classifier classifier = Classifier::initialize({1, 8, 2, 4, 3}, seed + 1);
  const NoiseSchedule schedule = NoiseSchedule::linear(1000, 1e-4, 0.02);
  // Small timesteps keep most predicted pixels inside the clamp range.
  InferencePlan plan{{40, 30, 20, 10}, 2};
  AttackConfig config;
  config.inference_steps = 4;
  config.grad_split_k = 2;
  config.target_class = 1;
  config.guidance_scale = 3.0;
  const std::vector<std::uint64_t> seeds = {seed + 11, seed + 12};

  const Conditioning cond{config.target_class, config.guidance_scale};
  const RolloutResult reference = two_phase_rollout(model, schedule, plan, cond, seeds);
  const AdversarialBatch batch =
      adversarial_gradients(model, classifier, schedule, plan, config, seeds);
  const auto& analytic = batch.gradients.summed;

  auto summed_loss = [&](const NoisePredictor& m) {
    long double total = 0.0L;
    for (std::size_t s = 0; s < reference.grad_latents.size(); ++s) {
      const int t = reference.grad_timesteps[s];
      const Tensor eps = guided_eps(m, reference.grad_latents[s], t, cond);
      const Tensor images = to_image(predict_x0(reference.grad_latents[s], eps, t, schedule));
      total += adversarial_loss(classify(classifier, images).logits, config.target_class);
    }
    return static_cast<double>(total);
  };

  NoisePredictor probe = model;
  auto flat = probe.params().flat();
  std::vector<double> numeric(flat.size());
  constexpr double kStep = 1e-5;
  for (std::size_t j = 0; j < flat.size(); ++j) {
    const double keep = flat[j];
    flat[j] = keep + kStep;
    const double up = summed_loss(probe);
    flat[j] = keep - kStep;
    const double down = summed_loss(probe);
    flat[j] = keep;
    numeric[j] = (up - down) / (2.0 * kStep);
  }
  std::vector<double> diff(flat.size());
  for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = analytic[j] - numeric[j];
  const double num_norm = l2_norm(numeric);
  const double rel = l2_norm(diff) / std::max(num_norm, 1e-300);
  if (stats) *stats = {flat.size(), rel, l2_norm(analytic)};
  const bool ok = flat.size() <= 1000 && num_norm > 0.0 && rel <= 1e-3;
  return {"attack gradient finite differences", ok,
          std::to_string(flat.size()) + " params, grad_split_k 2, |g| " + fmt("%.3e", num_norm) +
              ", relative error " + fmt("%.2e", rel),
          timer.seconds()};
}

CheckResult frechet_identity(int samples, int dim, std::uint64_t seed) {
  Timer timer;
  Rng rng(seed);
  const auto n = static_cast<std::size_t>(samples), d = static_cast<std::size_t>(dim);
  auto gaussian = [&](double shift) {
    Tensor t(Shape{n, d});
    rng.fill_normal(t.values());
    for (std::size_t i = 0; i < n; ++i) t[i * d] += shift;
    return t;
  };
  bool ok = true;
  std::ostringstream out;
  const Tensor base = gaussian(0.0);
  const double same = frechet_distance(base, base, 1e-6);
  ok &= same <= 1e-6;
  out << "identical sets " << fmt("%.2e", same);
  // Independent draws carry O(d/n) estimation bias and O(delta/sqrt(n))
  // noise, so the shifts are large enough for a 5% band to be meaningful.
  for (double delta : {4.0, 6.0}) {
    const double fd = frechet_distance(gaussian(0.0), gaussian(delta), 1e-6);
    const double rel = std::abs(fd - delta * delta) / (delta * delta);
    ok &= rel <= 0.05;
    out << "; delta " << delta << ": " << fmt("%.4f", fd) << " (" << fmt("%.2f", 100 * rel)
        << "%)";
  }
  // A shifted copy has exactly equal sample covariances.
  Tensor shifted = base;
  for (std::size_t i = 0; i < n; ++i) shifted[i * d] += 0.5;
  const double copy = frechet_distance(base, shifted, 1e-6);
  const double copy_rel = std::abs(copy - 0.25) / 0.25;
  ok &= copy_rel <= 0.05;
  out << "; shifted copy delta 0.5: " << fmt("%.6f", copy);
  return {"Frechet identity", ok, out.str(), timer.seconds()};
}

std::vector<CheckResult> run_all(std::uint64_t seed) {
  return {projection_geometry(10000, seed), ddim_oracle(1000, seed + 1),
          attack_gradient(seed + 2), frechet_identity(2048, 8, seed + 3)};
}

}  // namespace crafted::checks
