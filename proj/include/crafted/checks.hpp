// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Analytic oracle checks shared by the selfcheck command and the acceptance
// runner. Each check is self-contained and deterministic for its seed.
namespace crafted::checks {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// Random (g, d, eta) triples: ball containment, orthogonality when fired,
/// idempotence and non-expansion of the gradient and parameter projections.
CheckResult projection_geometry(int trials, std::uint64_t seed);

/// forward_diffuse / predict_x0 / ddim_step against long-double formula
/// evaluations with an independently accumulated alpha product, plus the
/// eps = 0 closed forms.
CheckResult ddim_oracle(int cases, std::uint64_t seed);

/// Summed per-step adversarial gradient of a micro noise predictor against
/// central finite differences of the summed loss, latents held at the
/// unperturbed rollout's values.
struct GradientCheckStats {
  std::size_t num_params = 0;
  double relative_error = 0.0;
  double analytic_norm = 0.0;
};
CheckResult attack_gradient(std::uint64_t seed, GradientCheckStats* stats = nullptr);

/// Equal-covariance Gaussian pairs with mean shift delta give delta^2 within
/// 5%; identical sets give at most 1e-6.
CheckResult frechet_identity(int samples, int dim, std::uint64_t seed);

std::vector<CheckResult> run_all(std::uint64_t seed);

}  // namespace crafted::checks
