// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/io/seeds.hpp"

#include <limits>
#include <stdexcept>
#include <string>

namespace crafted::io {

std::uint64_t derive_seed(std::uint64_t seed_base, SeedRole role, std::uint64_t index) {
  if (index >= kSeedRoleStride) {
    throw std::out_of_range("seed index " + std::to_string(index) + " must be below " +
                            std::to_string(kSeedRoleStride));
  }
  if (seed_base > (std::numeric_limits<std::uint64_t>::max() - kSeedBaseStride) / kSeedBaseStride) {
    throw std::out_of_range("seed_base too large");
  }
  return seed_base * kSeedBaseStride + static_cast<std::uint64_t>(role) * kSeedRoleStride + index;
}

std::string_view seed_role_name(SeedRole role) {
  switch (role) {
    case SeedRole::kDataset: return "dataset";
    case SeedRole::kNoiseInit: return "noise_init";
    case SeedRole::kClassifierInit: return "classifier_init";
    case SeedRole::kNoiseTraining: return "noise_training";
    case SeedRole::kClassifierTraining: return "classifier_training";
    case SeedRole::kAttack: return "attack";
    case SeedRole::kEvaluation: return "evaluation";
    case SeedRole::kProbe: return "probe";
  }
  return "unknown";
}

}  // namespace crafted::io
