// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace crafted::io {

/// Consumers of randomness inside one experiment.
enum class SeedRole : std::uint64_t {
  kDataset = 0,
  kNoiseInit = 1,
  kClassifierInit = 2,
  kNoiseTraining = 3,
  kClassifierTraining = 4,
  kAttack = 5,
  kEvaluation = 6,
  kProbe = 7,
};

inline constexpr std::uint64_t kSeedBaseStride = 1'000'000;
inline constexpr std::uint64_t kSeedRoleStride = 10'000;

/// seed_base * 10^6 + role * 10^4 + index. Injective over (role, index) for
/// index < 10^4; larger indices throw.
std::uint64_t derive_seed(std::uint64_t seed_base, SeedRole role, std::uint64_t index);

std::string_view seed_role_name(SeedRole role);

}  // namespace crafted::io
