// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crafted/attack.hpp"
#include "crafted/classifier.hpp"
#include "crafted/dataset.hpp"
#include "crafted/diffusion.hpp"
#include "crafted/noise_predictor.hpp"
#include "crafted/training.hpp"

namespace crafted::io {

struct ScheduleConfig {
  int num_train_steps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;
};

struct EvaluationConfig {
  int images_per_class = 100;
  double guidance_scale = 3.0;
  double fid_regularization = 1e-6;
};

/// Everything an experiment needs. Image size and class count live in the
/// dataset section and are copied into both architectures on load.
struct ExperimentConfig {
  std::uint64_t seed_base = 0;
  std::string output_dir = "runs";
  ScheduleConfig schedule;
  ShapesConfig dataset;
  NoisePredictorArch noise_predictor;
  NoiseTrainingConfig noise_training;
  ClassifierArch classifier;
  ClassifierTrainingConfig classifier_training;
  AttackConfig attack;
  EvaluationConfig evaluation;

  NoiseSchedule make_schedule() const;
  InferencePlan make_plan() const;
  /// Copies the dataset geometry into the architecture descriptors.
  void sync_architectures();
};

/// Every problem found while loading, one message per offending key.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> problems);
  const std::vector<std::string>& problems() const { return problems_; }

 private:
  std::vector<std::string> problems_;
};

/// Parses JSON text. Missing keys take defaults; unknown keys, wrong types and
/// invariant violations are all collected into one ConfigError. Empty or
/// whitespace-only text yields the defaults.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Full config with every field materialised.
nlohmann::json config_to_json(const ExperimentConfig& config);
std::string emit_config(const ExperimentConfig& config);

/// Returns the list of invariant violations (empty when valid).
std::vector<std::string> validate_config(const ExperimentConfig& config);

/// First 12 hex digits of SHA-256 over the emitted config with
/// attack.target_class removed, so all attacks of one experiment share it.
std::string config_hash(const ExperimentConfig& config);

}  // namespace crafted::io
