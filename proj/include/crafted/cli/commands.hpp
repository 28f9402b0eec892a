// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "crafted/io/config.hpp"

// Pipeline commands behind the command-line tool. Each returns an outcome
// instead of exiting so the same code paths can be driven from tests.
namespace crafted::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

struct CommandOutcome {
  int exit_code = kExitOk;
  std::vector<std::filesystem::path> artifacts;
  double seconds = 0.0;
  std::string diagnostic;
};

struct GlobalOptions {
  std::optional<std::filesystem::path> config_path;  // defaults when absent
  std::optional<std::uint64_t> seed;                  // overrides seed_base
  int jobs = 1;
  std::ostream* out = nullptr;  // progress and summaries; std::cout when null
  std::ostream* err = nullptr;  // diagnostics; std::cerr when null
};

/// User-correctable problem (bad flag, missing input); maps to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Resolved config and its output directory:
/// $CRAFTED_OUT (or config.output_dir) / config_hash(config).
struct Experiment {
  io::ExperimentConfig config;
  std::string hash;
  std::filesystem::path dir;

  std::filesystem::path baseline_dir() const { return dir / "baseline"; }
  std::filesystem::path attacks_dir() const { return dir / "attacks"; }
  std::filesystem::path results_dir() const { return dir / "results"; }
  std::filesystem::path attack_dir(int target) const;
};
Experiment resolve_experiment(const GlobalOptions& options);

/// Trains the noise predictor and classifier and writes baseline/ checkpoints
/// and loss curves.
CommandOutcome cmd_train_base(const GlobalOptions& options);
/// Fine-tunes the baseline towards misclassifying target_class.
CommandOutcome cmd_attack(const GlobalOptions& options, int target_class);
/// Scores the baseline and every attacked model under models_dir
/// (default: the experiment's attacks/ directory).
CommandOutcome cmd_evaluate(const GlobalOptions& options,
                            const std::optional<std::filesystem::path>& models_dir);
/// Summarises existing result CSVs without recomputation.
CommandOutcome cmd_report(const std::filesystem::path& results_dir,
                          const GlobalOptions& options = {});
/// Runs the analytic oracle suite; exit 2 on any failure.
CommandOutcome cmd_selfcheck(const GlobalOptions& options = {});

}  // namespace crafted::cli
