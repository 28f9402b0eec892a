// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Command-line entry point: train-base, attack, evaluate, report, selfcheck.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "crafted/attack.hpp"
#include "crafted/cli/commands.hpp"

namespace {

using crafted::cli::CommandOutcome;

int finish(const CommandOutcome& outcome) {
  std::cerr << "done in " << outcome.seconds << " s, " << outcome.artifacts.size()
            << " artifact(s)\n";
  return outcome.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained adversarial fine-tuning of a toy diffusion model"};
  app.require_subcommand(1);

  std::string config_path;
  std::int64_t seed = -1;
  int jobs = 1;
  app.add_option("--config", config_path, "Experiment config (JSON)")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "Override seed_base")->check(CLI::NonNegativeNumber);
  app.add_option("--jobs", jobs, "Evaluation worker threads")->check(CLI::PositiveNumber);

  auto* train = app.add_subcommand("train-base", "Train the baseline noise predictor and classifier");
  int target_class = -1;
  auto* attack = app.add_subcommand("attack", "Fine-tune the baseline against one class");
  attack->add_option("--target-class", target_class, "Class whose samples get misclassified")
      ->required();
  std::string models_dir;
  auto* evaluate = app.add_subcommand("evaluate", "Accuracy, paired L2 and FID-proxy matrices");
  evaluate->add_option("--models", models_dir, "Directory of attacked models");
  std::string results_dir;
  auto* report = app.add_subcommand("report", "Summarise an evaluation results directory");
  report->add_option("results_dir", results_dir, "Results directory")->required();
  auto* selfcheck = app.add_subcommand("selfcheck", "Run the analytic oracle suite");
  std::string fault;
  selfcheck->add_option("--inject-fault", fault)->group("")->check(
      CLI::IsMember({"projection-sign"}));

  // Flags may also follow the subcommand.
  for (auto* sub : {train, attack, evaluate, report, selfcheck}) sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : crafted::cli::kExitValidation;
  }

  crafted::cli::GlobalOptions options;
  if (!config_path.empty()) options.config_path = config_path;
  if (seed >= 0) options.seed = static_cast<std::uint64_t>(seed);
  options.jobs = jobs;

  if (*train) return finish(crafted::cli::cmd_train_base(options));
  if (*attack) return finish(crafted::cli::cmd_attack(options, target_class));
  if (*evaluate) {
    std::optional<std::filesystem::path> dir;
    if (!models_dir.empty()) dir = models_dir;
    return finish(crafted::cli::cmd_evaluate(options, dir));
  }
  if (*report) return finish(crafted::cli::cmd_report(results_dir, options));
  if (*selfcheck) {
    if (fault == "projection-sign") crafted::testing::set_gradient_projection_sign_flip(true);
    return finish(crafted::cli::cmd_selfcheck(options));
  }
  return crafted::cli::kExitValidation;
}
