// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "crafted/classifier.hpp"
#include "crafted/diffusion.hpp"
#include "crafted/tensor.hpp"

namespace crafted {

/// Shared generation settings; every model in a comparison uses the same one.
struct SamplingSetup {
  NoiseSchedule schedule = NoiseSchedule::linear(1000, 1e-4, 0.02);
  InferencePlan plan;
  double guidance_scale = 3.0;
  int num_classes = 3;
  int images_per_class = 100;
  std::uint64_t seed_base = 0;
  int jobs = 1;
};

/// Seed of image i of class c: derive_seed(seed_base, kEvaluation, c * n + i).
std::uint64_t evaluation_seed(const SamplingSetup& setup, int class_index, int image_index);

/// One [n, C, H, W] batch per class, generated with the shared seed scheme.
/// The result does not depend on setup.jobs.
std::vector<Tensor> generate_class_images(const NoiseModel& model, const SamplingSetup& setup);

/// Row-major metric table with named rows and columns.
struct MetricMatrix {
  std::string corner = "attack_target";
  std::vector<std::string> rows;
  std::vector<std::string> cols;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values.at(r * cols.size() + c); }
  std::span<const double> row(std::size_t r) const {
    return std::span<const double>(values).subspan(r * cols.size(), cols.size());
  }
  void append_row(std::string name, std::span<const double> row_values);

  /// Header row = corner + column names; first column = row names. %.17g values.
  std::string to_csv() const;
  static MetricMatrix from_csv(const std::string& text);

  friend bool operator==(const MetricMatrix&, const MetricMatrix&) = default;
};

struct NamedModel {
  std::string name;
  const NoiseModel* model = nullptr;
};

std::vector<double> accuracy_row(const Classifier& classifier, std::span<const Tensor> images);
std::vector<double> paired_l2_row(std::span<const Tensor> a, std::span<const Tensor> b);
std::vector<double> fid_proxy_row(const Classifier& classifier, std::span<const Tensor> attacked,
                                  std::span<const Tensor> baseline, double regularization);

/// Mean per-image RMS distance sqrt(sum (a - b)^2 / numel) between paired images.
double rms_distance(const Tensor& a, const Tensor& b);

/// Frechet distance between Gaussian fits of two [n, dim] feature sets.
/// regularization is added to both covariance diagonals; with zero
/// regularization a singular covariance throws std::domain_error.
double frechet_distance(const Tensor& features_a, const Tensor& features_b,
                        double regularization);

/// Rows are models (baseline first by convention), columns are classes.
MetricMatrix accuracy_matrix(std::span<const NamedModel> models, const Classifier& classifier,
                             const SamplingSetup& setup, const std::vector<std::string>& classes);
/// One row: paired-seed RMS distance per class between a and b.
MetricMatrix paired_l2(const NamedModel& a, const NamedModel& b, const SamplingSetup& setup,
                       const std::vector<std::string>& classes);
/// One row per attacked model: feature Frechet distance to the baseline's images.
MetricMatrix fid_proxy_matrix(const NamedModel& baseline, std::span<const NamedModel> attacked,
                              const Classifier& classifier, const SamplingSetup& setup,
                              const std::vector<std::string>& classes, double regularization);

struct EvaluationReport {
  std::vector<std::string> class_names;
  std::vector<int> attack_targets;  // class index per attacked row
  MetricMatrix accuracy;            // baseline row + one row per attacked model
  MetricMatrix l2;                  // one row per attacked model
  MetricMatrix fid_proxy;           // one row per attacked model
  int images_per_cell = 0;
  std::uint64_t seed_base = 0;
  /// Per attacked row: target-class accuracy did not exceed the baseline's.
  std::vector<bool> target_not_above_baseline;
};

/// Validates axes and value ranges and assembles the report.
EvaluationReport build_report(std::vector<std::string> class_names, std::vector<int> attack_targets,
                              MetricMatrix accuracy, MetricMatrix l2, MetricMatrix fid_proxy,
                              int images_per_cell, std::uint64_t seed_base);

/// Generates each model's images once and computes all three matrices.
EvaluationReport evaluate_models(const NamedModel& baseline, std::span<const NamedModel> attacked,
                                 std::span<const int> attack_targets, const Classifier& classifier,
                                 const SamplingSetup& setup,
                                 const std::vector<std::string>& classes, double regularization);

}  // namespace crafted
