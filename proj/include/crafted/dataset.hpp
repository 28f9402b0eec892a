// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "crafted/tensor.hpp"

namespace crafted {

struct LabeledImages {
  Tensor images;            // [N, 1, S, S] in [0, 1]
  std::vector<int> labels;  // [N]

  std::size_t size() const { return labels.size(); }
  /// Gathers the listed rows into a new batch.
  LabeledImages subset(std::span<const std::size_t> rows) const;
};

/// Procedural grayscale shapes dataset with train/test splits.
struct Dataset {
  std::vector<std::string> class_names;
  LabeledImages train;
  LabeledImages test;

  int num_classes() const { return static_cast<int>(class_names.size()); }
};

struct ShapesConfig {
  int num_classes = 3;  // 2..4 of: square, ring, plus, stripes
  int image_size = 16;
  int train_per_class = 300;
  int test_per_class = 100;
};

/// Names of the first num_classes shapes.
std::vector<std::string> shape_class_names(int num_classes);

/// Balanced dataset; classes are interleaved so any prefix stays balanced.
Dataset make_shapes_dataset(const ShapesConfig& config, std::uint64_t seed);

/// Validates images in [0, 1] and labels in [0, num_classes).
void validate_dataset(const LabeledImages& data, int num_classes);

}  // namespace crafted
