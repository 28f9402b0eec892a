// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "crafted/rng.hpp"

namespace crafted {
namespace {

constexpr const char* kShapeNames[] = {"square", "ring", "plus", "stripes"};
constexpr int kSupersample = 4;

// Coverage test for one shape in unit-pixel coordinates.
struct ShapeParams {
  int kind = 0;
  double cx = 0, cy = 0, size = 0, thickness = 0;
};

bool covers(const ShapeParams& s, double x, double y) {
  const double dx = x - s.cx, dy = y - s.cy;
  switch (s.kind) {
    case 0:
      return std::abs(dx) <= s.size && std::abs(dy) <= s.size;
    case 1: {
      const double r = std::sqrt(dx * dx + dy * dy);
      return std::abs(r - s.size) <= s.thickness;
    }
    case 2:
      return (std::abs(dx) <= s.thickness && std::abs(dy) <= s.size) ||
             (std::abs(dy) <= s.thickness && std::abs(dx) <= s.size);
    default: {
      const double gap = 0.5 * s.size;
      return std::abs(dx) <= s.size &&
             (std::abs(dy - gap) <= s.thickness || std::abs(dy + gap) <= s.thickness);
    }
  }
}

void render(int kind, int image_size, Rng& rng, std::span<double> out) {
  const double s = image_size;
  ShapeParams p;
  p.kind = kind;
  switch (kind) {
    case 0: p.size = rng.uniform(0.18, 0.30) * s; break;
    case 1: p.size = rng.uniform(0.22, 0.34) * s; p.thickness = 0.07 * s; break;
    case 2: p.size = rng.uniform(0.25, 0.38) * s; p.thickness = 0.07 * s; break;
    default: p.size = rng.uniform(0.25, 0.38) * s; p.thickness = 0.07 * s; break;
  }
  // Shapes sit near the centre with a small positional jitter.
  const double jitter = 0.125 * s;
  p.cx = 0.5 * s + rng.uniform(-jitter, jitter);
  p.cy = 0.5 * s + rng.uniform(-jitter, jitter);
  const double foreground = rng.uniform(0.75, 1.0);
  const double background = rng.uniform(0.0, 0.1);
  for (int y = 0; y < image_size; ++y) {
    for (int x = 0; x < image_size; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          hits += covers(p, x + (sx + 0.5) / kSupersample, y + (sy + 0.5) / kSupersample);
        }
      }
      const double cover = static_cast<double>(hits) / (kSupersample * kSupersample);
      const double v = background + cover * (foreground - background) + 0.02 * rng.normal();
      out[static_cast<std::size_t>(y * image_size + x)] = std::clamp(v, 0.0, 1.0);
    }
  }
}

LabeledImages make_split(int num_classes, int per_class, int image_size, Rng& rng) {
  const std::size_t n = static_cast<std::size_t>(num_classes * per_class);
  const std::size_t s = static_cast<std::size_t>(image_size);
  LabeledImages out{Tensor({n, 1, s, s}), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    out.labels[i] = label;
    render(label, image_size, rng, out.images.item_span(i));
  }
  return out;
}

}  // namespace

LabeledImages LabeledImages::subset(std::span<const std::size_t> rows) const {
  std::vector<Tensor> items;
  items.reserve(rows.size());
  LabeledImages out;
  for (auto r : rows) {
    items.push_back(images.item(r));
    out.labels.push_back(labels.at(r));
  }
  out.images = stack(items);
  return out;
}

std::vector<std::string> shape_class_names(int num_classes) {
  if (num_classes < 2 || num_classes > 4) {
    throw std::invalid_argument("shapes dataset supports 2 to 4 classes");
  }
  return std::vector<std::string>(kShapeNames, kShapeNames + num_classes);
}

Dataset make_shapes_dataset(const ShapesConfig& config, std::uint64_t seed) {
  if (config.image_size < 8) throw std::invalid_argument("shapes image_size must be >= 8");
  if (config.train_per_class < 1 || config.test_per_class < 1) {
    throw std::invalid_argument("shapes dataset needs at least one image per class and split");
  }
  Dataset ds;
  ds.class_names = shape_class_names(config.num_classes);
  Rng rng(seed);
  ds.train = make_split(config.num_classes, config.train_per_class, config.image_size, rng);
  ds.test = make_split(config.num_classes, config.test_per_class, config.image_size, rng);
  return ds;
}

void validate_dataset(const LabeledImages& data, int num_classes) {
  if (num_classes < 2) throw std::invalid_argument("dataset needs at least two classes");
  if (data.size() == 0) throw std::invalid_argument("dataset is empty");
  if (data.images.rank() != 4 || data.images.dim(0) != data.size()) {
    throw std::invalid_argument("dataset images must be [N, C, H, W] matching the labels");
  }
  for (int label : data.labels) {
    if (label < 0 || label >= num_classes) {
      throw std::invalid_argument("dataset label " + std::to_string(label) + " out of range");
    }
  }
  for (double v : data.images.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("dataset pixel outside [0, 1]");
  }
}

}  // namespace crafted
