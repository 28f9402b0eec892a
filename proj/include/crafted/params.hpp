// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crafted/tensor.hpp"

namespace crafted {

struct ParameterEntry {
  std::string name;
  Shape shape;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// Named parameter tensors backed by a single flat buffer.
///
/// Entries keep their registration order, which is also the flattening order
/// used by checkpoints, optimizers and the delta tracker.
class ParameterSet {
 public:
  /// Appends a zero-initialised entry and returns its index.
  std::size_t add(std::string name, Shape shape);

  const std::vector<ParameterEntry>& entries() const { return entries_; }
  const ParameterEntry& entry(std::size_t index) const { return entries_.at(index); }
  const ParameterEntry& entry(const std::string& name) const;
  std::size_t index_of(const std::string& name) const;

  std::size_t size() const { return values_.size(); }

  std::span<double> flat() { return values_; }
  std::span<const double> flat() const { return values_; }

  std::span<double> view(std::size_t index);
  std::span<const double> view(std::size_t index) const;
  std::span<double> view(const std::string& name) { return view(index_of(name)); }
  std::span<const double> view(const std::string& name) const { return view(index_of(name)); }

  /// True when entry names and shapes agree (values may differ).
  bool same_layout(const ParameterSet& other) const;

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    return a.same_layout(b) && a.values_ == b.values_;
  }

 private:
  std::vector<ParameterEntry> entries_;
  std::vector<double> values_;
};

}  // namespace crafted
