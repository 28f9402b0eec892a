// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/params.hpp"

#include <stdexcept>

namespace crafted {

std::size_t ParameterSet::add(std::string name, Shape shape) {
  for (const auto& e : entries_) {
    if (e.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  ParameterEntry entry{std::move(name), std::move(shape), values_.size(), 0};
  entry.size = shape_numel(entry.shape);
  values_.resize(values_.size() + entry.size, 0.0);
  entries_.push_back(std::move(entry));
  return entries_.size() - 1;
}

std::size_t ParameterSet::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name == name) return i;
  }
  throw std::out_of_range("unknown parameter: " + name);
}

const ParameterEntry& ParameterSet::entry(const std::string& name) const {
  return entries_[index_of(name)];
}

std::span<double> ParameterSet::view(std::size_t index) {
  const auto& e = entries_.at(index);
  return std::span<double>(values_).subspan(e.offset, e.size);
}

std::span<const double> ParameterSet::view(std::size_t index) const {
  const auto& e = entries_.at(index);
  return std::span<const double>(values_).subspan(e.offset, e.size);
}

bool ParameterSet::same_layout(const ParameterSet& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    if (entries_[i].name != other.entries_[i].name ||
        entries_[i].shape != other.entries_[i].shape) {
      return false;
    }
  }
  return true;
}

}  // namespace crafted
