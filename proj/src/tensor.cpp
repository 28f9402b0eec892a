// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace crafted {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ", ";
    out << shape[i];
  }
  out << ']';
  return out.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw std::invalid_argument("tensor data size " + std::to_string(data_.size()) +
                                " does not match shape " + shape_to_string(shape_));
  }
}

std::size_t Tensor::item_numel() const {
  if (shape_.empty()) throw std::logic_error("item_numel on rank-0 tensor");
  return shape_[0] == 0 ? 0 : data_.size() / shape_[0];
}

Tensor Tensor::item(std::size_t i) const {
  auto s = item_span(i);
  return Tensor(Shape(shape_.begin() + 1, shape_.end()),
                std::vector<double>(s.begin(), s.end()));
}

std::span<double> Tensor::item_span(std::size_t i) {
  const std::size_t n = item_numel();
  if (i >= shape_[0]) throw std::out_of_range("tensor item index out of range");
  return std::span<double>(data_).subspan(i * n, n);
}

std::span<const double> Tensor::item_span(std::size_t i) const {
  const std::size_t n = item_numel();
  if (i >= shape_[0]) throw std::out_of_range("tensor item index out of range");
  return std::span<const double>(data_).subspan(i * n, n);
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size()) {
    throw std::invalid_argument("cannot reshape " + shape_to_string(shape_) + " to " +
                                shape_to_string(shape));
  }
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw std::invalid_argument("stack of zero tensors");
  Shape shape{items.size()};
  shape.insert(shape.end(), items[0].shape().begin(), items[0].shape().end());
  std::vector<double> data;
  data.reserve(shape_numel(shape));
  for (const auto& t : items) {
    if (t.shape() != items[0].shape()) {
      throw std::invalid_argument("stack: mismatched shapes " + shape_to_string(t.shape()) +
                                  " vs " + shape_to_string(items[0].shape()));
    }
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  return Tensor(std::move(shape), std::move(data));
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                shape_to_string(a.shape()) + " vs " +
                                shape_to_string(b.shape()));
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dot: length mismatch");
  // Fixed-order accumulation keeps results independent of memory alignment.
  long double acc = 0.0L;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<long double>(a[i]) * b[i];
  return static_cast<double>(acc);
}

double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace crafted
