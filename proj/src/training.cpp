// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "crafted/optim.hpp"
#include "crafted/rng.hpp"

namespace crafted {
namespace {

std::vector<std::size_t> shuffled_indices(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Explicit Fisher-Yates: std::shuffle is not specified bit-for-bit.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.engine()() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

// Cosine decay from base to base / 10 over the run.
double cosine_learning_rate(double base, int epoch, int epochs) {
  if (epochs <= 1) return base;
  const double progress = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return base * (0.1 + 0.45 * (1.0 + std::cos(3.14159265358979323846 * progress)));
}

}  // namespace

double cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad_logits) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  if (labels.size() != n) throw std::invalid_argument("cross_entropy: label count mismatch");
  if (grad_logits) *grad_logits = Tensor(logits.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = logits.data() + i * c;
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      throw std::out_of_range("cross_entropy: label out of range");
    }
    const double mx = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double log_z = mx + std::log(z);
    total += log_z - row[y];
    if (grad_logits) {
      for (std::size_t j = 0; j < c; ++j) {
        const double p = std::exp(row[j] - log_z);
        (*grad_logits)[i * c + j] = (p - (static_cast<int>(j) == y ? 1.0 : 0.0)) / n;
      }
    }
  }
  return total / static_cast<double>(n);
}

TrainedNoisePredictor train_noise_predictor(NoisePredictor model, const LabeledImages& data,
                                            const NoiseSchedule& schedule,
                                            const NoiseTrainingConfig& config,
                                            std::uint64_t seed) {
  if (data.size() == 0) throw std::invalid_argument("train_noise_predictor: empty dataset");
  if (!(config.cond_dropout >= 0.0 && config.cond_dropout < 1.0)) {
    throw std::invalid_argument("cond_dropout must lie in [0, 1)");
  }
  if (config.epochs < 0 || config.batch_size < 1) {
    throw std::invalid_argument("train_noise_predictor: invalid epochs or batch size");
  }
  Rng rng(seed);
  AdamWState state;
  AdamWOptions opts{.learning_rate = config.learning_rate, .weight_decay = 0.0};
  std::vector<double> grads(model.params().size());
  TrainedNoisePredictor out{std::move(model), {}};
  const int num_steps = schedule.num_train_steps();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opts.learning_rate = cosine_learning_rate(config.learning_rate, epoch, config.epochs);
    const auto order = shuffled_indices(data.size(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const std::span<const std::size_t> rows(order.data() + start, end - start);
      LabeledImages batch = data.subset(rows);
      const std::size_t n = batch.size();

      Tensor noise(batch.images.shape());
      Tensor x_t(batch.images.shape());
      std::vector<int> steps(n), labels(n);
      rng.fill_normal(noise.span());
      for (std::size_t i = 0; i < n; ++i) {
        steps[i] = rng.uniform_int(1, num_steps);
        labels[i] = rng.uniform() < config.cond_dropout ? kUnconditional : batch.labels[i];
        const double abar = schedule.alpha_cumprod(steps[i]);
        const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
        auto src = batch.images.item_span(i);
        auto eps = noise.item_span(i);
        auto dst = x_t.item_span(i);
        for (std::size_t j = 0; j < src.size(); ++j) dst[j] = a * (2.0 * src[j] - 1.0) + b * eps[j];
      }

      NoisePredictor::Cache cache;
      const Tensor pred = out.model.forward(x_t, steps, labels, &cache);
      Tensor grad_out(pred.shape());
      double loss = 0.0;
      const double scale = 1.0 / static_cast<double>(pred.numel());
      for (std::size_t j = 0; j < pred.numel(); ++j) {
        const double diff = pred[j] - noise[j];
        loss += diff * diff * scale;
        grad_out[j] = 2.0 * diff * scale;
      }
      std::fill(grads.begin(), grads.end(), 0.0);
      out.model.backward(cache, grad_out, grads);
      adamw_update(out.model.params().flat(), grads, state, opts);
      epoch_loss += loss;
      ++batches;
    }
    out.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  return out;
}

double classifier_accuracy(const Classifier& classifier, const LabeledImages& data) {
  if (data.size() == 0) throw std::invalid_argument("classifier_accuracy: empty dataset");
  const auto pred = predicted_labels(classify(classifier, data.images).logits);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == data.labels[i];
  return static_cast<double>(correct) / static_cast<double>(pred.size());
}

TrainedClassifier train_classifier(Classifier classifier, const Dataset& data,
                                   const ClassifierTrainingConfig& config, std::uint64_t seed) {
  if (data.train.size() == 0 || data.test.size() == 0) {
    throw std::invalid_argument("train_classifier: empty dataset");
  }
  if (config.epochs < 0 || config.batch_size < 1) {
    throw std::invalid_argument("train_classifier: invalid epochs or batch size");
  }
  validate_dataset(data.train, classifier.arch().num_classes);
  Rng rng(seed);
  AdamWState state;
  const AdamWOptions opts{.learning_rate = config.learning_rate, .weight_decay = 0.0};
  std::vector<double> grads(classifier.params().size());
  TrainedClassifier out{std::move(classifier), {}, 0.0, 0.0};

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    const auto order = shuffled_indices(data.train.size(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const LabeledImages batch =
          data.train.subset(std::span<const std::size_t>(order.data() + start, end - start));
      Classifier::Cache cache;
      const auto fwd = out.classifier.forward(batch.images, &cache);
      Tensor grad_logits;
      epoch_loss += cross_entropy(fwd.logits, batch.labels, &grad_logits);
      std::fill(grads.begin(), grads.end(), 0.0);
      out.classifier.backward(cache, grad_logits, grads, nullptr);
      adamw_update(out.classifier.params().flat(), grads, state, opts);
      ++batches;
    }
    out.loss_curve.push_back(epoch_loss / static_cast<double>(batches));
  }
  out.train_accuracy = classifier_accuracy(out.classifier, data.train);
  out.test_accuracy = classifier_accuracy(out.classifier, data.test);
  return out;
}

}  // namespace crafted
