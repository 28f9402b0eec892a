// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "crafted/classifier.hpp"
#include "crafted/dataset.hpp"
#include "crafted/diffusion.hpp"
#include "crafted/noise_predictor.hpp"

namespace crafted {

struct NoiseTrainingConfig {
  int epochs = 40;
  int batch_size = 32;
  double learning_rate = 2e-3;
  double cond_dropout = 0.1;
};

struct TrainedNoisePredictor {
  NoisePredictor model;
  std::vector<double> loss_curve;  // mean noise MSE per epoch
};

/// Noise-prediction MSE at uniformly drawn timesteps; labels are dropped to
/// NULL with probability cond_dropout so the model also learns the
/// unconditional branch.
TrainedNoisePredictor train_noise_predictor(NoisePredictor model, const LabeledImages& data,
                                            const NoiseSchedule& schedule,
                                            const NoiseTrainingConfig& config,
                                            std::uint64_t seed);

struct ClassifierTrainingConfig {
  int epochs = 8;
  int batch_size = 32;
  double learning_rate = 2e-3;
};

struct TrainedClassifier {
  Classifier classifier;
  std::vector<double> loss_curve;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

TrainedClassifier train_classifier(Classifier classifier, const Dataset& data,
                                   const ClassifierTrainingConfig& config, std::uint64_t seed);

/// Fraction of rows whose argmax matches the label.
double classifier_accuracy(const Classifier& classifier, const LabeledImages& data);

/// Mean cross-entropy of a [N, C] logits batch and d(loss)/d(logits).
double cross_entropy(const Tensor& logits, std::span<const int> labels, Tensor* grad_logits);

}  // namespace crafted
