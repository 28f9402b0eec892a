// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "crafted/classifier.hpp"
#include "crafted/dataset.hpp"
#include "crafted/noise_predictor.hpp"
#include "crafted/optim.hpp"
#include "crafted/training.hpp"
#include "test_support.hpp"

namespace crafted {
namespace {

TEST_CASE("noise predictor parameter count") {
  // c = 16, D = 32, K = 3, one input channel, summed by hand:
  //   time_embed 32*32+32, class table 4*32, conv_in 16*9+16,
  //   down1 16*16*9+16 + 16*32+16, down2 32*16*9+32 + 32*32+32,
  //   mid 32*32*9+32 + 32*32+32 + 32*32*9+32,
  //   up2 32*64*9+32, up1 16*48*9+16, conv_out 16*9+1
  const int expected = 1056 + 128 + 160 + 2320 + 528 + 4640 + 1056 + 9248 + 1056 + 9248 +
                       18464 + 6928 + 145;
  CHECK(NoisePredictor(NoisePredictorArch{}).params().size() == 54977);
  CHECK(expected == 54977);
  // The micro model used for gradient checks stays under a thousand parameters.
  CHECK(NoisePredictor(NoisePredictorArch{1, 8, 2, 4, 3}).params().size() == 937);
}

TEST_CASE("noise predictor rejects bad input") {
  const NoisePredictor model = NoisePredictor::initialize({1, 8, 2, 4, 3}, 1);
  const Tensor x({1, 1, 8, 8});
  CHECK_THROWS(model.predict_noise(Tensor({1, 1, 4, 4}), std::vector<int>{1}, std::vector<int>{0}));
  CHECK_THROWS(model.predict_noise(x, std::vector<int>{1, 2}, std::vector<int>{0}));
  CHECK_THROWS(model.predict_noise(x, std::vector<int>{1}, std::vector<int>{3}));
  CHECK_NOTHROW(model.predict_noise(x, std::vector<int>{1}, std::vector<int>{kUnconditional}));
  CHECK_THROWS_AS(NoisePredictorArch({1, 6, 2, 4, 3}).validate(), std::invalid_argument);
  CHECK_THROWS_AS(NoisePredictorArch({1, 8, 2, 3, 3}).validate(), std::invalid_argument);
}

TEST_CASE("noise predictor backward agrees with finite differences") {
  NoisePredictor model = NoisePredictor::initialize({1, 8, 2, 4, 3}, 2);
  Tensor x = test::random_tensor({3, 1, 8, 8}, 3);
  const std::vector<int> t = {5, 400, 999};
  const std::vector<int> labels = {0, kUnconditional, 2};
  const Tensor probe = test::random_tensor({3, 1, 8, 8}, 4);
  auto loss = [&] { return dot(model.predict_noise(x, t, labels).values(), probe.values()); };

  NoisePredictor::Cache cache;
  model.forward(x, t, labels, &cache);
  std::vector<double> grads(model.params().size(), 0.0);
  Tensor gx;
  model.backward(cache, probe, grads, &gx);
  CHECK(test::relative_error(grads, test::numeric_gradient(model.params().flat(), loss)) < 1e-6);
  CHECK(test::relative_error(gx.values(), test::numeric_gradient(x.values(), loss)) < 1e-6);
  // Unused class rows receive no gradient.
  const auto& table = model.params().entry("class_embed.weight");
  for (std::size_t j = 0; j < 4; ++j) CHECK(grads[table.offset + 1 * 4 + j] == 0.0);
}

TEST_CASE("initialisation is seeded") {
  const NoisePredictorArch arch{1, 8, 2, 4, 3};
  CHECK(NoisePredictor::initialize(arch, 5).params() == NoisePredictor::initialize(arch, 5).params());
  CHECK_FALSE(NoisePredictor::initialize(arch, 5).params() ==
              NoisePredictor::initialize(arch, 6).params());
  const auto model = NoisePredictor::initialize(arch, 5);
  for (double b : model.params().view("conv_in.bias")) CHECK(b == 0.0);
}

TEST_CASE("classifier backward agrees with finite differences") {
  Classifier cls = Classifier::initialize({1, 8, 2, 4, 3}, 7);
  Tensor images = test::random_tensor({2, 1, 8, 8}, 8, 0.3);
  for (auto& v : images.values()) v = std::clamp(v + 0.5, 0.0, 1.0);
  const Tensor probe = test::random_tensor({2, 3}, 9);
  auto loss = [&] { return dot(cls.forward(images).logits.values(), probe.values()); };
  Classifier::Cache cache;
  cls.forward(images, &cache);
  std::vector<double> grads(cls.params().size(), 0.0);
  Tensor gi;
  cls.backward(cache, probe, grads, &gi);
  CHECK(test::relative_error(grads, test::numeric_gradient(cls.params().flat(), loss)) < 1e-6);
  CHECK(test::relative_error(gi.values(), test::numeric_gradient(images.values(), loss)) < 1e-6);
  Tensor gi2;
  cls.backward(cache, probe, {}, &gi2);
  CHECK(gi2 == gi);
  CHECK(cls.forward(images).features.shape() == Shape{2, 4});
}

TEST_CASE("cross entropy matches high-precision values") {
  Tensor grad;
  const Tensor two({1, 2}, {2.0, 0.0});
  CHECK(cross_entropy(two, std::vector<int>{0}, &grad) ==
        doctest::Approx(0.12692801104297249644).epsilon(1e-14));
  const Tensor three({2, 3}, {1.0, 2.0, 3.0, 1001.0, 1002.0, 1003.0});
  // Both rows share the softmax (shift invariance); label 0 each.
  CHECK(cross_entropy(three, std::vector<int>{0, 0}, &grad) ==
        doctest::Approx(2.4076059644443803045).epsilon(1e-13));
  // d/dlogits of the batch mean: (softmax - onehot) / N.
  CHECK(grad[0] == doctest::Approx((0.090030573170380457998 - 1.0) / 2).epsilon(1e-13));
  CHECK(grad[2] == doctest::Approx(0.66524095577482188953 / 2).epsilon(1e-13));
  CHECK(std::isfinite(grad[5]));
}

TEST_CASE("AdamW matches a 40-digit reference over two steps") {
  std::vector<double> theta = {1.0, -2.0};
  AdamWState state;
  const AdamWOptions opts{.learning_rate = 0.1, .weight_decay = 0.01};
  adamw_update(theta, std::vector<double>{0.5, -0.1}, state, opts);
  CHECK(theta[0] == doctest::Approx(0.89900000199999996).epsilon(1e-14));
  CHECK(theta[1] == doctest::Approx(-1.898000009999999).epsilon(1e-14));
  adamw_update(theta, std::vector<double>{-0.3, 0.2}, state, opts);
  CHECK(theta[0] == doctest::Approx(0.87895119893977505545).epsilon(1e-13));
  CHECK(theta[1] == doctest::Approx(-1.9327123603784891061).epsilon(1e-13));
  CHECK(state.step == 2);
  CHECK_THROWS(adamw_update(theta, std::vector<double>{1.0}, state, opts));
}

TEST_CASE("weight decay pulls towards zero") {
  std::vector<double> theta = {3.0};
  AdamWState state;
  adamw_update(theta, std::vector<double>{0.0}, state, {.learning_rate = 0.5, .weight_decay = 0.1});
  CHECK(theta[0] == doctest::Approx(3.0 * (1.0 - 0.05)));
}

TEST_CASE("shapes dataset") {
  const Dataset data = make_shapes_dataset({3, 16, 20, 10}, 1);
  CHECK(data.class_names == std::vector<std::string>{"square", "ring", "plus"});
  CHECK(data.train.size() == 60);
  CHECK(data.test.size() == 30);
  CHECK(data.train.images.shape() == Shape{60, 1, 16, 16});
  CHECK_NOTHROW(validate_dataset(data.train, 3));
  for (std::size_t i = 0; i < 6; ++i) CHECK(data.train.labels[i] == static_cast<int>(i % 3));
  const Dataset again = make_shapes_dataset({3, 16, 20, 10}, 1);
  CHECK(again.train.images == data.train.images);
  CHECK_FALSE(make_shapes_dataset({3, 16, 20, 10}, 2).train.images == data.train.images);
  CHECK_THROWS(shape_class_names(5));
  CHECK_THROWS(shape_class_names(1));
  CHECK(shape_class_names(4).back() == "stripes");
}

TEST_CASE("classifier training separates the shapes") {
  const Dataset data = make_shapes_dataset({3, 16, 60, 30}, 3);
  const auto trained = train_classifier(Classifier::initialize({1, 16, 4, 16, 3}, 4), data,
                                        {4, 16, 3e-3}, 5);
  CHECK(trained.loss_curve.size() == 4);
  CHECK(trained.loss_curve.back() < trained.loss_curve.front());
  CHECK(trained.test_accuracy > 0.9);
}

TEST_CASE("noise training lowers the loss and is deterministic") {
  const Dataset data = make_shapes_dataset({2, 8, 16, 4}, 6);
  const auto schedule = NoiseSchedule::linear(100, 1e-3, 0.05);
  const NoiseTrainingConfig cfg{3, 8, 3e-3, 0.1};
  const auto a = train_noise_predictor(NoisePredictor::initialize({1, 8, 4, 8, 2}, 7), data.train,
                                       schedule, cfg, 8);
  const auto b = train_noise_predictor(NoisePredictor::initialize({1, 8, 4, 8, 2}, 7), data.train,
                                       schedule, cfg, 8);
  CHECK(a.loss_curve.size() == 3);
  CHECK(a.loss_curve.back() < a.loss_curve.front());
  CHECK(a.model.params() == b.model.params());
}

}  // namespace
}  // namespace crafted
