// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>

#include "crafted/evaluation.hpp"
#include "crafted/noise_predictor.hpp"
#include "test_support.hpp"

namespace crafted {
namespace {

// Independent Frechet distance: general (non-symmetric) eigen-decomposition of
// cov_a * cov_b and the sum of the square roots of its eigenvalues.
double frechet_oracle(const Tensor& fa, const Tensor& fb) {
  const auto to_mat = [](const Tensor& t) {
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = t[i * t.dim(1) + j];
    return m;
  };
  const Eigen::MatrixXd a = to_mat(fa), b = to_mat(fb);
  const Eigen::RowVectorXd ma = a.colwise().mean(), mb = b.colwise().mean();
  const Eigen::MatrixXd ca = (a.rowwise() - ma).transpose() * (a.rowwise() - ma) / (a.rows() - 1.0);
  const Eigen::MatrixXd cb = (b.rowwise() - mb).transpose() * (b.rowwise() - mb) / (b.rows() - 1.0);
  Eigen::EigenSolver<Eigen::MatrixXd> solver(ca * cb);
  double tr = 0.0;
  for (const auto& ev : solver.eigenvalues()) tr += std::sqrt(std::complex<double>(ev)).real();
  return (ma - mb).squaredNorm() + ca.trace() + cb.trace() - 2.0 * tr;
}

Tensor rows_tensor(std::initializer_list<std::initializer_list<double>> rows) {
  std::vector<double> v;
  std::size_t d = 0;
  for (const auto& r : rows) {
    d = r.size();
    v.insert(v.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), d}, v);
}

TEST_CASE("frechet distance matches frozen reference values") {
  const Tensor a = rows_tensor({{0, 0}, {1, 0}, {0, 1}, {1, 1}, {2, 1}});
  const Tensor b = rows_tensor({{0, 0}, {2, 0}, {0, 1}, {3, 2}, {1, -1}});
  CHECK(frechet_distance(a, b, 0.0) == doctest::Approx(0.7748847507326477).epsilon(1e-10));
  CHECK(frechet_distance(a, b, 1e-6) == doctest::Approx(0.7748840447695384).epsilon(1e-10));
}

TEST_CASE("frechet distance agrees with a general eigen-solver oracle") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Tensor a = test::random_tensor({60, 5}, seed);
    Tensor b = test::random_tensor({80, 5}, seed + 100, 1.5);
    for (std::size_t i = 0; i < b.numel(); i += 5) b[i] += 0.7;
    const double got = frechet_distance(a, b, 0.0);
    CHECK(got == doctest::Approx(frechet_oracle(a, b)).epsilon(1e-9));
    CHECK(frechet_distance(b, a, 0.0) == doctest::Approx(got).epsilon(1e-9));
  }
}

TEST_CASE("frechet distance properties") {
  const Tensor a = test::random_tensor({50, 4}, 7);
  CHECK(frechet_distance(a, a, 0.0) <= 1e-10);
  // Row order does not matter.
  Tensor shuffled = a;
  for (std::size_t i = 0; i < 50; ++i)
    for (std::size_t j = 0; j < 4; ++j) shuffled[i * 4 + j] = a[(49 - i) * 4 + j];
  const Tensor b = test::random_tensor({50, 4}, 8);
  CHECK(frechet_distance(shuffled, b, 0.0) == doctest::Approx(frechet_distance(a, b, 0.0)));
  // A pure translation adds exactly the squared mean shift.
  Tensor moved = a;
  for (std::size_t i = 0; i < moved.numel(); ++i) moved[i] += 0.5;
  CHECK(frechet_distance(a, moved, 0.0) == doctest::Approx(4 * 0.25).epsilon(1e-9));
  // Degenerate covariance without regularization is refused; with it the value is finite.
  Tensor flat = a;
  for (std::size_t i = 0; i < 50; ++i) flat[i * 4 + 3] = 1.0;
  CHECK_THROWS_AS(frechet_distance(flat, b, 0.0), std::domain_error);
  CHECK(std::isfinite(frechet_distance(flat, b, 1e-6)));
  CHECK_THROWS(frechet_distance(a, test::random_tensor({50, 3}, 9), 0.0));
  CHECK_THROWS(frechet_distance(a, b, -1.0));
}

TEST_CASE("paired L2 is the mean per-image RMS difference") {
  const Tensor a = test::random_tensor({4, 1, 3, 3}, 1);
  CHECK(rms_distance(a, a) == 0.0);
  Tensor shifted = a;
  for (auto& v : shifted.values()) v += 0.1;
  CHECK(rms_distance(a, shifted) == doctest::Approx(0.1).epsilon(1e-12));
  const Tensor b = test::random_tensor({4, 1, 3, 3}, 2);
  const Tensor c = test::random_tensor({4, 1, 3, 3}, 3);
  CHECK(rms_distance(a, c) <= rms_distance(a, b) + rms_distance(b, c) + 1e-12);
  CHECK(rms_distance(a, b) == rms_distance(b, a));
  CHECK_THROWS(rms_distance(a, Tensor({4, 1, 3, 2})));
  const std::vector<Tensor> xs = {a, b}, ys = {a, c};
  const auto row = paired_l2_row(xs, ys);
  CHECK(row[0] == 0.0);
  CHECK(row[1] == rms_distance(b, c));
}

TEST_CASE("accuracy of an input-independent classifier") {
  Classifier clf(ClassifierArch{1, 8, 2, 4, 3});
  auto flat = clf.params().flat();
  flat[flat.size() - 1] = 5.0;  // output bias of class 2
  const std::vector<Tensor> images = {test::random_tensor({5, 1, 8, 8}, 1),
                                      test::random_tensor({3, 1, 8, 8}, 2),
                                      test::random_tensor({2, 1, 8, 8}, 3)};
  CHECK(accuracy_row(clf, images) == std::vector<double>{0.0, 0.0, 1.0});
}

TEST_CASE("metric matrix CSV round trip") {
  MetricMatrix m;
  m.cols = {"circle", "square", "triangle"};
  m.append_row("baseline", std::vector<double>{1.0, 0.1 + 0.2, 1.0 / 3.0});
  m.append_row("circle", std::vector<double>{1e-300, 0.5, 0.25});
  const std::string csv = m.to_csv();
  CHECK(csv.rfind("attack_target,circle,square,triangle\nbaseline,", 0) == 0);
  CHECK(MetricMatrix::from_csv(csv) == m);
  CHECK_THROWS(m.append_row("bad", std::vector<double>{1.0}));
  CHECK_THROWS(MetricMatrix::from_csv("attack_target,a\nx,1,2\n"));
}

TEST_CASE("report validation") {
  const std::vector<std::string> classes = {"a", "b"};
  MetricMatrix acc, l2, fid;
  acc.cols = l2.cols = fid.cols = classes;
  acc.append_row("baseline", std::vector<double>{0.9, 0.8});
  SUBCASE("baseline only") {
    const auto r = build_report(classes, {}, acc, l2, fid, 10, 0);
    CHECK(r.target_not_above_baseline.empty());
  }
  SUBCASE("one attacked row") {
    acc.append_row("a", std::vector<double>{0.2, 0.8});
    l2.append_row("a", std::vector<double>{0.3, 0.1});
    fid.append_row("a", std::vector<double>{4.0, 0.5});
    const auto r = build_report(classes, {0}, acc, l2, fid, 10, 0);
    CHECK(r.target_not_above_baseline == std::vector<bool>{true});
    CHECK_THROWS(build_report(classes, {2}, acc, l2, fid, 10, 0));
    CHECK_THROWS(build_report(classes, {}, acc, l2, fid, 10, 0));
    MetricMatrix other = l2;
    other.cols = {"a", "c"};
    CHECK_THROWS(build_report(classes, {0}, acc, other, fid, 10, 0));
    MetricMatrix negative = l2;
    negative.values[0] = -1.0;
    CHECK_THROWS(build_report(classes, {0}, acc, negative, fid, 10, 0));
  }
}

TEST_CASE("image generation is seeded per cell and independent of the worker count") {
  const NoisePredictor model = NoisePredictor::initialize({1, 8, 4, 8, 3}, 5);
  SamplingSetup setup;
  setup.plan = InferencePlan::evenly_spaced(setup.schedule, 4, 2);
  setup.images_per_class = 18;  // spans two chunks
  setup.seed_base = 12;
  const auto serial = generate_class_images(model, setup);
  setup.jobs = 3;
  const auto parallel = generate_class_images(model, setup);
  REQUIRE(serial.size() == 3);
  for (std::size_t c = 0; c < 3; ++c) CHECK(serial[c] == parallel[c]);
  const Tensor one = sample(model, setup.schedule, setup.plan, {2, 3.0},
                            evaluation_seed(setup, 2, 17));
  const std::size_t m = one.numel();
  CHECK(std::equal(one.values().begin(), one.values().end(),
                   serial[2].values().begin() + static_cast<long>(17 * m)));
  CHECK(evaluation_seed(setup, 1, 0) == evaluation_seed(setup, 0, 17) + 1);
}

TEST_CASE("end-to-end evaluation of identical models") {
  const NoisePredictor model = NoisePredictor::initialize({1, 8, 4, 8, 3}, 5);
  const Classifier clf = Classifier::initialize({1, 8, 2, 4, 3}, 6);
  SamplingSetup setup;
  setup.plan = InferencePlan::evenly_spaced(setup.schedule, 4, 2);
  setup.images_per_class = 6;
  const std::vector<std::string> classes = {"x", "y", "z"};
  const NamedModel base{"baseline", &model}, same{"x", &model};
  const std::vector<NamedModel> attacked = {same};
  const std::vector<int> targets = {0};
  const auto report = evaluate_models(base, attacked, targets, clf, setup, classes, 1e-6);
  CHECK(report.accuracy.rows == std::vector<std::string>{"baseline", "x"});
  CHECK(report.accuracy.row(0)[0] == report.accuracy.row(1)[0]);
  for (double v : report.l2.values) CHECK(v == 0.0);
  for (double v : report.fid_proxy.values) CHECK(v <= 1e-9);
  CHECK(report.target_not_above_baseline == std::vector<bool>{true});
  CHECK(paired_l2(same, base, setup, classes) == report.l2);
  CHECK(accuracy_matrix(std::vector<NamedModel>{base}, clf, setup, classes).row(0)[1] ==
        report.accuracy.at(0, 1));
  CHECK_THROWS(evaluate_models(base, attacked, std::vector<int>{}, clf, setup, classes, 1e-6));
  CHECK_THROWS(accuracy_matrix(attacked, clf, setup, {"x", "y"}));
}

}  // namespace
}  // namespace crafted
