// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/evaluation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "crafted/io/seeds.hpp"

namespace crafted {
namespace {

constexpr std::size_t kChunk = 16;

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

Eigen::MatrixXd to_matrix(const Tensor& features) {
  if (features.rank() != 2) throw std::invalid_argument("features must be [n, dim]");
  const auto n = static_cast<Eigen::Index>(features.dim(0));
  const auto d = static_cast<Eigen::Index>(features.dim(1));
  Eigen::MatrixXd m(n, d);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) m(i, j) = features[static_cast<std::size_t>(i * d + j)];
  }
  return m;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& x, const Eigen::VectorXd& mean) {
  const Eigen::MatrixXd centered = x.rowwise() - mean.transpose();
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
  const Eigen::VectorXd roots = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return solver.eigenvectors() * roots.asDiagonal() * solver.eigenvectors().transpose();
}

void require_nondegenerate(const Eigen::MatrixXd& cov, const char* which) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  const double lo = solver.eigenvalues().minCoeff();
  const double hi = std::max(solver.eigenvalues().maxCoeff(), 1e-300);
  if (!(lo > 1e-12 * hi)) {
    throw std::domain_error(std::string("degenerate covariance for feature set ") + which +
                            "; use a positive regularization");
  }
}

void require_class_axes(const std::vector<std::string>& classes, int num_classes) {
  if (static_cast<int>(classes.size()) != num_classes) {
    throw std::invalid_argument("class name count does not match setup.num_classes");
  }
}

Tensor features_of(const Classifier& classifier, const Tensor& images) {
  return classify(classifier, images).features;
}

}  // namespace

std::uint64_t evaluation_seed(const SamplingSetup& setup, int class_index, int image_index) {
  return io::derive_seed(setup.seed_base, io::SeedRole::kEvaluation,
                         static_cast<std::uint64_t>(class_index) *
                                 static_cast<std::uint64_t>(setup.images_per_class) +
                             static_cast<std::uint64_t>(image_index));
}

std::vector<Tensor> generate_class_images(const NoiseModel& model, const SamplingSetup& setup) {
  if (setup.images_per_class < 1) throw std::invalid_argument("images_per_class must be positive");
  if (setup.num_classes < 1) throw std::invalid_argument("num_classes must be positive");
  const std::size_t n = static_cast<std::size_t>(setup.images_per_class);
  const std::size_t chunks_per_class = (n + kChunk - 1) / kChunk;
  const std::size_t tasks = chunks_per_class * static_cast<std::size_t>(setup.num_classes);

  Shape shape{n};
  const Shape latent = model.latent_shape();
  shape.insert(shape.end(), latent.begin(), latent.end());
  std::vector<Tensor> out(static_cast<std::size_t>(setup.num_classes), Tensor(shape));

  // Each task writes a disjoint slice; items are batch-independent, so the
  // output is identical for any worker count.
  auto run_task = [&](std::size_t task) {
    const int cls = static_cast<int>(task / chunks_per_class);
    const std::size_t begin = (task % chunks_per_class) * kChunk;
    const std::size_t end = std::min(n, begin + kChunk);
    std::vector<std::uint64_t> seeds;
    for (std::size_t i = begin; i < end; ++i) {
      seeds.push_back(evaluation_seed(setup, cls, static_cast<int>(i)));
    }
    const Tensor images =
        sample_batch(model, setup.schedule, setup.plan, {cls, setup.guidance_scale}, seeds);
    Tensor& dst = out[static_cast<std::size_t>(cls)];
    std::copy(images.values().begin(), images.values().end(),
              dst.values().begin() + static_cast<long>(begin * dst.item_numel()));
  };

  const std::size_t workers =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(setup.jobs, 1)), 1, tasks);
  if (workers == 1) {
    for (std::size_t t = 0; t < tasks; ++t) run_task(t);
    return out;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t t = next++; t < tasks; t = next++) run_task(t);
    });
  }
  pool.clear();
  return out;
}

void MetricMatrix::append_row(std::string name, std::span<const double> row_values) {
  if (row_values.size() != cols.size()) {
    throw std::invalid_argument("metric row '" + name + "' has " +
                                std::to_string(row_values.size()) + " values for " +
                                std::to_string(cols.size()) + " columns");
  }
  rows.push_back(std::move(name));
  values.insert(values.end(), row_values.begin(), row_values.end());
}

std::string MetricMatrix::to_csv() const {
  std::ostringstream out;
  out << corner;
  for (const auto& c : cols) out << ',' << c;
  out << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    out << rows[r];
    for (std::size_t c = 0; c < cols.size(); ++c) out << ',' << format_double(at(r, c));
    out << '\n';
  }
  return out.str();
}

MetricMatrix MetricMatrix::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("metric CSV is empty");
  auto header = split_csv_line(line);
  if (header.empty()) throw std::runtime_error("metric CSV has an empty header");
  MetricMatrix m;
  m.corner = header[0];
  m.cols.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw std::runtime_error("metric CSV row has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(header.size()));
    }
    std::vector<double> vals;
    for (std::size_t i = 1; i < cells.size(); ++i) {
      std::size_t used = 0;
      vals.push_back(std::stod(cells[i], &used));
      if (used != cells[i].size()) throw std::runtime_error("bad number in metric CSV: " + cells[i]);
    }
    m.append_row(cells[0], vals);
  }
  return m;
}

std::vector<double> accuracy_row(const Classifier& classifier, std::span<const Tensor> images) {
  std::vector<double> row;
  for (std::size_t c = 0; c < images.size(); ++c) {
    const auto pred = predicted_labels(classify(classifier, images[c]).logits);
    const auto hits = std::count(pred.begin(), pred.end(), static_cast<int>(c));
    row.push_back(static_cast<double>(hits) / static_cast<double>(pred.size()));
  }
  return row;
}

double rms_distance(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "rms_distance");
  if (a.rank() < 2 || a.dim(0) == 0) throw std::invalid_argument("rms_distance: empty batch");
  const std::size_t n = a.dim(0), m = a.item_numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const double diff = a[i * m + j] - b[i * m + j];
      sq += diff * diff;
    }
    total += std::sqrt(sq / static_cast<double>(m));
  }
  return total / static_cast<double>(n);
}

std::vector<double> paired_l2_row(std::span<const Tensor> a, std::span<const Tensor> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_l2: class count mismatch");
  std::vector<double> row;
  for (std::size_t c = 0; c < a.size(); ++c) row.push_back(rms_distance(a[c], b[c]));
  return row;
}

double frechet_distance(const Tensor& features_a, const Tensor& features_b,
                        double regularization) {
  if (regularization < 0.0) throw std::invalid_argument("regularization must be nonnegative");
  const Eigen::MatrixXd a = to_matrix(features_a), b = to_matrix(features_b);
  if (a.rows() < 2 || b.rows() < 2) throw std::invalid_argument("frechet_distance needs n, m >= 2");
  if (a.cols() != b.cols()) throw std::invalid_argument("frechet_distance: feature dims differ");
  const Eigen::VectorXd mu_a = a.colwise().mean(), mu_b = b.colwise().mean();
  const auto ident = Eigen::MatrixXd::Identity(a.cols(), a.cols());
  const Eigen::MatrixXd cov_a = covariance(a, mu_a) + regularization * ident;
  const Eigen::MatrixXd cov_b = covariance(b, mu_b) + regularization * ident;
  if (regularization == 0.0) {
    require_nondegenerate(cov_a, "A");
    require_nondegenerate(cov_b, "B");
  }
  // Tr((A B)^{1/2}) = Tr((A^{1/2} B A^{1/2})^{1/2}), the latter symmetric PSD.
  const Eigen::MatrixXd root_a = symmetric_sqrt(cov_a);
  Eigen::MatrixXd inner = root_a * cov_b * root_a;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(inner, Eigen::EigenvaluesOnly);
  const double trace_root = solver.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double value =
      (mu_a - mu_b).squaredNorm() + cov_a.trace() + cov_b.trace() - 2.0 * trace_root;
  if (!std::isfinite(value)) throw std::domain_error("frechet_distance is not finite");
  return std::max(value, 0.0);
}

std::vector<double> fid_proxy_row(const Classifier& classifier, std::span<const Tensor> attacked,
                                  std::span<const Tensor> baseline, double regularization) {
  if (attacked.size() != baseline.size()) {
    throw std::invalid_argument("fid_proxy: class count mismatch");
  }
  std::vector<double> row;
  for (std::size_t c = 0; c < attacked.size(); ++c) {
    row.push_back(frechet_distance(features_of(classifier, attacked[c]),
                                   features_of(classifier, baseline[c]), regularization));
  }
  return row;
}

MetricMatrix accuracy_matrix(std::span<const NamedModel> models, const Classifier& classifier,
                             const SamplingSetup& setup, const std::vector<std::string>& classes) {
  require_class_axes(classes, setup.num_classes);
  MetricMatrix m;
  m.cols = classes;
  for (const auto& entry : models) {
    const auto images = generate_class_images(*entry.model, setup);
    m.append_row(entry.name, accuracy_row(classifier, images));
  }
  return m;
}

MetricMatrix paired_l2(const NamedModel& a, const NamedModel& b, const SamplingSetup& setup,
                       const std::vector<std::string>& classes) {
  require_class_axes(classes, setup.num_classes);
  if (a.model->latent_shape() != b.model->latent_shape()) {
    throw std::invalid_argument("paired_l2: models produce differently shaped images");
  }
  MetricMatrix m;
  m.cols = classes;
  m.append_row(a.name, paired_l2_row(generate_class_images(*a.model, setup),
                                     generate_class_images(*b.model, setup)));
  return m;
}

MetricMatrix fid_proxy_matrix(const NamedModel& baseline, std::span<const NamedModel> attacked,
                              const Classifier& classifier, const SamplingSetup& setup,
                              const std::vector<std::string>& classes, double regularization) {
  require_class_axes(classes, setup.num_classes);
  const auto base_images = generate_class_images(*baseline.model, setup);
  MetricMatrix m;
  m.cols = classes;
  for (const auto& entry : attacked) {
    m.append_row(entry.name, fid_proxy_row(classifier, generate_class_images(*entry.model, setup),
                                           base_images, regularization));
  }
  return m;
}

EvaluationReport build_report(std::vector<std::string> class_names, std::vector<int> attack_targets,
                              MetricMatrix accuracy, MetricMatrix l2, MetricMatrix fid_proxy,
                              int images_per_cell, std::uint64_t seed_base) {
  for (const auto* m : {&accuracy, &l2, &fid_proxy}) {
    if (m->cols != class_names) throw std::invalid_argument("metric matrix class axis mismatch");
    if (m->values.size() != m->rows.size() * m->cols.size()) {
      throw std::invalid_argument("metric matrix has inconsistent size");
    }
  }
  if (accuracy.rows.size() != attack_targets.size() + 1 ||
      l2.rows.size() != attack_targets.size() || fid_proxy.rows.size() != attack_targets.size()) {
    throw std::invalid_argument("metric matrices disagree on the attacked-model rows");
  }
  for (double v : accuracy.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("accuracy outside [0, 1]");
  }
  for (const auto* m : {&l2, &fid_proxy}) {
    for (double v : m->values) {
      if (!(v >= 0.0)) throw std::invalid_argument("distance metric must be nonnegative");
    }
  }
  EvaluationReport report;
  for (int t : attack_targets) {
    if (t < 0 || t >= static_cast<int>(class_names.size())) {
      throw std::invalid_argument("attack target outside the class axis");
    }
  }
  for (std::size_t r = 0; r < attack_targets.size(); ++r) {
    const auto t = static_cast<std::size_t>(attack_targets[r]);
    report.target_not_above_baseline.push_back(accuracy.at(r + 1, t) <= accuracy.at(0, t));
  }
  report.class_names = std::move(class_names);
  report.attack_targets = std::move(attack_targets);
  report.accuracy = std::move(accuracy);
  report.l2 = std::move(l2);
  report.fid_proxy = std::move(fid_proxy);
  report.images_per_cell = images_per_cell;
  report.seed_base = seed_base;
  return report;
}

EvaluationReport evaluate_models(const NamedModel& baseline, std::span<const NamedModel> attacked,
                                 std::span<const int> attack_targets, const Classifier& classifier,
                                 const SamplingSetup& setup,
                                 const std::vector<std::string>& classes, double regularization) {
  require_class_axes(classes, setup.num_classes);
  if (attack_targets.size() != attacked.size()) {
    throw std::invalid_argument("one attack target per attacked model required");
  }
  MetricMatrix accuracy, l2, fid;
  accuracy.cols = l2.cols = fid.cols = classes;
  const auto base_images = generate_class_images(*baseline.model, setup);
  accuracy.append_row(baseline.name, accuracy_row(classifier, base_images));
  for (const auto& entry : attacked) {
    const auto images = generate_class_images(*entry.model, setup);
    accuracy.append_row(entry.name, accuracy_row(classifier, images));
    l2.append_row(entry.name, paired_l2_row(images, base_images));
    fid.append_row(entry.name, fid_proxy_row(classifier, images, base_images, regularization));
  }
  return build_report(classes, std::vector<int>(attack_targets.begin(), attack_targets.end()),
                      std::move(accuracy), std::move(l2), std::move(fid), setup.images_per_class,
                      setup.seed_base);
}

}  // namespace crafted
