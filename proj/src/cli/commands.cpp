// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "crafted/attack.hpp"
#include "crafted/checks.hpp"
#include "crafted/dataset.hpp"
#include "crafted/evaluation.hpp"
#include "crafted/io/checkpoint.hpp"
#include "crafted/io/heatmap.hpp"
#include "crafted/io/seeds.hpp"
#include "crafted/training.hpp"

namespace crafted::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::ostream& out_of(const GlobalOptions& o) { return o.out ? *o.out : std::cout; }
std::ostream& err_of(const GlobalOptions& o) { return o.err ? *o.err : std::cerr; }

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string short_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

void write_text(const fs::path& path, const std::string& text, CommandOutcome& outcome) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f << text;
  f.close();
  if (!f) throw std::runtime_error("failed to write " + path.string());
  outcome.artifacts.push_back(path);
}

std::string read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

template <typename F>
CommandOutcome run(const char* name, const GlobalOptions& options, F&& body) {
  const auto start = std::chrono::steady_clock::now();
  CommandOutcome outcome;
  try {
    body(outcome);
  } catch (const io::ConfigError& e) {
    outcome.exit_code = kExitValidation;
    outcome.diagnostic = e.what();
  } catch (const ValidationError& e) {
    outcome.exit_code = kExitValidation;
    outcome.diagnostic = e.what();
  } catch (const std::exception& e) {
    outcome.exit_code = kExitRuntime;
    outcome.diagnostic = e.what();
  }
  outcome.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (outcome.exit_code != kExitOk) {
    if (outcome.diagnostic.empty()) outcome.diagnostic = "failed";
    err_of(options) << name << ": " << outcome.diagnostic << "\n";
  }
  return outcome;
}

json baseline_provenance(const Experiment& exp, const char* role) {
  return {{"command", "train-base"},
          {"role", role},
          {"config_hash", exp.hash},
          {"seed_base", exp.config.seed_base}};
}

void require_file(const fs::path& path, const char* hint) {
  if (!fs::is_regular_file(path)) {
    throw ValidationError("missing " + path.string() + " (" + hint + ")");
  }
}

struct AttackedModel {
  std::string dir_name;
  int target = 0;
  double eta = 0.0;
  NoisePredictor model;
};

std::vector<AttackedModel> load_attacked_models(const fs::path& dir, int num_classes) {
  std::vector<AttackedModel> models;
  if (!fs::exists(dir)) return models;
  if (!fs::is_directory(dir)) throw ValidationError(dir.string() + " is not a directory");
  std::vector<fs::path> candidates;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory() && fs::is_regular_file(entry.path() / "noise_predictor.ckpt")) {
      candidates.push_back(entry.path());
    }
  }
  std::sort(candidates.begin(), candidates.end());
  for (const auto& path : candidates) {
    io::CheckpointManifest manifest;
    NoisePredictor model = io::load_noise_predictor(path / "noise_predictor.ckpt", &manifest);
    const auto& prov = manifest.provenance;
    if (!prov.contains("target_class") || !prov["target_class"].is_number_integer()) {
      throw ValidationError(path.string() + ": checkpoint provenance lacks target_class");
    }
    const int target = prov["target_class"].get<int>();
    if (target < 0 || target >= num_classes) {
      throw ValidationError(path.string() + ": target_class outside the class set");
    }
    models.push_back({path.filename().string(), target, prov.value("eta", 0.0), std::move(model)});
  }
  std::stable_sort(models.begin(), models.end(),
                   [](const AttackedModel& a, const AttackedModel& b) { return a.target < b.target; });
  return models;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace

fs::path Experiment::attack_dir(int target) const {
  return attacks_dir() / ("target_" + std::to_string(target));
}

Experiment resolve_experiment(const GlobalOptions& options) {
  Experiment exp;
  if (options.config_path) {
    if (!fs::is_regular_file(*options.config_path)) {
      throw ValidationError("config file not found: " + options.config_path->string());
    }
    exp.config = io::load_config(*options.config_path);
  } else {
    exp.config = io::parse_config("");
  }
  if (options.seed) exp.config.seed_base = *options.seed;
  if (options.jobs < 1) throw ValidationError("--jobs must be at least 1");
  exp.hash = io::config_hash(exp.config);
  const char* root = std::getenv("CRAFTED_OUT");
  exp.dir = fs::path(root && *root ? root : exp.config.output_dir) / exp.hash;
  return exp;
}

CommandOutcome cmd_train_base(const GlobalOptions& options) {
  return run("train-base", options, [&](CommandOutcome& outcome) {
    const Experiment exp = resolve_experiment(options);
    const auto& cfg = exp.config;
    auto& log = out_of(options);
    using io::SeedRole;
    const auto seed = [&](SeedRole role) { return io::derive_seed(cfg.seed_base, role, 0); };

    write_text(exp.dir / "config.json", io::emit_config(cfg), outcome);
    const Dataset data = make_shapes_dataset(cfg.dataset, seed(SeedRole::kDataset));
    log << "dataset: " << data.train.size() << " train / " << data.test.size() << " test images\n";

    const TrainedClassifier cls =
        train_classifier(Classifier::initialize(cfg.classifier, seed(SeedRole::kClassifierInit)),
                         data, cfg.classifier_training, seed(SeedRole::kClassifierTraining));
    log << "classifier: test accuracy " << short_double(cls.test_accuracy) << "\n";

    const NoiseSchedule schedule = cfg.make_schedule();
    const TrainedNoisePredictor np = train_noise_predictor(
        NoisePredictor::initialize(cfg.noise_predictor, seed(SeedRole::kNoiseInit)), data.train,
        schedule, cfg.noise_training, seed(SeedRole::kNoiseTraining));
    log << "noise predictor: final epoch MSE " << short_double(np.loss_curve.back()) << "\n";

    const fs::path base = exp.baseline_dir();
    json cls_prov = baseline_provenance(exp, "classifier");
    cls_prov["train_accuracy"] = cls.train_accuracy;
    cls_prov["test_accuracy"] = cls.test_accuracy;
    io::save_checkpoint(np.model, base / "noise_predictor.ckpt",
                        baseline_provenance(exp, "noise_predictor"));
    outcome.artifacts.push_back(base / "noise_predictor.ckpt");
    io::save_checkpoint(cls.classifier, base / "classifier.ckpt", cls_prov);
    outcome.artifacts.push_back(base / "classifier.ckpt");

    std::string curve = "epoch,noise_mse\n";
    for (std::size_t e = 0; e < np.loss_curve.size(); ++e) {
      curve += std::to_string(e) + "," + format_double(np.loss_curve[e]) + "\n";
    }
    write_text(base / "loss_curve.csv", curve, outcome);
    std::string cls_curve = "epoch,cross_entropy\n";
    for (std::size_t e = 0; e < cls.loss_curve.size(); ++e) {
      cls_curve += std::to_string(e) + "," + format_double(cls.loss_curve[e]) + "\n";
    }
    write_text(base / "classifier_loss_curve.csv", cls_curve, outcome);
    log << "baseline written to " << base.string() << "\n";
  });
}

CommandOutcome cmd_attack(const GlobalOptions& options, int target_class) {
  return run("attack", options, [&](CommandOutcome& outcome) {
    Experiment exp = resolve_experiment(options);
    auto& cfg = exp.config;
    if (target_class < 0 || target_class >= cfg.dataset.num_classes) {
      throw ValidationError("--target-class " + std::to_string(target_class) + " outside [0, " +
                            std::to_string(cfg.dataset.num_classes) + ")");
    }
    cfg.attack.target_class = target_class;
    if (cfg.attack.targeted_label == target_class) {
      throw ValidationError("attack.targeted_label must differ from --target-class");
    }
    const fs::path base = exp.baseline_dir();
    require_file(base / "noise_predictor.ckpt", "run train-base first");
    require_file(base / "classifier.ckpt", "run train-base first");
    const NoisePredictor model0 = io::load_noise_predictor(base / "noise_predictor.ckpt");
    const Classifier classifier = io::load_classifier(base / "classifier.ckpt");

    auto& log = out_of(options);
    log << "attack: target class " << target_class << ", eta " << cfg.attack.eta << ", up to "
        << cfg.attack.max_epochs << " epochs\n";
    const AttackResult result = crafted_finetune(model0, classifier, cfg.make_schedule(),
                                                 cfg.make_plan(), cfg.attack, cfg.seed_base);

    const fs::path dir = exp.attack_dir(target_class);
    write_text(dir / "attack_log.csv", result.log.to_csv(), outcome);
    const double delta = l2_norm(DeltaTracker(model0.params().flat()).delta(result.model.params().flat()));
    const json prov = {{"command", "attack"},
                       {"target_class", target_class},
                       {"targeted_label", cfg.attack.targeted_label},
                       {"eta", cfg.attack.eta},
                       {"status", std::string(attack_status_name(result.status))},
                       {"epochs_run", result.log.records.size()},
                       {"delta_norm", delta},
                       {"config_hash", exp.hash},
                       {"seed_base", cfg.seed_base}};
    io::save_checkpoint(result.model, dir / "noise_predictor.ckpt", prov);
    outcome.artifacts.push_back(dir / "noise_predictor.ckpt");
    log << "attack: " << attack_status_name(result.status) << " after "
        << result.log.records.size() << " epochs, ||theta - theta0|| = " << short_double(delta)
        << "\n";
    if (result.status == AttackStatus::kDiverged) throw std::runtime_error(result.diagnostic);
  });
}

CommandOutcome cmd_evaluate(const GlobalOptions& options,
                            const std::optional<fs::path>& models_dir) {
  return run("evaluate", options, [&](CommandOutcome& outcome) {
    const Experiment exp = resolve_experiment(options);
    const auto& cfg = exp.config;
    const fs::path base = exp.baseline_dir();
    require_file(base / "noise_predictor.ckpt", "run train-base first");
    require_file(base / "classifier.ckpt", "run train-base first");
    const NoisePredictor baseline = io::load_noise_predictor(base / "noise_predictor.ckpt");
    const Classifier classifier = io::load_classifier(base / "classifier.ckpt");
    if (models_dir && !fs::is_directory(*models_dir)) {
      throw ValidationError("--models directory not found: " + models_dir->string());
    }
    const auto attacked =
        load_attacked_models(models_dir.value_or(exp.attacks_dir()), cfg.dataset.num_classes);
    for (const auto& m : attacked) {
      if (!(m.model.arch() == baseline.arch())) {
        throw ValidationError(m.dir_name + ": architecture differs from the baseline");
      }
    }

    SamplingSetup setup;
    setup.schedule = cfg.make_schedule();
    setup.plan = cfg.make_plan();
    setup.guidance_scale = cfg.evaluation.guidance_scale;
    setup.num_classes = cfg.dataset.num_classes;
    setup.images_per_class = cfg.evaluation.images_per_class;
    setup.seed_base = cfg.seed_base;
    setup.jobs = options.jobs;
    const auto classes = shape_class_names(cfg.dataset.num_classes);

    std::vector<NamedModel> named;
    std::vector<int> targets;
    for (const auto& m : attacked) {
      named.push_back({classes[static_cast<std::size_t>(m.target)], &m.model});
      targets.push_back(m.target);
    }
    out_of(options) << "evaluate: baseline + " << attacked.size() << " attacked model(s), "
                    << setup.images_per_class << " images per cell\n";
    const EvaluationReport report = evaluate_models({"baseline", &baseline}, named, targets,
                                                    classifier, setup, classes,
                                                    cfg.evaluation.fid_regularization);

    const fs::path results = exp.results_dir();
    fs::create_directories(results);
    const std::pair<const char*, const MetricMatrix*> metrics[] = {
        {"accuracy", &report.accuracy}, {"l2", &report.l2}, {"fid_proxy", &report.fid_proxy}};
    for (const auto& [name, matrix] : metrics) {
      write_text(results / (std::string(name) + ".csv"), matrix->to_csv(), outcome);
      std::string why;
      const fs::path png = results / (std::string(name) + ".png");
      if (io::write_heatmap_png(png, *matrix, &why)) {
        outcome.artifacts.push_back(png);
      } else {
        err_of(options) << "evaluate: no heatmap for " << name << ": " << why << "\n";
      }
    }

    std::string deltas = "attack_target,model,delta_norm,eta\n";
    const auto ref = baseline.params().flat();
    for (const auto& m : attacked) {
      deltas += classes[static_cast<std::size_t>(m.target)] + "," + m.dir_name + "," +
                format_double(l2_norm(DeltaTracker(ref).delta(m.model.params().flat()))) + "," +
                format_double(m.eta) + "\n";
    }
    write_text(results / "delta_norms.csv", deltas, outcome);

    json meta = {{"class_names", report.class_names},
                 {"attack_targets", report.attack_targets},
                 {"images_per_cell", report.images_per_cell},
                 {"seed_base", report.seed_base},
                 {"guidance_scale", setup.guidance_scale},
                 {"fid_regularization", cfg.evaluation.fid_regularization},
                 {"config_hash", exp.hash},
                 {"target_not_above_baseline", report.target_not_above_baseline}};
    write_text(results / "metadata.json", meta.dump(2) + "\n", outcome);
    out_of(options) << "results written to " << results.string() << "\n";
  });
}

CommandOutcome cmd_report(const fs::path& results_dir, const GlobalOptions& options) {
  return run("report", options, [&](CommandOutcome& outcome) {
    const char* required[] = {"accuracy.csv", "l2.csv", "fid_proxy.csv", "delta_norms.csv"};
    std::vector<std::string> missing;
    for (const char* name : required) {
      if (!fs::is_regular_file(results_dir / name)) missing.push_back((results_dir / name).string());
    }
    if (!missing.empty()) {
      std::string msg = "missing metric file(s):";
      for (const auto& m : missing) msg += " " + m;
      throw ValidationError(msg);
    }
    const MetricMatrix acc = MetricMatrix::from_csv(read_text(results_dir / "accuracy.csv"));
    const MetricMatrix l2 = MetricMatrix::from_csv(read_text(results_dir / "l2.csv"));
    const MetricMatrix fid = MetricMatrix::from_csv(read_text(results_dir / "fid_proxy.csv"));
    if (acc.rows.empty() || acc.rows[0] != "baseline") {
      throw ValidationError("accuracy.csv must start with the baseline row");
    }
    if (l2.cols != acc.cols || fid.cols != acc.cols || l2.rows.size() + 1 != acc.rows.size() ||
        fid.rows.size() + 1 != acc.rows.size()) {
      throw ValidationError("metric files disagree on classes or attacked models");
    }

    std::vector<std::vector<std::string>> delta_rows;
    {
      std::stringstream in(read_text(results_dir / "delta_norms.csv"));
      std::string line;
      std::getline(in, line);
      while (std::getline(in, line)) {
        if (!line.empty()) delta_rows.push_back(split(line));
      }
    }
    if (delta_rows.size() != l2.rows.size()) {
      throw ValidationError("delta_norms.csv row count disagrees with the metric files");
    }

    // Columns copy CSV text verbatim so the summary never recomputes inputs,
    // apart from the success difference and the off-target medians.
    std::string csv =
        "attack_target,baseline_accuracy,attacked_accuracy,success,max_offtarget_drift,"
        "delta_norm,eta,l2_on_target,fid_on_target,fid_offtarget_median\n";
    std::ostringstream table;
    table << "target     base_acc  att_acc  success  max_drift  delta     eta       fid_diag  "
             "fid_off_median\n";
    for (std::size_t r = 0; r < l2.rows.size(); ++r) {
      const std::string& name = l2.rows[r];
      const auto it = std::find(acc.cols.begin(), acc.cols.end(), name);
      if (it == acc.cols.end() || acc.rows[r + 1] != name || fid.rows[r] != name ||
          delta_rows[r].size() != 4 || delta_rows[r][0] != name) {
        throw ValidationError("row " + std::to_string(r) + " ('" + name +
                              "') is not aligned across metric files");
      }
      const auto t = static_cast<std::size_t>(it - acc.cols.begin());
      const double base_acc = acc.at(0, t), att_acc = acc.at(r + 1, t);
      double drift = 0.0;
      std::vector<double> fid_off;
      for (std::size_t c = 0; c < acc.cols.size(); ++c) {
        if (c == t) continue;
        drift = std::max(drift, std::abs(acc.at(r + 1, c) - acc.at(0, c)));
        fid_off.push_back(fid.at(r, c));
      }
      const double fid_median = median(fid_off);
      csv += name + "," + format_double(base_acc) + "," + format_double(att_acc) + "," +
             format_double(base_acc - att_acc) + "," + format_double(drift) + "," +
             delta_rows[r][2] + "," + delta_rows[r][3] + "," + format_double(l2.at(r, t)) + "," +
             format_double(fid.at(r, t)) + "," + format_double(fid_median) + "\n";
      char line[256];
      std::snprintf(line, sizeof(line), "%-10s %-9.3f %-8.3f %-8.3f %-10.3f %-9.5s %-9.5s %-9.4f %.4f\n",
                    name.c_str(), base_acc, att_acc, base_acc - att_acc, drift,
                    delta_rows[r][2].c_str(), delta_rows[r][3].c_str(), fid.at(r, t), fid_median);
      table << line;
    }
    write_text(results_dir / "summary.csv", csv, outcome);
    out_of(options) << "baseline accuracy:";
    for (std::size_t c = 0; c < acc.cols.size(); ++c) {
      out_of(options) << " " << acc.cols[c] << "=" << short_double(acc.at(0, c));
    }
    out_of(options) << "\n" << table.str();
  });
}

CommandOutcome cmd_selfcheck(const GlobalOptions& options) {
  return run("selfcheck", options, [&](CommandOutcome& outcome) {
    bool all_passed = true;
    for (const auto& r : checks::run_all(20260101)) {
      char line[64];
      std::snprintf(line, sizeof(line), "(%.2fs)", r.seconds);
      out_of(options) << (r.passed ? "PASS " : "FAIL ") << r.name << " " << line << ": "
                      << r.detail << "\n";
      all_passed &= r.passed;
      if (!r.passed) outcome.diagnostic += (outcome.diagnostic.empty() ? "" : "; ") + r.name;
    }
    if (!all_passed) throw std::runtime_error("oracle check(s) failed: " + outcome.diagnostic);
  });
}

}  // namespace crafted::cli
