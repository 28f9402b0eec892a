// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/io/config.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "crafted/io/hash.hpp"

namespace crafted::io {
namespace {

using nlohmann::json;

// Walks every (section, key, field) of the schema. Sections named "" are top level.
template <typename Visitor, typename Config>
void visit_fields(Config& c, Visitor& v) {
  v("", "seed_base", c.seed_base);
  v("", "output_dir", c.output_dir);

  v("schedule", "num_train_steps", c.schedule.num_train_steps);
  v("schedule", "beta_start", c.schedule.beta_start);
  v("schedule", "beta_end", c.schedule.beta_end);

  v("dataset", "num_classes", c.dataset.num_classes);
  v("dataset", "image_size", c.dataset.image_size);
  v("dataset", "train_per_class", c.dataset.train_per_class);
  v("dataset", "test_per_class", c.dataset.test_per_class);

  v("noise_predictor", "base_channels", c.noise_predictor.base_channels);
  v("noise_predictor", "embed_dim", c.noise_predictor.embed_dim);

  v("noise_training", "epochs", c.noise_training.epochs);
  v("noise_training", "batch_size", c.noise_training.batch_size);
  v("noise_training", "learning_rate", c.noise_training.learning_rate);
  v("noise_training", "cond_dropout", c.noise_training.cond_dropout);

  v("classifier", "channels", c.classifier.channels);
  v("classifier", "feature_dim", c.classifier.feature_dim);

  v("classifier_training", "epochs", c.classifier_training.epochs);
  v("classifier_training", "batch_size", c.classifier_training.batch_size);
  v("classifier_training", "learning_rate", c.classifier_training.learning_rate);

  v("attack", "inference_steps", c.attack.inference_steps);
  v("attack", "grad_split_k", c.attack.grad_split_k);
  v("attack", "learning_rate", c.attack.learning_rate);
  v("attack", "weight_decay", c.attack.weight_decay);
  v("attack", "clip_norm", c.attack.clip_norm);
  v("attack", "batch_noises", c.attack.batch_noises);
  v("attack", "eta", c.attack.eta);
  v("attack", "boundary_fraction", c.attack.boundary_fraction);
  v("attack", "max_epochs", c.attack.max_epochs);
  v("attack", "target_class", c.attack.target_class);
  v("attack", "guidance_scale", c.attack.guidance_scale);
  v("attack", "targeted_label", c.attack.targeted_label);
  v("attack", "early_stop", c.attack.early_stop);
  v("attack", "probe_samples", c.attack.probe_samples);
  v("attack", "probe_interval", c.attack.probe_interval);
  v("attack", "early_stop_accuracy", c.attack.early_stop_accuracy);
  v("attack", "early_stop_patience", c.attack.early_stop_patience);

  v("evaluation", "images_per_class", c.evaluation.images_per_class);
  v("evaluation", "guidance_scale", c.evaluation.guidance_scale);
  v("evaluation", "fid_regularization", c.evaluation.fid_regularization);
}

std::string key_path(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

class Reader {
 public:
  Reader(const json& root, std::vector<std::string>& problems)
      : root_(root), problems_(problems) {}

  template <typename T>
  void operator()(const std::string& section, const std::string& key, T& field) {
    known_[section].insert(key);
    const json* node = &root_;
    if (!section.empty()) {
      auto it = root_.find(section);
      if (it == root_.end()) return;
      if (!it->is_object()) return;  // reported by check_unknown
      node = &*it;
    }
    auto it = node->find(key);
    if (it == node->end()) return;
    read(*it, key_path(section, key), field);
  }

  void check_unknown() {
    for (auto it = root_.begin(); it != root_.end(); ++it) {
      if (known_.count(it.key())) {
        if (!it->is_object()) problems_.push_back(it.key() + ": expected an object");
        else check_section(it.key(), *it);
      } else if (!known_[""].count(it.key())) {
        problems_.push_back(it.key() + ": unknown key");
      }
    }
  }

 private:
  void check_section(const std::string& section, const json& obj) {
    for (auto it = obj.begin(); it != obj.end(); ++it) {
      if (!known_[section].count(it.key())) {
        problems_.push_back(key_path(section, it.key()) + ": unknown key");
      }
    }
  }

  void read(const json& v, const std::string& path, int& out) {
    if (!v.is_number_integer()) return fail(path, "expected an integer");
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      return fail(path, "integer out of range");
    }
    out = static_cast<int>(x);
  }
  void read(const json& v, const std::string& path, std::uint64_t& out) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned())) {
      return fail(path, "expected a nonnegative integer");
    }
    out = v.get<std::uint64_t>();
  }
  void read(const json& v, const std::string& path, double& out) {
    if (!v.is_number()) return fail(path, "expected a number");
    out = v.get<double>();
  }
  void read(const json& v, const std::string& path, bool& out) {
    if (!v.is_boolean()) return fail(path, "expected true or false");
    out = v.get<bool>();
  }
  void read(const json& v, const std::string& path, std::string& out) {
    if (!v.is_string()) return fail(path, "expected a string");
    out = v.get<std::string>();
  }
  void fail(const std::string& path, const std::string& what) {
    problems_.push_back(path + ": " + what);
  }

  const json& root_;
  std::vector<std::string>& problems_;
  std::map<std::string, std::set<std::string>> known_;
};

class Writer {
 public:
  template <typename T>
  void operator()(const std::string& section, const std::string& key, const T& field) {
    if (section.empty()) out[key] = field;
    else out[section][key] = field;
  }
  json out = json::object();
};

template <typename F>
void collect(std::vector<std::string>& problems, const std::string& where, F&& check) {
  try {
    check();
  } catch (const std::exception& e) {
    problems.push_back(where + ": " + e.what());
  }
}

std::string join(const std::vector<std::string>& items) {
  std::string s = "invalid config:";
  for (const auto& p : items) s += "\n  " + p;
  return s;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error(join(problems)), problems_(std::move(problems)) {}

NoiseSchedule ExperimentConfig::make_schedule() const {
  return NoiseSchedule::linear(schedule.num_train_steps, schedule.beta_start, schedule.beta_end);
}

InferencePlan ExperimentConfig::make_plan() const {
  return InferencePlan::evenly_spaced(make_schedule(), attack.inference_steps,
                                      attack.grad_split_k);
}

void ExperimentConfig::sync_architectures() {
  noise_predictor.num_classes = classifier.num_classes = dataset.num_classes;
  noise_predictor.image_size = classifier.image_size = dataset.image_size;
  noise_predictor.image_channels = classifier.image_channels = 1;
}

std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> problems;
  const auto& s = c.schedule;
  if (s.num_train_steps < 1) problems.push_back("schedule.num_train_steps: must be positive");
  if (!(s.beta_start > 0.0 && s.beta_end < 1.0 && s.beta_start <= s.beta_end)) {
    problems.push_back("schedule: need 0 < beta_start <= beta_end < 1");
  }
  collect(problems, "dataset", [&] { shape_class_names(c.dataset.num_classes); });
  if (c.dataset.train_per_class < 1 || c.dataset.test_per_class < 1) {
    problems.push_back("dataset: train_per_class and test_per_class must be positive");
  }
  collect(problems, "noise_predictor", [&] { c.noise_predictor.validate(); });
  collect(problems, "classifier", [&] { c.classifier.validate(); });
  const auto& nt = c.noise_training;
  if (nt.epochs < 1 || nt.batch_size < 1 || !(nt.learning_rate > 0.0) ||
      !(nt.cond_dropout >= 0.0 && nt.cond_dropout <= 1.0)) {
    problems.push_back(
        "noise_training: need epochs, batch_size, learning_rate > 0 and cond_dropout in [0, 1]");
  }
  const auto& ct = c.classifier_training;
  if (ct.epochs < 1 || ct.batch_size < 1 || !(ct.learning_rate > 0.0)) {
    problems.push_back("classifier_training: need epochs, batch_size, learning_rate > 0");
  }
  collect(problems, "attack", [&] { c.attack.validate(c.dataset.num_classes); });
  if (s.num_train_steps >= 1) {
    collect(problems, "attack", [&] {
      if (c.attack.inference_steps > s.num_train_steps) {
        throw std::invalid_argument("inference_steps exceeds schedule.num_train_steps");
      }
    });
  }
  const auto& e = c.evaluation;
  if (e.images_per_class < 2) problems.push_back("evaluation.images_per_class: must be >= 2");
  if (!(e.guidance_scale >= 0.0)) problems.push_back("evaluation.guidance_scale: must be >= 0");
  if (!(e.fid_regularization >= 0.0)) {
    problems.push_back("evaluation.fid_regularization: must be >= 0");
  }
  return problems;
}

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig config;
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    config.sync_architectures();
    return config;
  }
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError({std::string("not valid JSON: ") + e.what()});
  }
  if (!root.is_object()) throw ConfigError({"top level must be an object"});

  std::vector<std::string> problems;
  Reader reader(root, problems);
  visit_fields(config, reader);
  reader.check_unknown();
  config.sync_architectures();
  if (problems.empty()) problems = validate_config(config);
  if (!problems.empty()) throw ConfigError(std::move(problems));
  return config;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot read config file " + path.string()});
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

nlohmann::json config_to_json(const ExperimentConfig& config) {
  Writer writer;
  visit_fields(config, writer);
  return writer.out;
}

std::string emit_config(const ExperimentConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

std::string config_hash(const ExperimentConfig& config) {
  json j = config_to_json(config);
  j["attack"].erase("target_class");
  return sha256_hex(j.dump()).substr(0, 12);
}

}  // namespace crafted::io
