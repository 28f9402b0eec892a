// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>

#include "crafted/io/checkpoint.hpp"
#include "crafted/io/config.hpp"
#include "crafted/io/hash.hpp"
#include "crafted/io/seeds.hpp"
#include "test_support.hpp"

#ifndef CRAFTED_FIXTURE_DIR
#error "CRAFTED_FIXTURE_DIR must be defined"
#endif

namespace crafted::io {
namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

TEST_CASE("sha256 of known strings") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("derived seeds are injective over roles and indices") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t role = 0; role <= 7; ++role) {
    for (std::uint64_t i = 0; i < 10000; i += 7) {
      CHECK(seen.insert(derive_seed(3, static_cast<SeedRole>(role), i)).second);
    }
  }
  CHECK(derive_seed(2, SeedRole::kAttack, 17) == 2'050'017);
  CHECK_THROWS(derive_seed(0, SeedRole::kDataset, 10000));
  CHECK(seed_role_name(SeedRole::kProbe) == "probe");
}

TEST_CASE("checkpoint round trip is exact for float32 values") {
  const auto dir = test::scratch_dir("ckpt_roundtrip");
  Classifier clf = Classifier::initialize({1, 8, 2, 4, 3}, 9);
  for (auto& v : clf.params().flat()) v = static_cast<float>(v);
  const auto written = save_checkpoint(clf, dir / "c.ckpt", {{"note", "x"}});
  CheckpointManifest manifest;
  const Classifier back = load_classifier(dir / "c.ckpt", &manifest);
  CHECK(back.params() == clf.params());
  CHECK(back.arch() == clf.arch());
  CHECK(manifest.payload_sha256 == written.payload_sha256);
  CHECK(manifest.provenance.at("note") == "x");
  CHECK(manifest.model_kind == "classifier");
  CHECK_THROWS_AS(load_noise_predictor(dir / "c.ckpt"), CheckpointError);

  // Saving the reloaded model reproduces the file byte for byte.
  save_checkpoint(back, dir / "d.ckpt", {{"note", "x"}});
  CHECK(slurp(dir / "c.ckpt") == slurp(dir / "d.ckpt"));

  const NoisePredictor np = NoisePredictor::initialize({1, 8, 2, 4, 3}, 2);
  save_checkpoint(np, dir / "n.ckpt");
  const NoisePredictor np_back = load_noise_predictor(dir / "n.ckpt");
  for (std::size_t i = 0; i < np.params().size(); ++i) {
    CHECK(np_back.params().flat()[i] == static_cast<double>(static_cast<float>(np.params().flat()[i])));
  }
}

TEST_CASE("payload is four bytes per parameter") {
  const auto dir = test::scratch_dir("ckpt_size");
  ParameterSet params;
  params.add("w", {2, 5});
  const auto m = write_checkpoint(dir / "p.ckpt", "noise_predictor", nlohmann::json::object(),
                                  params, nlohmann::json::object());
  CHECK(m.payload_bytes() == 40);
  const auto raw = read_checkpoint(dir / "p.ckpt");
  CHECK(raw.values.size() == 10);
  const std::string bytes = slurp(dir / "p.ckpt");
  CHECK(bytes.substr(0, 8) == "CRFTCKPT");
}

TEST_CASE("checkpoint corruption is detected") {
  const auto dir = test::scratch_dir("ckpt_corrupt");
  const Classifier clf = Classifier::initialize({1, 8, 2, 4, 3}, 9);
  save_checkpoint(clf, dir / "good.ckpt");
  const std::string good = slurp(dir / "good.ckpt");

  std::string flipped = good;
  flipped[flipped.size() - 3] = static_cast<char>(flipped[flipped.size() - 3] ^ 0x5a);
  spit(dir / "flipped.ckpt", flipped);
  CHECK_THROWS_AS(read_checkpoint(dir / "flipped.ckpt"), CheckpointHashError);

  spit(dir / "short.ckpt", good.substr(0, good.size() - 4));
  CHECK_THROWS_AS(read_checkpoint(dir / "short.ckpt"), CheckpointShapeError);

  spit(dir / "magic.ckpt", "NOTACKPT" + good.substr(8));
  CHECK_THROWS_AS(read_checkpoint(dir / "magic.ckpt"), CheckpointFormatError);

  std::string versioned = good;
  const auto pos = versioned.find("\"format_version\":1");
  REQUIRE(pos != std::string::npos);
  versioned.replace(pos, 18, "\"format_version\":7");
  spit(dir / "version.ckpt", versioned);
  CHECK_THROWS_AS(read_checkpoint(dir / "version.ckpt"), CheckpointVersionError);

  CHECK_THROWS_AS(read_checkpoint(dir / "missing.ckpt"), CheckpointError);
}

TEST_CASE("committed fixture loads with its recorded hash") {
  const fs::path path = fs::path(CRAFTED_FIXTURE_DIR) / "micro_classifier.ckpt";
  const RawCheckpoint raw = read_checkpoint(path);
  CHECK(raw.manifest.payload_sha256 ==
        "c98480c8f3032aa9331a261ce3ee68b7eb639e0136324cd54d9dc1fa90dc36be");
  REQUIRE(raw.values.size() == 179);
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    CHECK(raw.values[i] == static_cast<float>(static_cast<double>((i * 37) % 101) - 50.0) / 64.0f);
  }
  const Classifier clf = load_classifier(path);
  CHECK(clf.params().flat()[3] == static_cast<float>((111 % 101 - 50) / 64.0));
  CHECK(clf.arch() == ClassifierArch{1, 8, 2, 4, 3});
}

TEST_CASE("empty config yields defaults") {
  const ExperimentConfig c = parse_config("  \n");
  CHECK(c.attack.inference_steps == 20);
  CHECK(c.attack.grad_split_k == 10);
  CHECK(c.evaluation.guidance_scale == 3.0);
  CHECK(c.schedule.num_train_steps == 1000);
  CHECK(validate_config(c).empty());
  CHECK(c.make_plan().timesteps.front() == 1000);
  CHECK(c.make_plan().timesteps.back() == 50);
}

TEST_CASE("config errors list every offending key") {
  try {
    parse_config(R"({"attack": {"bogus": 1, "eta": "big"}, "nope": 3, "seed_base": -1})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    const auto& p = e.problems();
    const auto has = [&](const std::string& needle) {
      return std::any_of(p.begin(), p.end(),
                         [&](const std::string& s) { return s.find(needle) != std::string::npos; });
    };
    CHECK(has("attack.bogus"));
    CHECK(has("attack.eta"));
    CHECK(has("nope"));
    CHECK(has("seed_base"));
  }
  CHECK_THROWS_AS(parse_config(R"({"attack": {"grad_split_k": 30}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("[1, 2]"), ConfigError);
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
}

TEST_CASE("config round trip and hash") {
  ExperimentConfig c = parse_config(R"({"seed_base": 7, "attack": {"eta": 0.3, "target_class": 2},
                                        "dataset": {"image_size": 12}})");
  CHECK(c.noise_predictor.image_size == 12);
  CHECK(c.classifier.image_size == 12);
  const ExperimentConfig back = parse_config(emit_config(c));
  CHECK(emit_config(back) == emit_config(c));
  CHECK(config_hash(back) == config_hash(c));
  CHECK(config_hash(c).size() == 12);
  ExperimentConfig other_target = c;
  other_target.attack.target_class = 0;
  CHECK(config_hash(other_target) == config_hash(c));
  other_target.attack.eta = 0.31;
  CHECK(config_hash(other_target) != config_hash(c));
}

}  // namespace
}  // namespace crafted::io
