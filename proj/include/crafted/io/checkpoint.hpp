// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "crafted/classifier.hpp"
#include "crafted/noise_predictor.hpp"
#include "crafted/params.hpp"

// Checkpoint file layout:
//
//   bytes 0..7   magic "CRFTCKPT"
//   bytes 8..11  manifest length L, uint32 little-endian
//   next L bytes manifest, UTF-8 JSON
//   remainder    payload: float32 little-endian values, entries in manifest order
//
// The manifest records the format version, model kind, architecture,
// per-entry name/shape/dtype, free-form provenance and the payload SHA-256.
namespace crafted::io {

inline constexpr int kCheckpointFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
/// Unreadable file, bad magic or malformed manifest.
class CheckpointFormatError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
/// Payload size disagrees with the manifest, or the manifest with the model.
class CheckpointShapeError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class CheckpointHashError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::string dtype = "float32";

  std::size_t numel() const;
};

struct CheckpointManifest {
  int format_version = kCheckpointFormatVersion;
  std::string model_kind;  // "noise_predictor" or "classifier"
  nlohmann::json arch;
  std::vector<ManifestEntry> params;
  nlohmann::json provenance = nlohmann::json::object();
  std::string payload_sha256;

  std::size_t payload_bytes() const;
  nlohmann::json to_json() const;
  static CheckpointManifest from_json(const nlohmann::json& j);
};

struct RawCheckpoint {
  CheckpointManifest manifest;
  std::vector<float> values;
};

/// Writes a parameter set; values are rounded to float32. Returns the manifest.
CheckpointManifest write_checkpoint(const std::filesystem::path& path, const std::string& kind,
                                    const nlohmann::json& arch, const ParameterSet& params,
                                    const nlohmann::json& provenance);
/// Reads and verifies version, payload size and hash.
RawCheckpoint read_checkpoint(const std::filesystem::path& path);

nlohmann::json arch_to_json(const NoisePredictorArch& arch);
nlohmann::json arch_to_json(const ClassifierArch& arch);

CheckpointManifest save_checkpoint(const NoisePredictor& model, const std::filesystem::path& path,
                                   const nlohmann::json& provenance = nlohmann::json::object());
CheckpointManifest save_checkpoint(const Classifier& model, const std::filesystem::path& path,
                                   const nlohmann::json& provenance = nlohmann::json::object());

NoisePredictor load_noise_predictor(const std::filesystem::path& path,
                                    CheckpointManifest* manifest = nullptr);
Classifier load_classifier(const std::filesystem::path& path,
                           CheckpointManifest* manifest = nullptr);

}  // namespace crafted::io
