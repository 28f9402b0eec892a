// Copyright 2026 The crafted Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

#include "crafted/io/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "crafted/io/hash.hpp"

namespace crafted::io {
namespace {

constexpr std::array<char, 8> kMagic = {'C', 'R', 'F', 'T', 'C', 'K', 'P', 'T'};
constexpr std::size_t kHeaderBytes = kMagic.size() + 4;

static_assert(std::numeric_limits<float>::is_iec559, "float must be IEEE-754 binary32");

void put_u32_le(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::string encode_payload(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 4);
  for (double v : values) put_u32_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointFormatError("cannot open checkpoint " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

template <typename Arch>
Arch require_kind(const RawCheckpoint& raw, const std::string& kind,
                  const std::filesystem::path& path);

template <>
NoisePredictorArch require_kind(const RawCheckpoint& raw, const std::string& kind,
                                const std::filesystem::path& path) {
  if (raw.manifest.model_kind != kind) {
    throw CheckpointFormatError(path.string() + ": expected a " + kind + " checkpoint, found '" +
                                raw.manifest.model_kind + "'");
  }
  const auto& a = raw.manifest.arch;
  try {
    return NoisePredictorArch{a.at("image_channels").get<int>(), a.at("image_size").get<int>(),
                              a.at("base_channels").get<int>(), a.at("embed_dim").get<int>(),
                              a.at("num_classes").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(path.string() + ": bad architecture block: " + e.what());
  }
}

template <>
ClassifierArch require_kind(const RawCheckpoint& raw, const std::string& kind,
                            const std::filesystem::path& path) {
  if (raw.manifest.model_kind != kind) {
    throw CheckpointFormatError(path.string() + ": expected a " + kind + " checkpoint, found '" +
                                raw.manifest.model_kind + "'");
  }
  const auto& a = raw.manifest.arch;
  try {
    return ClassifierArch{a.at("image_channels").get<int>(), a.at("image_size").get<int>(),
                          a.at("channels").get<int>(), a.at("feature_dim").get<int>(),
                          a.at("num_classes").get<int>()};
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(path.string() + ": bad architecture block: " + e.what());
  }
}

void fill_params(ParameterSet& params, const RawCheckpoint& raw,
                 const std::filesystem::path& path) {
  const auto& entries = params.entries();
  if (entries.size() != raw.manifest.params.size()) {
    throw CheckpointShapeError(path.string() + ": manifest lists " +
                               std::to_string(raw.manifest.params.size()) +
                               " tensors, architecture expects " + std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& m = raw.manifest.params[i];
    if (m.name != entries[i].name || m.shape != entries[i].shape) {
      throw CheckpointShapeError(path.string() + ": tensor " + std::to_string(i) + " is " +
                                 m.name + shape_to_string(m.shape) + ", architecture expects " +
                                 entries[i].name + shape_to_string(entries[i].shape));
    }
  }
  auto flat = params.flat();
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = raw.values[i];
}

}  // namespace

std::size_t ManifestEntry::numel() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::size_t CheckpointManifest::payload_bytes() const {
  std::size_t n = 0;
  for (const auto& e : params) n += 4 * e.numel();
  return n;
}

nlohmann::json CheckpointManifest::to_json() const {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : params) {
    entries.push_back({{"name", e.name}, {"shape", e.shape}, {"dtype", e.dtype}});
  }
  return {{"format_version", format_version}, {"model_kind", model_kind}, {"arch", arch},
          {"params", entries},                {"provenance", provenance},
          {"payload_sha256", payload_sha256}};
}

CheckpointManifest CheckpointManifest::from_json(const nlohmann::json& j) {
  CheckpointManifest m;
  try {
    m.format_version = j.at("format_version").get<int>();
    if (m.format_version != kCheckpointFormatVersion) {
      throw CheckpointVersionError("checkpoint format version " +
                                   std::to_string(m.format_version) + " is not supported (expected " +
                                   std::to_string(kCheckpointFormatVersion) + ")");
    }
    m.model_kind = j.at("model_kind").get<std::string>();
    m.arch = j.at("arch");
    for (const auto& e : j.at("params")) {
      ManifestEntry entry{e.at("name").get<std::string>(), e.at("shape").get<Shape>(),
                          e.at("dtype").get<std::string>()};
      if (entry.dtype != "float32") {
        throw CheckpointFormatError("unsupported dtype '" + entry.dtype + "' for " + entry.name);
      }
      m.params.push_back(std::move(entry));
    }
    m.provenance = j.value("provenance", nlohmann::json::object());
    m.payload_sha256 = j.at("payload_sha256").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(std::string("malformed checkpoint manifest: ") + e.what());
  }
  return m;
}

CheckpointManifest write_checkpoint(const std::filesystem::path& path, const std::string& kind,
                                    const nlohmann::json& arch, const ParameterSet& params,
                                    const nlohmann::json& provenance) {
  CheckpointManifest manifest;
  manifest.model_kind = kind;
  manifest.arch = arch;
  manifest.provenance = provenance;
  for (const auto& e : params.entries()) manifest.params.push_back({e.name, e.shape, "float32"});
  const std::string payload = encode_payload(params.flat());
  manifest.payload_sha256 = sha256_hex(payload);
  const std::string text = manifest.to_json().dump();

  std::string bytes(kMagic.begin(), kMagic.end());
  put_u32_le(bytes, static_cast<std::uint32_t>(text.size()));
  bytes += text;
  bytes += payload;

  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw std::runtime_error("cannot create " + path.parent_path().string() + ": " +
                                     ec.message());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  if (!out) throw std::runtime_error("failed to write checkpoint " + path.string());
  return manifest;
}

RawCheckpoint read_checkpoint(const std::filesystem::path& path) {
  const std::string bytes = read_file(path);
  const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < kHeaderBytes || std::memcmp(bytes.data(), kMagic.data(), kMagic.size())) {
    throw CheckpointFormatError(path.string() + " is not a checkpoint (bad magic)");
  }
  const std::size_t manifest_len = get_u32_le(data + kMagic.size());
  if (bytes.size() < kHeaderBytes + manifest_len) {
    throw CheckpointFormatError(path.string() + ": truncated manifest");
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(bytes.substr(kHeaderBytes, manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointFormatError(path.string() + ": manifest is not JSON: " + e.what());
  }
  RawCheckpoint raw;
  try {
    raw.manifest = CheckpointManifest::from_json(j);
  } catch (const CheckpointVersionError& e) {
    throw CheckpointVersionError(path.string() + ": " + e.what());
  } catch (const CheckpointFormatError& e) {
    throw CheckpointFormatError(path.string() + ": " + e.what());
  }

  const std::size_t payload_offset = kHeaderBytes + manifest_len;
  const std::size_t payload_len = bytes.size() - payload_offset;
  if (payload_len != raw.manifest.payload_bytes()) {
    throw CheckpointShapeError(path.string() + ": payload has " + std::to_string(payload_len) +
                               " bytes, manifest shapes require " +
                               std::to_string(raw.manifest.payload_bytes()));
  }
  const auto payload = std::span<const unsigned char>(data + payload_offset, payload_len);
  if (sha256_hex(payload) != raw.manifest.payload_sha256) {
    throw CheckpointHashError(path.string() + ": payload SHA-256 does not match the manifest");
  }
  raw.values.resize(payload_len / 4);
  for (std::size_t i = 0; i < raw.values.size(); ++i) {
    raw.values[i] = std::bit_cast<float>(get_u32_le(payload.data() + 4 * i));
  }
  return raw;
}

nlohmann::json arch_to_json(const NoisePredictorArch& a) {
  return {{"image_channels", a.image_channels}, {"image_size", a.image_size},
          {"base_channels", a.base_channels},   {"embed_dim", a.embed_dim},
          {"num_classes", a.num_classes}};
}

nlohmann::json arch_to_json(const ClassifierArch& a) {
  return {{"image_channels", a.image_channels}, {"image_size", a.image_size},
          {"channels", a.channels},             {"feature_dim", a.feature_dim},
          {"num_classes", a.num_classes}};
}

CheckpointManifest save_checkpoint(const NoisePredictor& model, const std::filesystem::path& path,
                                   const nlohmann::json& provenance) {
  return write_checkpoint(path, "noise_predictor", arch_to_json(model.arch()), model.params(),
                          provenance);
}

CheckpointManifest save_checkpoint(const Classifier& model, const std::filesystem::path& path,
                                   const nlohmann::json& provenance) {
  return write_checkpoint(path, "classifier", arch_to_json(model.arch()), model.params(),
                          provenance);
}

NoisePredictor load_noise_predictor(const std::filesystem::path& path,
                                    CheckpointManifest* manifest) {
  RawCheckpoint raw = read_checkpoint(path);
  const auto arch = require_kind<NoisePredictorArch>(raw, "noise_predictor", path);
  NoisePredictor model(arch);
  fill_params(model.params(), raw, path);
  if (manifest) *manifest = std::move(raw.manifest);
  return model;
}

Classifier load_classifier(const std::filesystem::path& path, CheckpointManifest* manifest) {
  RawCheckpoint raw = read_checkpoint(path);
  const auto arch = require_kind<ClassifierArch>(raw, "classifier", path);
  Classifier model(arch);
  fill_params(model.params(), raw, path);
  if (manifest) *manifest = std::move(raw.manifest);
  return model;
}

}  // namespace crafted::io
