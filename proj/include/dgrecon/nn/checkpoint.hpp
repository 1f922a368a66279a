#pragma once

#include "dgrecon/nn/adam.hpp"
#include "dgrecon/nn/layers.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dgrecon::nn {

inline constexpr char kCheckpointMagic[8] = {'D', 'G', 'R', 'C', 'K', 'P', 'T', '\0'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json to_json(const LayerSpec& s);
LayerSpec layer_spec_from_json(const nlohmann::json& j);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

struct CheckpointData {
  std::vector<LayerSpec> layers;
  std::vector<NamedTensor> params;
  /// Adam moments in parameter order; empty when not saved.
  std::vector<Tensor> adam_m;
  std::vector<Tensor> adam_v;
  long adam_step = 0;
  nlohmann::json meta;
};

/// Layout: 8-byte magic, uint32 version, uint64 manifest length, manifest
/// JSON (layer specs, tensor names and shapes, metadata), then raw
/// little-endian float64 tensor data in manifest order.
void save_checkpoint(const std::filesystem::path& path, std::span<const LayerSpec> layers,
                     std::span<const Parameter> params, const AdamState* adam,
                     const nlohmann::json& meta);

CheckpointData load_checkpoint(const std::filesystem::path& path);

/// Copies checkpoint tensors into `params`, matching names and shapes.
void restore_parameters(const CheckpointData& ckpt, std::span<Parameter> params);

}  // namespace dgrecon::nn
