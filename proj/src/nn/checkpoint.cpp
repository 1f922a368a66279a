#include "dgrecon/nn/checkpoint.hpp"

#include "dgrecon/io_util.hpp"

#include <cstring>
#include <stdexcept>

namespace dgrecon::nn {

nlohmann::json to_json(const LayerSpec& s) {
  return {{"kind", std::string(to_string(s.kind))},
          {"name", s.name},
          {"in_channels", s.in_channels},
          {"out_channels", s.out_channels},
          {"kernel", s.kernel},
          {"stride", s.stride},
          {"padding", s.padding},
          {"factor", s.factor}};
}

LayerSpec layer_spec_from_json(const nlohmann::json& j) {
  LayerSpec s;
  s.kind = parse_layer_kind(j.at("kind").get<std::string>());
  s.name = j.at("name").get<std::string>();
  s.in_channels = j.at("in_channels").get<int>();
  s.out_channels = j.at("out_channels").get<int>();
  s.kernel = j.at("kernel").get<int>();
  s.stride = j.at("stride").get<int>();
  s.padding = j.at("padding").get<int>();
  s.factor = j.at("factor").get<int>();
  return s;
}

void save_checkpoint(const std::filesystem::path& path, std::span<const LayerSpec> layers,
                     std::span<const Parameter> params, const AdamState* adam,
                     const nlohmann::json& meta) {
  nlohmann::json manifest;
  manifest["layers"] = nlohmann::json::array();
  for (const auto& l : layers) manifest["layers"].push_back(to_json(l));
  manifest["tensors"] = nlohmann::json::array();
  for (const auto& p : params) {
    manifest["tensors"].push_back({{"name", p.name}, {"shape", p.value().shape()}});
  }
  const bool with_adam = adam && adam->m.size() == params.size();
  manifest["adam"] = with_adam ? nlohmann::json{{"step", adam->step},
                                                {"lr", adam->lr},
                                                {"beta1", adam->beta1},
                                                {"beta2", adam->beta2},
                                                {"eps", adam->eps}}
                               : nlohmann::json(nullptr);
  manifest["meta"] = meta;
  const std::string text = manifest.dump();

  BinaryWriter w;
  w.put_bytes(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  w.put<std::uint32_t>(kCheckpointVersion);
  w.put<std::uint64_t>(text.size());
  w.put_bytes(text);
  for (const auto& p : params)
    for (double v : p.value().storage()) w.put<double>(v);
  if (with_adam) {
    for (const auto& t : adam->m)
      for (double v : t.storage()) w.put<double>(v);
    for (const auto& t : adam->v)
      for (double v : t.storage()) w.put<double>(v);
  }
  write_file_atomic(path, w.bytes());
}

CheckpointData load_checkpoint(const std::filesystem::path& path) {
  BinaryReader r(read_file(path), path.string());
  const std::string magic = r.get_bytes(sizeof(kCheckpointMagic));
  if (std::memcmp(magic.data(), kCheckpointMagic, sizeof(kCheckpointMagic)) != 0) {
    throw ParseError(path.string() + ": not a checkpoint file", 0);
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(version),
                     8);
  }
  const auto len = r.get<std::uint64_t>();
  const std::size_t manifest_at = r.offset();
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(r.get_bytes(len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": bad manifest: " + e.what(), manifest_at);
  }
  CheckpointData out;
  for (const auto& l : manifest.at("layers")) out.layers.push_back(layer_spec_from_json(l));
  std::vector<Shape> shapes;
  for (const auto& t : manifest.at("tensors")) {
    shapes.push_back(t.at("shape").get<Shape>());
    Tensor tensor(shapes.back());
    for (double& v : tensor.storage()) v = r.get<double>();
    out.params.push_back({t.at("name").get<std::string>(), std::move(tensor)});
  }
  if (!manifest.at("adam").is_null()) {
    out.adam_step = manifest["adam"].at("step").get<long>();
    for (auto* dst : {&out.adam_m, &out.adam_v}) {
      for (const auto& s : shapes) {
        Tensor tensor(s);
        for (double& v : tensor.storage()) v = r.get<double>();
        dst->push_back(std::move(tensor));
      }
    }
  }
  out.meta = manifest.value("meta", nlohmann::json::object());
  r.expect_end();
  return out;
}

void restore_parameters(const CheckpointData& ckpt, std::span<Parameter> params) {
  if (ckpt.params.size() != params.size()) {
    throw std::runtime_error("checkpoint has " + std::to_string(ckpt.params.size()) +
                             " tensors, model expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = ckpt.params[i];
    if (src.name != params[i].name || src.tensor.shape() != params[i].value().shape()) {
      throw std::runtime_error("checkpoint tensor '" + src.name + "' " +
                               shape_str(src.tensor.shape()) + " does not match model '" +
                               params[i].name + "' " + shape_str(params[i].value().shape()));
    }
    params[i].value() = src.tensor;
  }
}

}  // namespace dgrecon::nn
