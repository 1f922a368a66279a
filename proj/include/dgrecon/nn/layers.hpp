#pragma once

#include "dgrecon/nn/autograd.hpp"

#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dgrecon::nn {

enum class LayerKind { linear, conv2d, conv3d, relu, sigmoid, nearest_upsample3d, concat, mean };

std::string_view to_string(LayerKind k);
LayerKind parse_layer_kind(std::string_view s);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::string name;
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 1;
  int stride = 1;
  int padding = 0;
  int factor = 2;

  static LayerSpec linear(std::string name, int in, int out);
  static LayerSpec conv2d(std::string name, int in, int out, int kernel, int stride, int padding);
  static LayerSpec conv3d(std::string name, int in, int out, int kernel, int stride, int padding);
  static LayerSpec simple(LayerKind kind, std::string name = {});

  bool has_parameters() const;
  bool valid() const;
  bool operator==(const LayerSpec&) const = default;
};

/// One layer and its parameters. Weights start uniform in +-sqrt(6 / fan_in),
/// biases at zero.
class Layer {
 public:
  Layer(LayerSpec spec, std::mt19937_64& rng);

  const LayerSpec& spec() const { return spec_; }
  /// Shares storage with the layer.
  std::vector<Parameter> parameters() const;

  Var forward(Tape& t, std::span<const Var> inputs) const;

 private:
  LayerSpec spec_;
  std::optional<Parameter> weight_;
  std::optional<Parameter> bias_;
};

/// Runs `layer` on `inputs`, recording on `t`. Shape errors name the layer.
Var forward(Tape& t, const Layer& layer, std::span<const Var> inputs);
Var forward(Tape& t, const Layer& layer, const Var& input);

}  // namespace dgrecon::nn
