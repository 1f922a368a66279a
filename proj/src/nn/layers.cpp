#include "dgrecon/nn/layers.hpp"

#include "dgrecon/nn/ops.hpp"

#include <cmath>
#include <stdexcept>

namespace dgrecon::nn {

std::string_view to_string(LayerKind k) {
  switch (k) {
    case LayerKind::linear: return "linear";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::conv3d: return "conv3d";
    case LayerKind::relu: return "relu";
    case LayerKind::sigmoid: return "sigmoid";
    case LayerKind::nearest_upsample3d: return "nearest_upsample3d";
    case LayerKind::concat: return "concat";
    case LayerKind::mean: return "mean";
  }
  return "unknown";
}

LayerKind parse_layer_kind(std::string_view s) {
  for (auto k : {LayerKind::linear, LayerKind::conv2d, LayerKind::conv3d, LayerKind::relu,
                 LayerKind::sigmoid, LayerKind::nearest_upsample3d, LayerKind::concat,
                 LayerKind::mean}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown layer kind '" + std::string(s) + "'");
}

LayerSpec LayerSpec::linear(std::string name, int in, int out) {
  LayerSpec s;
  s.kind = LayerKind::linear;
  s.name = std::move(name);
  s.in_channels = in;
  s.out_channels = out;
  return s;
}

LayerSpec LayerSpec::conv2d(std::string name, int in, int out, int kernel, int stride,
                            int padding) {
  LayerSpec s = linear(std::move(name), in, out);
  s.kind = LayerKind::conv2d;
  s.kernel = kernel;
  s.stride = stride;
  s.padding = padding;
  return s;
}

LayerSpec LayerSpec::conv3d(std::string name, int in, int out, int kernel, int stride,
                            int padding) {
  LayerSpec s = conv2d(std::move(name), in, out, kernel, stride, padding);
  s.kind = LayerKind::conv3d;
  return s;
}

LayerSpec LayerSpec::simple(LayerKind kind, std::string name) {
  LayerSpec s;
  s.kind = kind;
  s.name = std::move(name);
  return s;
}

bool LayerSpec::has_parameters() const {
  return kind == LayerKind::linear || kind == LayerKind::conv2d || kind == LayerKind::conv3d;
}

bool LayerSpec::valid() const {
  if (has_parameters()) {
    if (in_channels < 1 || out_channels < 1) return false;
    if (kind != LayerKind::linear) {
      return kernel >= 1 && stride >= 1 && padding >= 0 && padding < kernel;
    }
    return true;
  }
  if (kind == LayerKind::nearest_upsample3d) return factor >= 1;
  return true;
}

Layer::Layer(LayerSpec spec, std::mt19937_64& rng) : spec_(std::move(spec)) {
  if (!spec_.valid()) {
    throw std::invalid_argument("layer '" + spec_.name + "': inconsistent hyperparameters");
  }
  if (!spec_.has_parameters()) return;
  Shape wshape{spec_.out_channels, spec_.in_channels};
  int fan_in = spec_.in_channels;
  const int spatial = spec_.kind == LayerKind::conv2d ? 2 : spec_.kind == LayerKind::conv3d ? 3 : 0;
  for (int i = 0; i < spatial; ++i) {
    wshape.push_back(spec_.kernel);
    fan_in *= spec_.kernel;
  }
  Tensor w(wshape);
  const double limit = std::sqrt(6.0 / fan_in);
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : w.storage()) v = dist(rng);
  weight_.emplace(spec_.name + ".weight", std::move(w));
  bias_.emplace(spec_.name + ".bias", Tensor({spec_.out_channels}, 0.0));
}

std::vector<Parameter> Layer::parameters() const {
  std::vector<Parameter> out;
  if (weight_) out.push_back(*weight_);
  if (bias_) out.push_back(*bias_);
  return out;
}

Var Layer::forward(Tape& t, std::span<const Var> in) const {
  auto need = [&](std::size_t n) {
    if (in.size() != n) {
      throw std::invalid_argument("expects " + std::to_string(n) + " input(s), got " +
                                  std::to_string(in.size()));
    }
  };
  const ConvGeometry g{spec_.kernel, spec_.stride, spec_.padding};
  switch (spec_.kind) {
    case LayerKind::linear: need(1); return linear(t, in[0], weight_->var, bias_->var);
    case LayerKind::conv2d: need(1); return conv2d(t, in[0], weight_->var, bias_->var, g);
    case LayerKind::conv3d: need(1); return conv3d(t, in[0], weight_->var, bias_->var, g);
    case LayerKind::relu: need(1); return relu(t, in[0]);
    case LayerKind::sigmoid: need(1); return sigmoid(t, in[0]);
    case LayerKind::nearest_upsample3d: need(1); return upsample_nearest3d(t, in[0], spec_.factor);
    case LayerKind::concat: return concat(t, in);
    case LayerKind::mean: need(1); return mean(t, in[0]);
  }
  throw std::logic_error("unhandled layer kind");
}

Var forward(Tape& t, const Layer& layer, std::span<const Var> inputs) {
  try {
    return layer.forward(t, inputs);
  } catch (const std::invalid_argument& e) {
    throw std::invalid_argument("layer '" + layer.spec().name + "' (" +
                                std::string(to_string(layer.spec().kind)) + "): " + e.what());
  }
}

Var forward(Tape& t, const Layer& layer, const Var& input) {
  return forward(t, layer, std::span<const Var>(&input, 1));
}

}  // namespace dgrecon::nn
