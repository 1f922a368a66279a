#include "gradcheck.hpp"

#include "dgrecon/model.hpp"
#include "dgrecon/nn/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace dgrecon::testing {

using nn::Tape;
using nn::Tensor;
using nn::Var;

double relative_error(double a, double n, double floor) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

GradReport gradcheck(const std::string& name, const std::function<Var(Tape&)>& loss,
                     const std::vector<Var>& leaves, int max_coords, std::uint64_t seed,
                     double eps) {
  GradReport rep{name, 0.0, 0};
  for (const Var& v : leaves) v->grad_buffer().fill(0.0);
  {
    Tape t(true);
    t.backward(loss(t));
  }
  std::mt19937_64 rng(seed);
  auto eval = [&] {
    Tape t(false);
    return loss(t)->value[0];
  };
  for (const Var& v : leaves) {
    std::vector<std::size_t> idx(v->value.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (static_cast<int>(idx.size()) > max_coords) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(max_coords);
    }
    for (std::size_t i : idx) {
      const double x0 = v->value[i];
      v->value[i] = x0 + eps;
      const double up = eval();
      v->value[i] = x0 - eps;
      const double down = eval();
      v->value[i] = x0;
      const double numeric = (up - down) / (2 * eps);
      rep.max_rel_error = std::max(rep.max_rel_error, relative_error(v->grad[i], numeric));
      ++rep.checked;
    }
  }
  return rep;
}

Var random_projection(Tape& t, const Var& x, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  auto r = std::make_shared<std::vector<double>>(x->value.size());
  for (double& v : *r) v = u(rng);
  double s = 0.0;
  for (std::size_t i = 0; i < r->size(); ++i) s += (*r)[i] * x->value[i];
  return t.record(Tensor({1}, std::vector<double>{s}), {x},
                  [r](nn::Node& self) {
                    const Var& in = self.inputs[0];
                    if (!in->requires_grad) return;
                    Tensor& g = in->grad_buffer();
                    for (std::size_t i = 0; i < r->size(); ++i) g[i] += (*r)[i] * self.grad[0];
                  },
                  "random_projection");
}

namespace {

Var random_leaf(nn::Shape shape, std::mt19937_64& rng, double margin = 0.0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Tensor x(std::move(shape));
  for (std::size_t i = 0; i < x.size(); ++i) {
    double v = u(rng);
    // keep relu inputs away from the kink
    if (margin > 0 && std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
    x[i] = v;
  }
  return nn::make_leaf(std::move(x), true);
}

void randomize(std::vector<nn::Parameter> params, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& p : params)
    for (double& v : p.value().storage()) v = u(rng);
}

}  // namespace

GradReport check_layer_kind(nn::LayerKind kind, std::uint64_t seed) {
  using nn::LayerKind;
  using nn::LayerSpec;
  std::mt19937_64 rng(seed);
  LayerSpec spec;
  std::vector<Var> inputs;
  switch (kind) {
    case LayerKind::linear:
      spec = LayerSpec::linear("linear", 5, 4);
      inputs.push_back(random_leaf({5, 7}, rng));
      break;
    case LayerKind::conv2d:
      spec = LayerSpec::conv2d("conv2d", 3, 4, 3, 2, 1);
      inputs.push_back(random_leaf({2, 3, 7, 6}, rng));
      break;
    case LayerKind::conv3d:
      spec = LayerSpec::conv3d("conv3d", 2, 3, 3, 2, 1);
      inputs.push_back(random_leaf({2, 5, 4, 6}, rng));
      break;
    case LayerKind::relu:
      spec = LayerSpec::simple(kind, "relu");
      inputs.push_back(random_leaf({3, 4, 5}, rng, 0.01));
      break;
    case LayerKind::sigmoid:
      spec = LayerSpec::simple(kind, "sigmoid");
      inputs.push_back(random_leaf({3, 4, 5}, rng));
      break;
    case LayerKind::nearest_upsample3d:
      spec = LayerSpec::simple(kind, "upsample");
      inputs.push_back(random_leaf({2, 2, 3, 2}, rng));
      break;
    case LayerKind::concat:
      spec = LayerSpec::simple(kind, "concat");
      inputs.push_back(random_leaf({2, 3, 4}, rng));
      inputs.push_back(random_leaf({3, 3, 4}, rng));
      break;
    case LayerKind::mean:
      spec = LayerSpec::simple(kind, "mean");
      inputs.push_back(random_leaf({4, 5}, rng));
      break;
  }
  const nn::Layer layer(spec, rng);
  randomize(layer.parameters(), rng);
  std::vector<Var> leaves = inputs;
  for (const auto& p : layer.parameters()) leaves.push_back(p.var);
  auto loss = [&](Tape& t) {
    return random_projection(t, nn::forward(t, layer, inputs), seed + 17);
  };
  return gradcheck(std::string(nn::to_string(kind)), loss, leaves, 60, seed);
}

GradReport check_end_to_end(std::uint64_t seed, bool enable_pb) {
  std::mt19937_64 rng(seed);
  const SdfScene scene{{Sphere{{0.0, 0.0, 0.0}, 0.1}}};
  const Intrinsics K{8.0, 8.0, 3.5, 3.5, 8, 8};
  std::vector<Camera> cams;
  std::vector<DepthMap> depths;
  std::vector<RenderedInput> images;
  for (const Pose& P : orbit_trajectory(scene, 2, 0.6, 0.2)) {
    cams.push_back({K, P});
    depths.push_back(raycast_depth(scene, K, P));
    images.push_back(render_input(scene, K, P, seed + cams.size()));
  }
  GridSpec spec;
  spec.voxel_size = 0.05;
  spec.dims = {4, 4, 4};
  spec.origin = Vec3::Constant(-0.075);

  ModelConfig mc;
  mc.coarse_channels = 4;
  mc.fine_channels = 3;
  mc.psi_channels = 4;
  mc.theta_s_hidden = 5;
  mc.theta_o_hidden = 4;
  const ModelParams m(mc, seed);
  randomize(m.parameters(), rng);

  std::vector<Vec3> points;
  std::vector<double> target;
  std::uniform_real_distribution<double> u(-0.07, 0.07);
  for (int i = 0; i < 6; ++i) {
    points.emplace_back(u(rng), u(rng), u(rng));
    target.push_back(sdf_eval(scene, points.back(), 0.12));
  }
  std::vector<double> occ(spec.count());
  for (std::size_t v = 0; v < occ.size(); ++v) occ[v] = (v % 3) == 0;

  const ViewInputs vin{cams, depths, 0.12};
  const nn::Tensor img = stack_images(images);
  auto loss = [&](Tape& t) {
    const auto f = extract_features(t, m, t.constant(img), enable_pb);
    const Var vg = build_guidance_volume(t, m, f.coarse, vin, spec);
    const VolumeEncoding enc = encode_volume(t, m, vg);
    const Var pred = predict_tsdf(t, m, enc.features, spec, points, f.fine, vin, enable_pb);
    return compute_loss(t, pred, target, enc.occupancy, occ).total;
  };
  std::vector<Var> leaves;
  for (const auto& p : m.parameters()) leaves.push_back(p.var);
  return gradcheck(enable_pb ? "end_to_end_pb" : "end_to_end", loss, leaves, 12, seed);
}

}  // namespace dgrecon::testing
