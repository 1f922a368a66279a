#include "dgrecon/model.hpp"

#include "dgrecon/nn/checkpoint.hpp"
#include "dgrecon/nn/ops.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace dgrecon {

using nn::LayerSpec;
using nn::Tape;
using nn::Tensor;
using nn::Var;

bool ModelConfig::valid() const {
  return image_channels > 0 && coarse_channels > 0 && fine_channels > 0 && psi_channels > 0 &&
         theta_s_hidden > 0 && theta_o_hidden > 0 && guidance.valid();
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"image_channels", c.image_channels},
          {"coarse_channels", c.coarse_channels},
          {"fine_channels", c.fine_channels},
          {"psi_channels", c.psi_channels},
          {"theta_s_hidden", c.theta_s_hidden},
          {"theta_o_hidden", c.theta_o_hidden},
          {"guidance", std::string(to_string(c.guidance.variant))},
          {"sigma_density", c.guidance.sigma_density},
          {"sigma_weight", c.guidance.sigma_weight},
          {"pb_depth_channel", c.pb_depth_channel}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.image_channels = j.at("image_channels").get<int>();
  c.coarse_channels = j.at("coarse_channels").get<int>();
  c.fine_channels = j.at("fine_channels").get<int>();
  c.psi_channels = j.at("psi_channels").get<int>();
  c.theta_s_hidden = j.at("theta_s_hidden").get<int>();
  c.theta_o_hidden = j.at("theta_o_hidden").get<int>();
  c.guidance.variant = parse_guidance(j.at("guidance").get<std::string>());
  c.guidance.sigma_density = j.at("sigma_density").get<double>();
  c.guidance.sigma_weight = j.at("sigma_weight").get<double>();
  c.pb_depth_channel = j.at("pb_depth_channel").get<bool>();
  return c;
}

namespace {

std::vector<nn::Layer> image_stack(const std::string& prefix, int in, int c,
                                   std::mt19937_64& rng) {
  std::vector<nn::Layer> v;
  v.emplace_back(LayerSpec::conv2d(prefix + ".conv1", in, c, 3, 2, 1), rng);
  v.emplace_back(LayerSpec::conv2d(prefix + ".conv2", c, c, 3, 1, 1), rng);
  v.emplace_back(LayerSpec::conv2d(prefix + ".conv3", c, c, 3, 2, 1), rng);
  v.emplace_back(LayerSpec::conv2d(prefix + ".conv4", c, c, 3, 1, 1), rng);
  return v;
}

enum PsiLayer { kEnc1, kEnc2, kEnc3, kDec2, kDec1, kOut };

}  // namespace

ModelParams::ModelParams(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (!cfg.valid()) throw std::invalid_argument("ModelParams: invalid model config");
  std::mt19937_64 rng(seed);
  omega_c = image_stack("omega_c", cfg.image_channels, cfg.coarse_channels, rng);
  omega_f = image_stack("omega_f", cfg.image_channels, cfg.fine_channels, rng);

  const int cin = cfg.volume_input_channels();
  psi.emplace_back(LayerSpec::conv3d("psi.enc1", cin, 16, 3, 1, 1), rng);
  psi.emplace_back(LayerSpec::conv3d("psi.enc2", 16, 32, 3, 2, 1), rng);
  psi.emplace_back(LayerSpec::conv3d("psi.enc3", 32, 32, 3, 2, 1), rng);
  psi.emplace_back(LayerSpec::conv3d("psi.dec2", 64, 16, 3, 1, 1), rng);
  psi.emplace_back(LayerSpec::conv3d("psi.dec1", 32, 16, 3, 1, 1), rng);
  psi.emplace_back(LayerSpec::conv3d("psi.out", 16, cfg.psi_channels, 1, 1, 0), rng);

  theta_s.emplace_back(LayerSpec::linear("theta_s.fc1", cfg.theta_s_inputs(), cfg.theta_s_hidden),
                       rng);
  theta_s.emplace_back(LayerSpec::linear("theta_s.fc2", cfg.theta_s_hidden, cfg.theta_s_hidden),
                       rng);
  theta_s.emplace_back(LayerSpec::linear("theta_s.fc3", cfg.theta_s_hidden, 1), rng);

  theta_o.emplace_back(LayerSpec::linear("theta_o.fc1", cfg.psi_channels, cfg.theta_o_hidden),
                       rng);
  theta_o.emplace_back(LayerSpec::linear("theta_o.fc2", cfg.theta_o_hidden, 1), rng);
}

std::vector<LayerSpec> ModelParams::layer_specs() const {
  std::vector<LayerSpec> out;
  for (const auto* stack : {&omega_c, &omega_f, &psi, &theta_s, &theta_o})
    for (const auto& l : *stack) out.push_back(l.spec());
  return out;
}

std::vector<nn::Parameter> ModelParams::parameters() const {
  std::vector<nn::Parameter> out;
  for (const auto* stack : {&omega_c, &omega_f, &psi, &theta_s, &theta_o})
    for (const auto& l : *stack)
      for (auto& p : l.parameters()) out.push_back(std::move(p));
  return out;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.value().size();
  return n;
}

Tensor stack_images(std::span<const RenderedInput> images) {
  if (images.empty()) throw std::invalid_argument("stack_images: no images");
  const int w = images[0].width;
  const int h = images[0].height;
  Tensor t({static_cast<int>(images.size()), RenderedInput::kChannels, h, w});
  std::size_t k = 0;
  for (const auto& im : images) {
    if (im.width != w || im.height != h) {
      throw std::invalid_argument("stack_images: images differ in size");
    }
    for (float v : im.data) t[k++] = v;
  }
  return t;
}

ImageFeatures extract_features(Tape& t, const ModelParams& m, const Var& images, bool need_fine) {
  const Tensor& x = images->value;
  if (x.rank() != 4 || x.dim(2) % 4 != 0 || x.dim(3) % 4 != 0) {
    throw std::invalid_argument("extract_features: expected (N,C,H,W) with H, W divisible by 4, got " +
                                nn::shape_str(x.shape()));
  }
  auto block = [&](const nn::Layer& l, const Var& in) { return nn::relu(t, nn::forward(t, l, in)); };
  ImageFeatures f;
  Var h = block(m.omega_c[0], images);
  h = block(m.omega_c[1], h);
  h = block(m.omega_c[2], h);
  f.coarse = block(m.omega_c[3], h);
  if (need_fine) {
    Var g = block(m.omega_f[0], images);
    f.fine = block(m.omega_f[1], g);
  }
  return f;
}

std::vector<FeatureMap2D> to_feature_maps(const Tensor& t, int stride) {
  if (t.rank() != 4) throw std::invalid_argument("to_feature_maps: expected (N,C,H,W)");
  std::vector<FeatureMap2D> out;
  const std::size_t per = static_cast<std::size_t>(t.dim(1)) * t.dim(2) * t.dim(3);
  for (int n = 0; n < t.dim(0); ++n) {
    FeatureMap2D fm(t.dim(3), t.dim(2), t.dim(1), stride);
    std::copy_n(t.data() + n * per, per, fm.data.begin());
    out.push_back(std::move(fm));
  }
  return out;
}

FeatureMaps extract_features(const ModelParams& m, std::span<const RenderedInput> images) {
  Tape t(false);
  const auto f = extract_features(t, m, t.constant(stack_images(images)), true);
  return {to_feature_maps(f.coarse->value, 4), to_feature_maps(f.fine->value, 2)};
}

Var build_guidance_volume(Tape& t, const ModelParams& m, const Var& coarse,
                          const ViewInputs& views, const GridSpec& spec,
                          const TsdfVolume* fused) {
  const GuidanceStrategy& g = m.config().guidance;
  const std::vector<Vec3> pts = voxel_centers(spec);
  const int n = static_cast<int>(pts.size());
  std::vector<Var> parts;

  if (g.uses_image_features()) {
    const Tensor& c = coarse->value;
    if (c.rank() != 4 || static_cast<std::size_t>(c.dim(0)) != views.cameras.size()) {
      throw std::invalid_argument("build_guidance_volume: coarse maps " + nn::shape_str(c.shape()) +
                                  " do not match " + std::to_string(views.cameras.size()) +
                                  " views");
    }
    PlanOptions opts;
    if (g.gaussian_weighting()) {
      opts.weighting = ViewWeighting::gaussian_depth;
      opts.sigma = g.sigma_weight;
      opts.depths = views.depths;
    }
    const GatherPlan plan = plan_backprojection(pts, views.cameras, c.dim(3), c.dim(2), 4, opts);
    parts.push_back(nn::gather(t, coarse, plan, c.dim(1), c.dim(2) * c.dim(3)));
  }

  TsdfVolume own;
  if (g.needs_depth_volume() && !fused) {
    own = fuse_depths(views.depths, views.cameras, spec, views.tau);
    fused = &own;
  }
  switch (g.variant) {
    case GuidanceVariant::tsdf:
    case GuidanceVariant::tsdf_plus_gaussian:
    case GuidanceVariant::depth_only: {
      if (!(fused->spec == spec)) {
        throw std::invalid_argument("build_guidance_volume: fused volume grid differs");
      }
      Tensor ch({1, n});
      for (int i = 0; i < n; ++i) ch[i] = fused->values[i];
      parts.push_back(t.constant(std::move(ch)));
      break;
    }
    case GuidanceVariant::density:
      parts.push_back(t.constant(
          Tensor({1, n}, density_channel(pts, views.cameras, views.depths, g.sigma_density))));
      break;
    case GuidanceVariant::gaussian_weight:
    case GuidanceVariant::none:
      break;
  }
  Var vg = parts.size() == 1 ? parts[0] : nn::concat(t, parts);
  return nn::reshape(t, vg, {vg->value.dim(0), spec.dims[0], spec.dims[1], spec.dims[2]});
}

VolumeEncoding encode_volume(Tape& t, const ModelParams& m, const Var& vg) {
  const Tensor& x = vg->value;
  if (x.rank() != 4) {
    throw std::invalid_argument("encode_volume: expected (C,D,H,W), got " + nn::shape_str(x.shape()));
  }
  if (x.dim(0) != m.config().volume_input_channels()) {
    throw std::invalid_argument("encode_volume: volume has " + std::to_string(x.dim(0)) +
                                " channels, guidance '" +
                                std::string(to_string(m.config().guidance.variant)) +
                                "' expects " + std::to_string(m.config().volume_input_channels()));
  }
  const std::array<int, 3> dims{x.dim(1), x.dim(2), x.dim(3)};
  std::array<int, 3> padded{};
  for (int a = 0; a < 3; ++a) padded[a] = (dims[a] + 3) / 4 * 4;
  Var in = padded == dims ? vg : nn::pad3d(t, vg, padded);

  auto block = [&](PsiLayer l, const Var& v) { return nn::relu(t, nn::forward(t, m.psi[l], v)); };
  auto cat = [&](const Var& a, const Var& b) {
    const std::array<Var, 2> xs{a, b};
    return nn::concat(t, xs);
  };
  const Var e1 = block(kEnc1, in);
  const Var e2 = block(kEnc2, e1);
  const Var e3 = block(kEnc3, e2);
  const Var d2 = block(kDec2, cat(nn::upsample_nearest3d(t, e3, 2), e2));
  const Var d1 = block(kDec1, cat(nn::upsample_nearest3d(t, d2, 2), e1));
  Var out = nn::forward(t, m.psi[kOut], d1);
  if (padded != dims) out = nn::crop3d(t, out, dims);

  VolumeEncoding enc;
  enc.features = out;
  Var h = nn::relu(t, nn::forward(t, m.theta_o[0], out));
  enc.occupancy = nn::forward(t, m.theta_o[1], h);
  return enc;
}

EncodedVolume encode_volume(const ModelParams& m, const FeatureVolume& vg) {
  Tape t(false);
  const auto& d = vg.spec.dims;
  const Var x = t.constant(Tensor({vg.channels, d[0], d[1], d[2]}, vg.data));
  const VolumeEncoding enc = encode_volume(t, m, x);
  EncodedVolume out;
  out.features.spec = vg.spec;
  out.features.channels = enc.features->value.dim(0);
  out.features.data = enc.features->value.storage();
  out.features.validity = vg.validity;
  out.occupancy_logits = enc.occupancy->value.storage();
  return out;
}

GatherPlan trilinear_plan(std::span<const Vec3> points, const GridSpec& spec) {
  GatherPlan plan;
  plan.outputs = static_cast<int>(points.size());
  plan.offsets.reserve(points.size() + 1);
  plan.view_count.resize(points.size());
  plan.taps.reserve(points.size() * 8);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const TrilinearStencil s = trilinear_stencil(spec, points[i]);
    for (int k = 0; k < 8; ++k) {
      if (s.weight[k] != 0.0) plan.taps.push_back({0, static_cast<int>(s.index[k]), s.weight[k]});
    }
    plan.offsets.push_back(plan.taps.size());
    plan.view_count[i] = s.out_of_bounds ? 0 : 1;
  }
  return plan;
}

namespace {

Var mlp(Tape& t, std::span<const nn::Layer> layers, Var x) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = nn::forward(t, layers[i], x);
    if (i + 1 < layers.size()) x = nn::relu(t, x);
  }
  return x;
}

std::vector<double> depth_channel(std::span<const Vec3> points, const ViewInputs& views) {
  std::vector<double> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    out[i] = tsdf_point_oracle(points[i], views.depths, views.cameras, views.tau).value;
  }
  return out;
}

}  // namespace

Var predict_tsdf(Tape& t, const ModelParams& m, const Var& vpsi, const GridSpec& spec,
                 std::span<const Vec3> points, const Var& fine, const ViewInputs& views,
                 bool enable_pb) {
  const ModelConfig& cfg = m.config();
  const int p = static_cast<int>(points.size());
  const Var sampled = nn::gather(t, vpsi, trilinear_plan(points, spec), cfg.psi_channels,
                                 static_cast<int>(spec.count()));
  Var w;
  if (enable_pb) {
    if (!fine) throw std::invalid_argument("predict_tsdf: point back-projection needs fine maps");
    const Tensor& f = fine->value;
    PlanOptions opts;
    opts.weighting = ViewWeighting::border;
    const GatherPlan plan = plan_backprojection(points, views.cameras, f.dim(3), f.dim(2), 2, opts);
    w = nn::gather(t, fine, plan, f.dim(1), f.dim(2) * f.dim(3));
    if (cfg.pb_depth_channel) {
      const std::array<Var, 2> xs{w, t.constant(Tensor({1, p}, depth_channel(points, views)))};
      w = nn::concat(t, xs);
    }
  } else {
    w = t.constant(Tensor({cfg.point_channels(), p}, 0.0));
  }
  const std::array<Var, 2> xs{w, sampled};
  return mlp(t, m.theta_s, nn::concat(t, xs));
}

void mlp_forward(std::span<const nn::Layer> layers, std::span<const double> in,
                 std::span<double> out) {
  std::vector<double> a(in.begin(), in.end());
  std::vector<double> b;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto params = layers[l].parameters();
    const Tensor& w = params[0].value();
    const Tensor& bias = params[1].value();
    const int co = w.dim(0);
    const int ci = w.dim(1);
    if (static_cast<int>(a.size()) != ci) {
      throw std::invalid_argument("mlp_forward: layer '" + layers[l].spec().name + "' expects " +
                                  std::to_string(ci) + " inputs, got " + std::to_string(a.size()));
    }
    b.assign(co, 0.0);
    for (int o = 0; o < co; ++o) {
      const double* row = w.data() + static_cast<std::size_t>(o) * ci;
      double s = bias[o];
      for (int i = 0; i < ci; ++i) s += row[i] * a[i];
      b[o] = (l + 1 < layers.size()) ? std::max(s, 0.0) : s;
    }
    std::swap(a, b);
  }
  if (a.size() != out.size()) throw std::invalid_argument("mlp_forward: output size mismatch");
  std::copy(a.begin(), a.end(), out.begin());
}

TsdfPredictor::TsdfPredictor(const ModelParams& m, const FeatureVolume& vpsi,
                             std::span<const FeatureMap2D> fine, const ViewInputs& views,
                             bool enable_pb)
    : m_(m), vpsi_(vpsi), fine_(fine), views_(views), enable_pb_(enable_pb) {
  if (vpsi.channels != m.config().psi_channels) {
    throw std::invalid_argument("TsdfPredictor: feature volume has " +
                                std::to_string(vpsi.channels) + " channels, expected " +
                                std::to_string(m.config().psi_channels));
  }
  if (enable_pb && fine.size() != views.cameras.size()) {
    throw std::invalid_argument("TsdfPredictor: point back-projection needs one fine map per view");
  }
}

void TsdfPredictor::predict(std::span<const Vec3> points, std::span<double> out) const {
  if (out.size() != points.size()) throw std::invalid_argument("TsdfPredictor: size mismatch");
  const ModelConfig& cfg = m_.config();
  const int cp = cfg.point_channels();
  const int cs = cfg.psi_channels;
  constexpr std::size_t kBlock = 2048;
  const long blocks = static_cast<long>((points.size() + kBlock - 1) / kBlock);
#pragma omp parallel for schedule(dynamic)
  for (long bi = 0; bi < blocks; ++bi) {
    const std::size_t lo = bi * kBlock;
    const std::size_t hi = std::min(points.size(), lo + kBlock);
    const auto pts = points.subspan(lo, hi - lo);
    PointFeatures w;
    std::vector<double> dch;
    if (enable_pb_) {
      w = point_backproject(pts, fine_, views_.cameras);
      if (cfg.pb_depth_channel) dch = depth_channel(pts, views_);
    }
    std::vector<double> x(cp + cs);
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::fill(x.begin(), x.end(), 0.0);
      if (enable_pb_) {
        for (int c = 0; c < cfg.fine_channels; ++c) x[c] = w.data[c * pts.size() + i];
        if (cfg.pb_depth_channel) x[cfg.fine_channels] = dch[i];
      }
      trilinear_sample(vpsi_.spec, vpsi_.data, cs, pts[i], std::span<double>(x).subspan(cp));
      mlp_forward(m_.theta_s, x, std::span<double>(&out[lo + i], 1));
    }
  }
}

std::vector<double> TsdfPredictor::predict(std::span<const Vec3> points) const {
  std::vector<double> out(points.size());
  predict(points, out);
  return out;
}

std::vector<double> predict_tsdf(std::span<const Vec3> points, const FeatureVolume& vpsi,
                                 std::span<const FeatureMap2D> fine, const ViewInputs& views,
                                 const ModelParams& m, bool enable_pb) {
  return TsdfPredictor(m, vpsi, fine, views, enable_pb).predict(points);
}

LossVars compute_loss(Tape& t, const Var& pred, std::span<const double> target, const Var& logits,
                      std::span<const double> occupancy) {
  LossVars l;
  l.tsdf = nn::log_l1_loss(t, pred, target);
  l.occupancy = nn::bce_with_logits(t, logits, occupancy);
  l.total = nn::add(t, l.tsdf, l.occupancy);
  return l;
}

LossTerms compute_loss(std::span<const double> pred, std::span<const double> target,
                       std::span<const double> logits, std::span<const double> occupancy) {
  Tape t(false);
  const auto l = compute_loss(
      t, t.constant(Tensor({static_cast<int>(pred.size())}, {pred.begin(), pred.end()})), target,
      t.constant(Tensor({static_cast<int>(logits.size())}, {logits.begin(), logits.end()})),
      occupancy);
  return {l.total->value[0], l.tsdf->value[0], l.occupancy->value[0]};
}

std::string_view to_string(SupervisionMode m) {
  switch (m) {
    case SupervisionMode::rts: return "rts";
    case SupervisionMode::interpolated: return "interpolated";
    case SupervisionMode::analytic: return "analytic";
  }
  return "unknown";
}

SupervisionMode parse_supervision(std::string_view s) {
  for (auto m : {SupervisionMode::rts, SupervisionMode::interpolated, SupervisionMode::analytic}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown supervision mode '" + std::string(s) + "'");
}

bool TrainConfig::valid() const {
  return chunk_dims[0] > 0 && chunk_dims[1] > 0 && chunk_dims[2] > 0 && voxel_size > 0 &&
         points_per_step > 0 && views_per_step > 0 && epochs > 0 && chunks_per_scene > 0 &&
         lr > 0 && depth_scale_min > 0 && depth_scale_min <= depth_scale_max &&
         yaw_range_deg >= 0 && pitch_range_deg >= 0;
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"supervision", std::string(to_string(c.supervision))},
          {"enable_dg", c.enable_dg},
          {"enable_pb", c.enable_pb},
          {"guidance", std::string(to_string(c.guidance.variant))},
          {"sigma_density", c.guidance.sigma_density},
          {"sigma_weight", c.guidance.sigma_weight},
          {"chunk_dims", c.chunk_dims},
          {"voxel_size", c.voxel_size},
          {"points_per_step", c.points_per_step},
          {"views_per_step", c.views_per_step},
          {"rotation_augmentation", c.rotation_augmentation},
          {"yaw_range_deg", c.yaw_range_deg},
          {"pitch_range_deg", c.pitch_range_deg},
          {"depth_scale_augmentation", c.depth_scale_augmentation},
          {"depth_scale_min", c.depth_scale_min},
          {"depth_scale_max", c.depth_scale_max},
          {"epochs", c.epochs},
          {"chunks_per_scene", c.chunks_per_scene},
          {"lr", c.lr},
          {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.supervision = parse_supervision(j.at("supervision").get<std::string>());
  c.enable_dg = j.at("enable_dg").get<bool>();
  c.enable_pb = j.at("enable_pb").get<bool>();
  c.guidance.variant = parse_guidance(j.at("guidance").get<std::string>());
  c.guidance.sigma_density = j.at("sigma_density").get<double>();
  c.guidance.sigma_weight = j.at("sigma_weight").get<double>();
  c.chunk_dims = j.at("chunk_dims").get<std::array<int, 3>>();
  c.voxel_size = j.at("voxel_size").get<double>();
  c.points_per_step = j.at("points_per_step").get<int>();
  c.views_per_step = j.at("views_per_step").get<int>();
  c.rotation_augmentation = j.at("rotation_augmentation").get<bool>();
  c.yaw_range_deg = j.at("yaw_range_deg").get<double>();
  c.pitch_range_deg = j.at("pitch_range_deg").get<double>();
  c.depth_scale_augmentation = j.at("depth_scale_augmentation").get<bool>();
  c.depth_scale_min = j.at("depth_scale_min").get<double>();
  c.depth_scale_max = j.at("depth_scale_max").get<double>();
  c.epochs = j.at("epochs").get<int>();
  c.chunks_per_scene = j.at("chunks_per_scene").get<int>();
  c.lr = j.at("lr").get<double>();
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

ModelConfig model_config_for(const TrainConfig& c, ModelConfig base) {
  base.guidance = c.guidance;
  if (!c.enable_dg) base.guidance.variant = GuidanceVariant::none;
  return base;
}

namespace {

double uniform01(std::mt19937_64& rng) {
  return std::generate_canonical<double, 53>(rng);
}

// Keeps a seeded random subset of at most k indices, in ascending order.
void subsample(std::vector<std::size_t>& idx, int k, std::mt19937_64& rng) {
  if (static_cast<int>(idx.size()) <= k) return;
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
}

}  // namespace

StepRecord train_step(const SceneData& data, ModelParams& m, nn::AdamState& adam,
                      const TrainConfig& cfg, std::mt19937_64& rng, bool update) {
  const auto t0 = std::chrono::steady_clock::now();
  if (!cfg.valid()) throw std::invalid_argument("train_step: invalid training config");
  if (model_config_for(cfg).guidance.variant != m.config().guidance.variant) {
    throw std::invalid_argument("train_step: guidance settings do not match the model's '" +
                                std::string(to_string(m.config().guidance.variant)) + "'");
  }
  const SceneDescription& desc = data.desc;
  const double tau = desc.tau;
  StepRecord rec;

  // Randomness is drawn in a fixed order whatever the flags say.
  const double u_yaw = uniform01(rng);
  const double u_pitch = uniform01(rng);
  const Vec3 u_center(uniform01(rng), uniform01(rng), uniform01(rng));

  Mat3 R = Mat3::Identity();
  if (cfg.rotation_augmentation) {
    const double deg = std::numbers::pi / 180.0;
    const double yaw = (2.0 * u_yaw - 1.0) * cfg.yaw_range_deg * deg;
    const double pitch = (2.0 * u_pitch - 1.0) * cfg.pitch_range_deg * deg;
    R = axis_rotation(Vec3::UnitX(), pitch) * axis_rotation(Vec3::UnitZ(), yaw);
  }
  const Pose aug{R, Vec3::Zero()};

  GridSpec chunk;
  chunk.voxel_size = cfg.voxel_size;
  chunk.dims = cfg.chunk_dims;
  const Vec3 extent = cfg.voxel_size * Vec3(chunk.dims[0] - 1, chunk.dims[1] - 1, chunk.dims[2] - 1);
  const Vec3 lo = desc.region.origin + extent / 2;
  const Vec3 hi = desc.region.max_corner() - extent / 2;
  Vec3 center;
  for (int a = 0; a < 3; ++a) {
    center[a] = lo[a] <= hi[a] ? lo[a] + u_center[a] * (hi[a] - lo[a]) : (lo[a] + hi[a]) / 2;
  }
  chunk.origin = R * center - extent / 2;

  std::vector<Camera> cams(data.cameras.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    cams[i] = {data.cameras[i].K, aug.compose(data.cameras[i].pose)};
  }

  std::vector<Vec3> probes{chunk.origin + extent / 2};
  for (int c = 0; c < 8; ++c) {
    probes.push_back(chunk.origin + Vec3((c & 1) * extent.x(), ((c >> 1) & 1) * extent.y(),
                                         ((c >> 2) & 1) * extent.z()));
  }
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < cams.size(); ++i) {
    for (const auto& p : probes) {
      if (project_point(p, cams[i].K, cams[i].pose).valid) {
        candidates.push_back(i);
        break;
      }
    }
  }
  std::shuffle(candidates.begin(), candidates.end(), rng);
  if (static_cast<int>(candidates.size()) > cfg.views_per_step) candidates.resize(cfg.views_per_step);
  std::sort(candidates.begin(), candidates.end());

  std::vector<Camera> views;
  std::vector<DepthMap> depths;
  std::vector<RenderedInput> images;
  for (std::size_t i : candidates) {
    const double u_scale = uniform01(rng);
    views.push_back(cams[i]);
    DepthMap d = data.noisy_depths[i];
    if (cfg.depth_scale_augmentation) {
      const float s = static_cast<float>(cfg.depth_scale_min +
                                         u_scale * (cfg.depth_scale_max - cfg.depth_scale_min));
      for (float& v : d.values) v *= s;
    }
    depths.push_back(std::move(d));
    images.push_back(data.images[i]);
  }
  rec.views = static_cast<int>(views.size());

  // Supervision points in the augmented frame, with world-frame originals.
  std::vector<Vec3> points;
  std::vector<Vec3> world;
  std::vector<double> target;
  const Mat3 Rt = R.transpose();
  switch (cfg.supervision) {
    case SupervisionMode::rts: {
      std::vector<std::size_t> idx;
      for (std::size_t i = 0; i < data.gt_samples.size(); ++i) {
        if (chunk.contains(R * data.gt_samples[i].position)) idx.push_back(i);
      }
      subsample(idx, cfg.points_per_step, rng);
      for (std::size_t i : idx) {
        world.push_back(data.gt_samples[i].position);
        points.push_back(R * world.back());
        target.push_back(data.gt_samples[i].value);
      }
      break;
    }
    case SupervisionMode::interpolated: {
      std::vector<double> gt(data.gt_samples.size());
      for (std::size_t i = 0; i < gt.size(); ++i) gt[i] = data.gt_samples[i].value;
      std::vector<std::size_t> idx;
      std::vector<double> vals(chunk.count());
      for (std::size_t v = 0; v < chunk.count(); ++v) {
        const auto s = trilinear_sample(desc.region, std::span<const double>(gt), Rt * chunk.center(v));
        if (!s.out_of_bounds) {
          idx.push_back(v);
          vals[v] = s.value;
        }
      }
      subsample(idx, cfg.points_per_step, rng);
      for (std::size_t v : idx) {
        points.push_back(chunk.center(v));
        world.push_back(Rt * points.back());
        target.push_back(vals[v]);
      }
      break;
    }
    case SupervisionMode::analytic: {
      for (int i = 0; i < cfg.points_per_step; ++i) {
        const Vec3 u(uniform01(rng), uniform01(rng), uniform01(rng));
        points.push_back(chunk.origin + extent.cwiseProduct(u));
        world.push_back(Rt * points.back());
        target.push_back(sdf_eval(desc.scene, world.back(), tau));
      }
      break;
    }
  }
  rec.points = static_cast<int>(points.size());
  if (points.empty() || views.empty()) {
    rec.skipped = true;
    rec.step = adam.step;
    return rec;
  }
  if (cfg.record_points) rec.supervision_points = world;

  std::vector<unsigned char> seed(chunk.count());
  for (std::size_t v = 0; v < chunk.count(); ++v) {
    seed[v] = std::abs(sdf_eval(desc.scene, Rt * chunk.center(v), tau)) < 1.0;
  }
  const OccupancyGrid occ = dilate(chunk, seed);
  const std::vector<double> occ_target(occ.flags.begin(), occ.flags.end());

  Tape t(true);
  const ViewInputs vin{views, depths, tau};
  const bool pb = cfg.enable_pb;
  Var coarse;
  Var fine;
  if (m.config().guidance.uses_image_features() || pb) {
    const auto f = extract_features(t, m, t.constant(stack_images(images)), pb);
    coarse = f.coarse;
    fine = f.fine;
  }
  const Var vg = build_guidance_volume(t, m, coarse, vin, chunk);
  const VolumeEncoding enc = encode_volume(t, m, vg);
  const Var pred = predict_tsdf(t, m, enc.features, chunk, points, fine, vin, pb);
  const LossVars loss = compute_loss(t, pred, target, enc.occupancy, occ_target);

  auto params = m.parameters();
  for (auto& p : params) p.zero_grad();
  t.backward(loss.total);
  if (update) {
    adam.lr = cfg.lr;
    nn::adam_step(params, adam);
  }
  rec.loss = loss.total->value[0];
  rec.loss_tsdf = loss.tsdf->value[0];
  rec.loss_occupancy = loss.occupancy->value[0];
  rec.step = adam.step;
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

EpochStats train_epoch(std::span<const SceneData> scenes, ModelParams& m, nn::AdamState& adam,
                       const TrainConfig& cfg, int epoch, std::ostream* log) {
  if (scenes.empty()) throw std::invalid_argument("train_epoch: no scenes");
  std::seed_seq sq{static_cast<std::uint32_t>(cfg.seed), static_cast<std::uint32_t>(cfg.seed >> 32),
                   static_cast<std::uint32_t>(epoch)};
  std::mt19937_64 rng(sq);
  std::vector<std::size_t> order;
  for (std::size_t s = 0; s < scenes.size(); ++s)
    for (int c = 0; c < cfg.chunks_per_scene; ++c) order.push_back(s);
  std::shuffle(order.begin(), order.end(), rng);

  EpochStats st;
  for (std::size_t s : order) {
    StepRecord r = train_step(scenes[s], m, adam, cfg, rng);
    if (r.skipped) {
      ++st.skipped;
    } else {
      ++st.steps;
      st.loss += r.loss;
      st.loss_tsdf += r.loss_tsdf;
      st.loss_occupancy += r.loss_occupancy;
    }
    if (log) {
      *log << nlohmann::json{{"epoch", epoch},        {"step", r.step},
                             {"scene", scenes[s].desc.preset + "#" + std::to_string(scenes[s].desc.seed)},
                             {"skipped", r.skipped},  {"L", r.loss},
                             {"L_S", r.loss_tsdf},    {"L_O", r.loss_occupancy},
                             {"points", r.points},    {"views", r.views},
                             {"wall_ms", r.wall_ms}}
                  .dump()
           << '\n';
    }
    st.records.push_back(std::move(r));
  }
  if (st.steps > 0) {
    st.loss /= st.steps;
    st.loss_tsdf /= st.steps;
    st.loss_occupancy /= st.steps;
  }
  return st;
}

void save_model(const std::filesystem::path& path, const ModelParams& m, const nn::AdamState* adam,
                const nlohmann::json& extra) {
  nlohmann::json meta = extra.is_null() ? nlohmann::json::object() : extra;
  meta["model_config"] = to_json(m.config());
  const auto specs = m.layer_specs();
  const auto params = m.parameters();
  nn::save_checkpoint(path, specs, params, adam, meta);
}

LoadedModel load_model(const std::filesystem::path& path) {
  nn::CheckpointData ck = nn::load_checkpoint(path);
  if (!ck.meta.contains("model_config")) {
    throw std::runtime_error(path.string() + ": checkpoint has no model configuration");
  }
  LoadedModel out{ModelParams(model_config_from_json(ck.meta["model_config"]), 0), {}, ck.meta};
  if (ck.layers != out.model.layer_specs()) {
    throw std::runtime_error(path.string() + ": layer specs do not match the model configuration");
  }
  auto params = out.model.parameters();
  nn::restore_parameters(ck, params);
  if (!ck.adam_m.empty()) {
    out.adam.step = ck.adam_step;
    out.adam.m = std::move(ck.adam_m);
    out.adam.v = std::move(ck.adam_v);
  }
  return out;
}

}  // namespace dgrecon
