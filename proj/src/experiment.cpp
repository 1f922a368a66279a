#include "dgrecon/experiment.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace dgrecon {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Bump when training or checkpoint semantics change.
constexpr const char* kCacheVersion = "dgrecon-train-v1";

}  // namespace

SceneDescription scene_from_key(const std::string& key) {
  const auto colon = key.find(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == key.size()) {
    throw std::invalid_argument("scene key '" + key + "' is not of the form preset:seed");
  }
  std::uint64_t seed = 0;
  try {
    std::size_t used = 0;
    seed = std::stoull(key.substr(colon + 1), &used);
    if (used != key.size() - colon - 1) throw std::invalid_argument("trailing characters");
  } catch (const std::exception&) {
    throw std::invalid_argument("scene key '" + key + "' has a non-numeric seed");
  }
  return make_preset(key.substr(0, colon), seed);
}

std::string scene_key(const SceneDescription& desc) {
  return desc.preset + ":" + std::to_string(desc.seed);
}

EvalScene prepare_eval_scene(const SceneDescription& desc) {
  EvalScene s;
  s.name = scene_key(desc);
  s.data = build_scene_data(desc);
  s.gt_mesh = ground_truth_mesh(desc.scene, desc.region, desc.gt_mesh_spacing);
  s.visibility = compute_visibility(s.data.gt_depths, s.data.cameras, desc.region, desc.tau);
  return s;
}

SceneEval evaluate_scene(const ModelParams& m, const EvalScene& scene, const EvalOptions& opts,
                         TriangleMesh* mesh_out) {
  const SceneData& d = scene.data;
  SceneEval out;
  out.name = scene.name;
  const InferenceContext ctx = prepare_inference(m, d.cameras, d.noisy_depths, d.images,
                                                 d.desc.region, d.desc.tau,
                                                 opts.request.enable_pb);
  const GridReconstruction rec = reconstruct_grid(m, ctx, opts.request);
  out.timings = ctx.timings;
  out.per_frame_work = ctx.per_frame_work;
  out.extraction_ms = rec.extraction_ms;
  out.evaluations = rec.evaluations;
  out.cells = rec.cells;

  const auto t0 = Clock::now();
  TriangleMesh mesh = marching_cubes(rec.volume);
  out.meshing_ms = ms_since(t0);

  out.has_surface = !mesh.empty();
  if (out.has_surface) {
    out.metrics = metrics_3d(mesh, scene.gt_mesh, opts.trim ? &scene.visibility : nullptr,
                             opts.metrics);
  } else {
    out.metrics.acc = out.metrics.comp = out.metrics.chamfer = kInf;
    out.metrics.threshold = opts.metrics.threshold;
  }
  if (opts.depth_metrics) {
    const MeshRenderer renderer(mesh);
    std::vector<DepthMap> rendered;
    rendered.reserve(d.cameras.size());
    for (const Camera& c : d.cameras) rendered.push_back(renderer.render(c.K, c.pose));
    out.depth = metrics_2d(rendered, d.gt_depths);
  }
  if (mesh_out) *mesh_out = std::move(mesh);
  return out;
}

SetEval evaluate_set(const ModelParams& m, std::span<const EvalScene> scenes,
                     const EvalOptions& opts) {
  if (scenes.empty()) throw std::invalid_argument("evaluate_set: no scenes");
  SetEval out;
  for (const EvalScene& s : scenes) out.scenes.push_back(evaluate_scene(m, s, opts));

  const double n = static_cast<double>(scenes.size());
  Metrics3D& a = out.mean;
  a.threshold = opts.metrics.threshold;
  for (const SceneEval& e : out.scenes) {
    a.acc += e.metrics.acc / n;
    a.comp += e.metrics.comp / n;
    a.chamfer += e.metrics.chamfer / n;
    a.prec += e.metrics.prec / n;
    a.rec += e.metrics.rec / n;
    a.f1 += e.metrics.f1 / n;
    a.pred_samples += e.metrics.pred_samples;
    a.trimmed_samples += e.metrics.trimmed_samples;
    a.gt_samples += e.metrics.gt_samples;
  }

  Metrics2D& b = out.mean_depth;
  if (opts.depth_metrics) {
    int used = 0;
    double l1 = 0, absrel = 0, sqrel = 0, d105 = 0, d125 = 0, comp = 0;
    for (const SceneEval& e : out.scenes) {
      comp += e.depth.completeness / n;
      b.frames_with_overlap += e.depth.frames_with_overlap;
      if (std::isnan(e.depth.l1)) continue;
      ++used;
      l1 += e.depth.l1;
      absrel += e.depth.absrel;
      sqrel += e.depth.sqrel;
      d105 += e.depth.delta_105;
      d125 += e.depth.delta_125;
    }
    b.completeness = comp;
    if (used > 0) {
      b.l1 = l1 / used;
      b.absrel = absrel / used;
      b.sqrel = sqrel / used;
      b.delta_105 = d105 / used;
      b.delta_125 = d125 / used;
    }
  }
  return out;
}

nlohmann::json to_json(const SceneEval& e) {
  nlohmann::json j{{"scene", e.name},
                   {"has_surface", e.has_surface},
                   {"metrics_3d", to_json(e.metrics)},
                   {"theta_s_evaluations", e.evaluations},
                   {"output_cells", e.cells},
                   {"timing_ms",
                    {{"frames", e.timings.frames},
                     {"per_frame", e.timings.per_frame_ms()},
                     {"features", e.timings.features_ms},
                     {"fusion", e.timings.fusion_ms},
                     {"backprojection", e.timings.backprojection_ms},
                     {"volume", e.timings.volume_ms},
                     {"tsdf_extraction", e.extraction_ms},
                     {"meshing", e.meshing_ms}}},
                   {"per_frame_work", e.per_frame_work}};
  if (!std::isnan(e.depth.l1) || e.depth.completeness > 0) j["metrics_2d"] = to_json(e.depth);
  return j;
}

nlohmann::json to_json(const SetEval& e) {
  nlohmann::json scenes = nlohmann::json::array();
  for (const SceneEval& s : e.scenes) scenes.push_back(to_json(s));
  return {{"scenes", scenes}, {"mean_3d", to_json(e.mean)}, {"mean_2d", to_json(e.mean_depth)}};
}

ModelParams train_model(std::span<const SceneData> scenes, const TrainConfig& cfg,
                        std::ostream* log) {
  if (!cfg.valid()) throw std::invalid_argument("train_model: invalid training config");
  ModelParams m(model_config_for(cfg), cfg.seed);
  nn::AdamState adam;
  for (int e = 0; e < cfg.epochs; ++e) train_epoch(scenes, m, adam, cfg, e, log);
  return m;
}

std::string content_hash(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

CachedModel train_model_cached(std::span<const SceneData> scenes, const TrainConfig& cfg,
                               const std::filesystem::path& cache_dir) {
  std::string key = std::string(kCacheVersion) + "\n" + to_json(cfg).dump() + "\n";
  for (const SceneData& s : scenes) key += format_scene_description(s.desc);
  const auto path = cache_dir / ("model-" + content_hash(key) + ".ckpt");
  if (std::filesystem::exists(path)) {
    LoadedModel lm = load_model(path);
    return {std::move(lm.model), true, lm.meta.value("train_seconds", 0.0)};
  }
  const auto t0 = Clock::now();
  ModelParams m = train_model(scenes, cfg);
  const double secs = ms_since(t0) / 1000.0;
  save_model(path, m, nullptr, {{"train_seconds", secs}, {"train_config", to_json(cfg)}});
  return {std::move(m), false, secs};
}

std::vector<AblationVariant> component_ablation(const TrainConfig& base) {
  auto make = [&](std::string label, std::string text, bool dg, bool pb, bool rts) {
    TrainConfig c = base;
    c.enable_dg = dg;
    c.enable_pb = pb;
    c.guidance.variant = GuidanceVariant::tsdf;
    c.supervision = rts ? SupervisionMode::rts : SupervisionMode::interpolated;
    return AblationVariant{std::move(label), std::move(text), c};
  };
  return {make("i", "baseline", false, false, false),
          make("ii", "RTS", false, false, true),
          make("iii", "RTS + PB", false, true, true),
          make("iv", "RTS + DG", true, false, true),
          make("v", "RTS + DG + PB", true, true, true)};
}

std::vector<AblationVariant> guidance_ablation(const TrainConfig& base) {
  auto make = [&](std::string label, std::string text, GuidanceVariant g) {
    TrainConfig c = base;
    c.enable_dg = g != GuidanceVariant::none;
    c.enable_pb = true;
    c.supervision = SupervisionMode::rts;
    c.guidance.variant = g;
    return AblationVariant{std::move(label), std::move(text), c};
  };
  return {make("a", "TSDF", GuidanceVariant::tsdf),
          make("b", "density volume", GuidanceVariant::density),
          make("c", "gaussian weight", GuidanceVariant::gaussian_weight),
          make("d", "TSDF + gaussian weight", GuidanceVariant::tsdf_plus_gaussian),
          make("e", "no depth guidance", GuidanceVariant::none),
          make("f", "TSDF, no image features", GuidanceVariant::depth_only)};
}

Benchmark::Benchmark() {
  train.chunk_dims = {16, 16, 16};
  train.points_per_step = 1024;
  train.views_per_step = 4;
  train.chunks_per_scene = 25;
  train.epochs = 6;
  train.seed = 1;
}

}  // namespace dgrecon
