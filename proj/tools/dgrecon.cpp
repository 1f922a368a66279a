// dgrecon command-line driver.
#include "dgrecon/dataset.hpp"
#include "dgrecon/evaluation.hpp"
#include "dgrecon/experiment.hpp"
#include "dgrecon/io_util.hpp"
#include "dgrecon/mesh.hpp"
#include "dgrecon/model.hpp"
#include "dgrecon/reconstruct.hpp"
#include "dgrecon/tsdf.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#ifndef DGRECON_VERSION
#define DGRECON_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace dgrecon;

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

struct Run {
  std::string command;
  std::vector<std::string> argv;
  std::string config;
  int threads = 1;
  Clock::time_point start = Clock::now();
};

json manifest(const Run& run, std::uint64_t seed) {
  return {{"command", run.command},   {"argv", run.argv},
          {"config", run.config},     {"seed", seed},
          {"code_version", DGRECON_VERSION},
          {"threads", run.threads}};
}

void write_manifest(json m, const Run& run, const fs::path& dir, const std::vector<std::string>& artifacts) {
  m["artifacts"] = artifacts;
  m["timings_ms"]["total"] = ms_since(run.start);
  write_text_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

GridSpec resample_region(const GridSpec& region, double voxel) {
  if (voxel <= 0.0) return region;
  GridSpec g = region;
  g.voxel_size = voxel;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = static_cast<int>(std::lround((region.dims[a] - 1) * region.voxel_size / voxel)) + 1;
  }
  return g;
}

// --- scene gen ---

struct SceneGenArgs {
  std::string preset;
  std::uint64_t seed = 0;
  int views = 24;
  double depth_noise = -1;
  std::string out;
};

int cmd_scene_gen(const SceneGenArgs& a, const Run& run) {
  if (a.views < 2) throw std::invalid_argument("--views must be at least 2");
  SceneDescription desc = make_preset(a.preset, a.seed);
  const int low = (a.views + 1) / 2;
  desc.rings[0].views = low;
  desc.rings[1].views = a.views - low;
  if (a.depth_noise >= 0) {
    desc.noise.multiplicative_sigma = a.depth_noise;
    if (a.depth_noise == 0) desc.noise.outlier_rate = 0;
  }
  const fs::path dir(a.out);
  auto t0 = Clock::now();
  const SceneData data = build_scene_data(desc);
  const double render_ms = ms_since(t0);
  std::vector<std::string> files = write_scene_dir(data, dir);

  t0 = Clock::now();
  write_ply(ground_truth_mesh(desc.scene, desc.region, desc.gt_mesh_spacing), dir / "gt_mesh.ply");
  TsdfVolume gt(desc.region, desc.tau);
  for (std::size_t i = 0; i < data.gt_samples.size(); ++i) {
    gt.values[i] = static_cast<float>(data.gt_samples[i].value);
    gt.weights[i] = 1.0f;
  }
  write_volume(gt, dir / "gt_tsdf.vol");
  files.push_back("gt_mesh.ply");
  files.push_back("gt_tsdf.vol");

  json m = manifest(run, a.seed);
  m["scene"] = {{"preset", desc.preset}, {"frames", data.cameras.size()}};
  m["timings_ms"] = {{"render", render_ms}, {"ground_truth", ms_since(t0)}};
  write_manifest(m, run, dir, files);
  std::cout << "wrote " << data.cameras.size() << " frames of '" << scene_key(desc) << "' to "
            << dir.string() << "\n";
  return 0;
}

// --- fuse ---

struct FuseArgs {
  std::string scene;
  std::string out;
  double voxel = 0;
  double tau = 0;
  bool gt_depth = false;
  bool keep_unobserved = false;
};

int cmd_fuse(const FuseArgs& a, const Run& run) {
  const SceneData data = read_scene_dir(a.scene);
  const GridSpec spec = resample_region(data.desc.region, a.voxel);
  const double tau = a.tau > 0 ? a.tau : data.desc.tau;
  auto t0 = Clock::now();
  const TsdfVolume vol =
      fuse_depths(a.gt_depth ? data.gt_depths : data.noisy_depths, data.cameras, spec, tau);
  const double fuse_ms = ms_since(t0);
  t0 = Clock::now();
  MarchingCubesOptions mo;
  mo.skip_unobserved = !a.keep_unobserved;
  const TriangleMesh mesh = marching_cubes(vol, mo);
  const double mc_ms = ms_since(t0);

  const fs::path dir(a.out);
  write_volume(vol, dir / "fused.vol");
  write_ply(mesh, dir / "fused.ply");
  json m = manifest(run, data.desc.seed);
  m["fusion"] = {{"voxel_size", spec.voxel_size},
                 {"dims", spec.dims},
                 {"tau", tau},
                 {"depth", a.gt_depth ? "ground_truth" : "noisy"},
                 {"vertices", mesh.vertices.size()},
                 {"triangles", mesh.triangles.size()}};
  m["timings_ms"] = {{"fusion", fuse_ms},
                     {"per_frame", fuse_ms / static_cast<double>(data.cameras.size())},
                     {"meshing", mc_ms}};
  write_manifest(m, run, dir, {"fused.vol", "fused.ply"});
  std::cout << "fused " << data.cameras.size() << " frames into " << spec.dims[0] << "x"
            << spec.dims[1] << "x" << spec.dims[2] << " voxels, mesh has "
            << mesh.triangles.size() << " triangles\n";
  return 0;
}

// --- train ---

struct TrainArgs {
  std::vector<std::string> scenes;
  std::string out;
  std::string supervision = "rts";
  std::string guidance = "tsdf";
  bool no_dg = false;
  bool no_pb = false;
  bool no_rotation = false;
  bool no_depth_scale = false;
  std::vector<int> chunk;
  TrainConfig cfg;
};

int cmd_train(TrainArgs a, const Run& run) {
  TrainConfig& c = a.cfg;
  c.supervision = parse_supervision(a.supervision);
  c.guidance.variant = parse_guidance(a.guidance);
  c.enable_dg = !a.no_dg && c.guidance.variant != GuidanceVariant::none;
  c.enable_pb = !a.no_pb;
  c.rotation_augmentation = !a.no_rotation;
  c.depth_scale_augmentation = !a.no_depth_scale;
  if (a.chunk.size() != 3) throw std::invalid_argument("--chunk takes three sizes");
  c.chunk_dims = {a.chunk[0], a.chunk[1], a.chunk[2]};
  if (!c.valid()) throw std::invalid_argument("invalid training configuration");

  std::vector<SceneData> scenes;
  for (const auto& s : a.scenes) scenes.push_back(read_scene_dir(s));

  const fs::path dir(a.out);
  fs::create_directories(dir);
  const fs::path log_tmp = dir / "train_log.jsonl.tmp";
  std::ofstream log(log_tmp);
  if (!log) throw std::runtime_error("cannot write " + log_tmp.string());
  const auto t0 = Clock::now();
  ModelParams model(model_config_for(c), c.seed);
  nn::AdamState adam;
  json epochs = json::array();
  for (int e = 0; e < c.epochs; ++e) {
    const EpochStats st = train_epoch(scenes, model, adam, c, e, &log);
    epochs.push_back({{"epoch", e},
                      {"steps", st.steps},
                      {"skipped", st.skipped},
                      {"loss", st.loss},
                      {"loss_tsdf", st.loss_tsdf},
                      {"loss_occupancy", st.loss_occupancy}});
    std::cout << "epoch " << e << ": loss " << st.loss << " (tsdf " << st.loss_tsdf
              << ", occupancy " << st.loss_occupancy << ")\n";
  }
  const double train_ms = ms_since(t0);
  log.close();
  fs::rename(log_tmp, dir / "train_log.jsonl");
  save_model(dir / "model.ckpt", model, &adam,
             {{"train_config", to_json(c)}, {"scenes", a.scenes}});

  json m = manifest(run, c.seed);
  m["train_config"] = to_json(c);
  m["epochs"] = epochs;
  m["timings_ms"] = {{"train", train_ms}};
  write_manifest(m, run, dir, {"model.ckpt", "train_log.jsonl"});
  return 0;
}

// --- reconstruct ---

struct ReconstructArgs {
  std::string model;
  std::string scene;
  std::string out;
  double spacing = 0.04;
  bool no_filter = false;
  double threshold = 0.5;
  bool no_pb = false;
  bool save_volume = false;
};

int cmd_reconstruct(const ReconstructArgs& a, const Run& run) {
  const LoadedModel lm = load_model(a.model);
  const SceneData data = read_scene_dir(a.scene);
  bool trained_pb = true;
  if (lm.meta.contains("train_config")) trained_pb = lm.meta["train_config"].value("enable_pb", true);

  ReconstructionRequest req;
  req.spacing = a.spacing;
  req.occupancy_filter = !a.no_filter;
  req.occupancy_threshold = a.threshold;
  req.enable_pb = trained_pb && !a.no_pb;

  const InferenceContext ctx = prepare_inference(lm.model, data.cameras, data.noisy_depths,
                                                 data.images, data.desc.region, data.desc.tau,
                                                 req.enable_pb);
  const GridReconstruction rec = reconstruct_grid(lm.model, ctx, req);
  auto t0 = Clock::now();
  const TriangleMesh mesh = marching_cubes(rec.volume);
  const double mc_ms = ms_since(t0);

  const fs::path dir(a.out);
  std::vector<std::string> files{"mesh.ply"};
  write_ply(mesh, dir / "mesh.ply");
  if (a.save_volume) {
    write_volume(rec.volume, dir / "tsdf.vol");
    files.push_back("tsdf.vol");
  }
  std::size_t occupied = 0;
  for (auto f : rec.occupied.flags) occupied += f;

  json m = manifest(run, 0);
  m["request"] = {{"spacing", req.spacing},
                  {"occupancy_filter", req.occupancy_filter},
                  {"occupancy_threshold", req.occupancy_threshold},
                  {"enable_pb", req.enable_pb},
                  {"refinement", rec.refinement}};
  m["model"] = a.model;
  m["scene"] = a.scene;
  m["occupancy"] = {{"model_voxels", rec.occupied.flags.size()},
                    {"occupied_voxels", occupied},
                    {"theta_s_evaluations", rec.evaluations},
                    {"output_cells", rec.cells},
                    {"evaluation_reduction",
                     rec.cells ? 1.0 - static_cast<double>(rec.evaluations) / rec.cells : 0.0}};
  m["timings_ms"] = {{"frames", ctx.timings.frames},
                     {"per_frame",
                      {{"total", ctx.timings.per_frame_ms()},
                       {"features", ctx.timings.features_ms / ctx.timings.frames},
                       {"fusion", ctx.timings.fusion_ms / ctx.timings.frames},
                       {"backprojection", ctx.timings.backprojection_ms / ctx.timings.frames},
                       {"volume", ctx.timings.volume_ms / ctx.timings.frames}}},
                     {"one_time", {{"tsdf_extraction", rec.extraction_ms}, {"meshing", mc_ms}}}};
  m["mesh"] = {{"vertices", mesh.vertices.size()}, {"triangles", mesh.triangles.size()}};
  write_manifest(m, run, dir, files);
  std::cout << "evaluated " << rec.evaluations << " of " << rec.cells << " cells; per-frame "
            << std::fixed << std::setprecision(2) << ctx.timings.per_frame_ms()
            << " ms, extraction " << rec.extraction_ms << " ms\n";
  return 0;
}

// --- eval ---

struct EvalArgs {
  std::string mesh;
  std::string scene;
  std::string out;
  bool no_trim = false;
  bool depth_metrics = false;
  MetricsOptions metrics;
};

int cmd_eval(const EvalArgs& a, const Run& run) {
  const TriangleMesh pred = read_ply(a.mesh);
  const SceneData data = read_scene_dir(a.scene);
  const fs::path gt_path = fs::path(a.scene) / "gt_mesh.ply";
  const TriangleMesh gt = fs::exists(gt_path)
                              ? read_ply(gt_path)
                              : ground_truth_mesh(data.desc.scene, data.desc.region,
                                                  data.desc.gt_mesh_spacing);
  const auto t0 = Clock::now();
  VisibilityVolume vis;
  if (!a.no_trim) vis = compute_visibility(data.gt_depths, data.cameras, data.desc.region, data.desc.tau);
  const Metrics3D m3 = metrics_3d(pred, gt, a.no_trim ? nullptr : &vis, a.metrics);
  json record = manifest(run, a.metrics.seed);
  record["mesh"] = a.mesh;
  record["scene"] = scene_key(data.desc);
  record["trimmed"] = !a.no_trim;
  record["metrics_3d"] = to_json(m3);
  if (a.depth_metrics) {
    const MeshRenderer r(pred);
    std::vector<DepthMap> rendered;
    for (const Camera& c : data.cameras) rendered.push_back(r.render(c.K, c.pose));
    record["metrics_2d"] = to_json(metrics_2d(rendered, data.gt_depths));
  }
  record["timings_ms"] = {{"metrics", ms_since(t0)}};
  const std::string text = record.dump(2) + "\n";
  if (a.out.empty()) {
    std::cout << text;
  } else {
    write_text_atomic(a.out, text);
  }
  std::cerr << std::fixed << std::setprecision(3) << "chamfer " << m3.chamfer << " cm, f1 "
            << m3.f1 << "\n";
  return 0;
}

// --- ablate ---

struct AblateArgs {
  std::string out;
  std::string table = "all";
  std::vector<std::string> train_scenes;
  std::vector<std::string> test_scenes;
  std::string cache;
  double spacing = 0.02;
  int epochs = 0;
  int chunks_per_scene = 0;
  std::uint64_t seed = 1;
};

std::string fmt(double v, int prec) {
  if (!std::isfinite(v)) return "n/a";
  std::ostringstream s;
  s << std::fixed << std::setprecision(prec) << v;
  return s.str();
}

int cmd_ablate(const AblateArgs& a, const Run& run) {
  Benchmark bench;
  if (!a.train_scenes.empty()) bench.train_scenes = a.train_scenes;
  if (!a.test_scenes.empty()) bench.test_scenes = a.test_scenes;
  if (a.epochs > 0) bench.train.epochs = a.epochs;
  if (a.chunks_per_scene > 0) bench.train.chunks_per_scene = a.chunks_per_scene;
  bench.train.seed = a.seed;

  std::vector<AblationVariant> variants;
  if (a.table == "component" || a.table == "all") {
    for (auto& v : component_ablation(bench.train)) variants.push_back(v);
  }
  if (a.table == "guidance" || a.table == "all") {
    for (auto& v : guidance_ablation(bench.train)) variants.push_back(v);
  }
  if (variants.empty()) throw std::invalid_argument("--table must be component, guidance or all");

  std::vector<SceneData> train;
  for (const auto& k : bench.train_scenes) train.push_back(build_scene_data(scene_from_key(k)));
  std::vector<EvalScene> test;
  for (const auto& k : bench.test_scenes) test.push_back(prepare_eval_scene(scene_from_key(k)));

  const fs::path dir(a.out);
  const fs::path cache = a.cache.empty() ? dir / "cache" : fs::path(a.cache);
  json rows = json::array();
  std::ostringstream md;
  md << "| row | variant | chamfer (cm) | f1 (%) | L1 (cm) | delta<1.05 (%) | train (s) |\n"
     << "|---|---|---|---|---|---|---|\n";
  for (const auto& v : variants) {
    const CachedModel cm = train_model_cached(train, v.train, cache);
    EvalOptions eo;
    eo.request.spacing = a.spacing;
    eo.request.enable_pb = v.train.enable_pb;
    const SetEval ev = evaluate_set(cm.model, test, eo);
    json row = to_json(ev);
    row["label"] = v.label;
    row["variant"] = v.description;
    row["train_config"] = to_json(v.train);
    row["train_seconds"] = cm.train_seconds;
    rows.push_back(row);
    md << "| " << v.label << " | " << v.description << " | " << fmt(ev.mean.chamfer, 2) << " | "
       << fmt(ev.mean.f1, 1) << " | " << fmt(ev.mean_depth.l1, 2) << " | "
       << fmt(ev.mean_depth.delta_105, 1) << " | " << fmt(cm.train_seconds, 0) << " |\n";
    std::cout << "(" << v.label << ") " << v.description << ": chamfer "
              << fmt(ev.mean.chamfer, 3) << " cm, f1 " << fmt(ev.mean.f1, 2) << "\n";
  }
  write_text_atomic(dir / "ablation.json", json{{"rows", rows},
                                                {"train_scenes", bench.train_scenes},
                                                {"test_scenes", bench.test_scenes},
                                                {"spacing", a.spacing}}
                                                   .dump(2) +
                                               "\n");
  write_text_atomic(dir / "ablation.md", md.str());
  json m = manifest(run, a.seed);
  m["base_train_config"] = to_json(bench.train);
  write_manifest(m, run, dir, {"ablation.json", "ablation.md"});
  std::cout << md.str();
  return 0;
}

// Effective options of the invoked subcommand as config-file text.
std::string active_config(const CLI::App& app) {
  std::string prefix;
  for (const CLI::App* sub = &app; !sub->get_subcommands().empty();) {
    sub = sub->get_subcommands().front();
    prefix += sub->get_name() + ".";
  }
  std::istringstream in(app.config_to_str(true, false));
  std::string out, line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    const std::string key = line.substr(0, eq);
    if (key.rfind(prefix, 0) == 0 || key.find('.') == std::string::npos) out += line + "\n";
  }
  return out;
}

int env_threads() {
  const char* v = std::getenv("DGRECON_THREADS");
  if (!v || !*v) return 0;
  try {
    return std::stoi(v);
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string("DGRECON_THREADS is not an integer: ") + v);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Depth-guided TSDF reconstruction toolkit", "dgrecon"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "INI/TOML config; sections name subcommands, CLI flags override");
  app.set_version_flag("--version", DGRECON_VERSION);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads (default: $DGRECON_THREADS)");

  Run run;
  for (int i = 0; i < argc; ++i) run.argv.emplace_back(argv[i]);

  // scene gen
  auto* scene = app.add_subcommand("scene", "Synthetic scene generation");
  scene->require_subcommand(1);
  SceneGenArgs sg;
  auto* gen = scene->add_subcommand("gen", "Render a preset scene into a scene directory");
  gen->add_option("--preset", sg.preset, "sphere, boxes, thin or room")->required();
  gen->add_option("--seed", sg.seed, "Scene seed");
  gen->add_option("--views", sg.views, "Number of frames over two orbit rings")->check(CLI::Range(2, 100000));
  gen->add_option("--depth-noise", sg.depth_noise, "Multiplicative depth noise sigma; 0 disables noise and outliers");
  gen->add_option("--out", sg.out, "Scene directory")->required();

  FuseArgs fa;
  auto* fuse = app.add_subcommand("fuse", "Fuse a scene's depth maps into a TSDF volume and mesh");
  fuse->add_option("--scene", fa.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  fuse->add_option("--out", fa.out, "Output directory")->required();
  fuse->add_option("--voxel-size", fa.voxel, "Voxel size in meters (default: scene region)");
  fuse->add_option("--tau", fa.tau, "Truncation distance (default: scene)");
  fuse->add_flag("--gt-depth", fa.gt_depth, "Fuse ground-truth depth instead of noisy depth");
  fuse->add_flag("--keep-unobserved", fa.keep_unobserved, "Mesh cells touching unobserved voxels");

  TrainArgs ta;
  ta.cfg = Benchmark().train;
  ta.chunk.assign(ta.cfg.chunk_dims.begin(), ta.cfg.chunk_dims.end());
  auto* train = app.add_subcommand("train", "Train a model on scene directories");
  train->add_option("--scene", ta.scenes, "Scene directories")->required()->check(CLI::ExistingDirectory);
  train->add_option("--out", ta.out, "Run directory")->required();
  train->add_option("--supervision", ta.supervision, "rts, interpolated or analytic");
  train->add_option("--guidance", ta.guidance,
                    "tsdf, density, gaussian_weight, tsdf_plus_gaussian, none or depth_only");
  train->add_flag("--no-dg", ta.no_dg, "Disable depth guidance");
  train->add_flag("--no-pb", ta.no_pb, "Disable point back-projection");
  train->add_flag("--no-rotation", ta.no_rotation, "Disable rotation augmentation");
  train->add_flag("--no-depth-scale", ta.no_depth_scale, "Disable depth scale augmentation");
  train->add_option("--chunk", ta.chunk, "Chunk size in voxels (x y z)")->expected(3);
  train->add_option("--voxel-size", ta.cfg.voxel_size, "Model voxel size");
  train->add_option("--points", ta.cfg.points_per_step, "Supervision points per step");
  train->add_option("--views-per-step", ta.cfg.views_per_step, "Frames per step");
  train->add_option("--epochs", ta.cfg.epochs, "Epochs");
  train->add_option("--chunks-per-scene", ta.cfg.chunks_per_scene, "Steps per scene per epoch");
  train->add_option("--lr", ta.cfg.lr, "Adam learning rate");
  train->add_option("--seed", ta.cfg.seed, "Initialization and sampling seed");

  ReconstructArgs ra;
  auto* recon = app.add_subcommand("reconstruct", "Reconstruct a mesh at a chosen output spacing");
  recon->add_option("--model", ra.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  recon->add_option("--scene", ra.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  recon->add_option("--out", ra.out, "Output directory")->required();
  recon->add_option("--spacing", ra.spacing, "Output spacing in meters");
  recon->add_flag("--no-occupancy-filter", ra.no_filter, "Evaluate every output cell");
  recon->add_option("--occupancy-threshold", ra.threshold, "Occupancy probability threshold");
  recon->add_flag("--no-pb", ra.no_pb, "Disable point back-projection at inference");
  recon->add_flag("--save-volume", ra.save_volume, "Also write the output TSDF volume");

  EvalArgs ea;
  auto* eval = app.add_subcommand("eval", "Score a mesh against a scene's ground truth");
  eval->add_option("--mesh", ea.mesh, "Predicted mesh (PLY)")->required()->check(CLI::ExistingFile);
  eval->add_option("--scene", ea.scene, "Scene directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--out", ea.out, "Metrics file (default: stdout)");
  eval->add_flag("--no-trim", ea.no_trim, "Score all predicted geometry");
  eval->add_flag("--depth-metrics", ea.depth_metrics, "Also render depth and report 2D metrics");
  eval->add_option("--threshold", ea.metrics.threshold, "Precision/recall threshold in meters");
  eval->add_option("--density", ea.metrics.density, "Surface samples per square meter");
  eval->add_option("--seed", ea.metrics.seed, "Sampling seed");

  AblateArgs aa;
  auto* ablate = app.add_subcommand("ablate", "Train and score the ablation variants");
  ablate->add_option("--out", aa.out, "Output directory")->required();
  ablate->add_option("--table", aa.table, "component, guidance or all");
  ablate->add_option("--train-scene", aa.train_scenes, "Training scenes as preset:seed");
  ablate->add_option("--test-scene", aa.test_scenes, "Test scenes as preset:seed");
  ablate->add_option("--cache", aa.cache, "Model cache directory (default: <out>/cache)");
  ablate->add_option("--spacing", aa.spacing, "Output spacing in meters");
  ablate->add_option("--epochs", aa.epochs, "Epochs per variant");
  ablate->add_option("--chunks-per-scene", aa.chunks_per_scene, "Steps per scene per epoch");
  ablate->add_option("--seed", aa.seed, "Training seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    run.threads = threads > 0 ? threads : env_threads();
#ifdef _OPENMP
    if (run.threads > 0) omp_set_num_threads(run.threads);
    run.threads = omp_get_max_threads();
#else
    run.threads = 1;
#endif
    run.config = active_config(app);
    if (gen->parsed()) {
      run.command = "scene gen";
      return cmd_scene_gen(sg, run);
    }
    if (fuse->parsed()) {
      run.command = "fuse";
      return cmd_fuse(fa, run);
    }
    if (train->parsed()) {
      run.command = "train";
      return cmd_train(ta, run);
    }
    if (recon->parsed()) {
      run.command = "reconstruct";
      return cmd_reconstruct(ra, run);
    }
    if (eval->parsed()) {
      run.command = "eval";
      return cmd_eval(ea, run);
    }
    if (ablate->parsed()) {
      run.command = "ablate";
      return cmd_ablate(aa, run);
    }
  } catch (const std::exception& e) {
    std::cerr << "dgrecon: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
