#pragma once

#include "dgrecon/dataset.hpp"
#include "dgrecon/evaluation.hpp"
#include "dgrecon/model.hpp"
#include "dgrecon/reconstruct.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace dgrecon {

/// A scene with the references needed to score reconstructions of it.
struct EvalScene {
  std::string name;
  SceneData data;
  TriangleMesh gt_mesh;
  VisibilityVolume visibility;
};

EvalScene prepare_eval_scene(const SceneDescription& desc);

/// "preset:seed", e.g. "boxes:101".
SceneDescription scene_from_key(const std::string& key);
std::string scene_key(const SceneDescription& desc);

struct EvalOptions {
  ReconstructionRequest request;
  bool trim = true;
  bool depth_metrics = true;
  MetricsOptions metrics;
};

struct SceneEval {
  std::string name;
  /// False when the reconstruction produced no surface.
  bool has_surface = false;
  Metrics3D metrics;
  Metrics2D depth;
  PhaseTimings timings;
  double extraction_ms = 0.0;
  double meshing_ms = 0.0;
  std::size_t evaluations = 0;
  std::size_t cells = 0;
  std::uint64_t per_frame_work = 0;
};

nlohmann::json to_json(const SceneEval& e);

/// Reconstructs `scene` from its noisy depths and images and scores it.
SceneEval evaluate_scene(const ModelParams& m, const EvalScene& scene, const EvalOptions& opts,
                         TriangleMesh* mesh_out = nullptr);

/// Per-scene results plus their mean. A scene without surface makes the mean
/// distances infinite and its f1 counts as 0.
struct SetEval {
  std::vector<SceneEval> scenes;
  Metrics3D mean;
  Metrics2D mean_depth;
};

SetEval evaluate_set(const ModelParams& m, std::span<const EvalScene> scenes,
                     const EvalOptions& opts);

nlohmann::json to_json(const SetEval& e);

/// Fresh model trained for cfg.epochs epochs, initialized from cfg.seed.
ModelParams train_model(std::span<const SceneData> scenes, const TrainConfig& cfg,
                        std::ostream* log = nullptr);

/// Same as train_model, but reuses a checkpoint in `cache_dir` keyed by the
/// training config and the scene descriptions.
struct CachedModel {
  ModelParams model;
  bool from_cache = false;
  double train_seconds = 0.0;
};

CachedModel train_model_cached(std::span<const SceneData> scenes, const TrainConfig& cfg,
                               const std::filesystem::path& cache_dir);

/// FNV-1a of a string, hex encoded.
std::string content_hash(std::string_view s);

struct AblationVariant {
  std::string label;
  std::string description;
  TrainConfig train;
};

/// Rows (i)-(v): {RTS} then {PB} then {DG} switched on from a baseline.
std::vector<AblationVariant> component_ablation(const TrainConfig& base);
/// Rows (a)-(f): the six guidance strategies with RTS and PB on.
std::vector<AblationVariant> guidance_ablation(const TrainConfig& base);

/// Built-in desk-scale benchmark.
struct Benchmark {
  std::vector<std::string> train_scenes{"boxes:1", "boxes:2", "boxes:3", "thin:11"};
  std::vector<std::string> test_scenes{"boxes:101", "boxes:102", "thin:201"};
  TrainConfig train;

  Benchmark();
};

}  // namespace dgrecon
