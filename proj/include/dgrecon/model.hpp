#pragma once

#include "dgrecon/backprojection.hpp"
#include "dgrecon/dataset.hpp"
#include "dgrecon/nn/adam.hpp"
#include "dgrecon/nn/layers.hpp"
#include "dgrecon/tsdf.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace dgrecon {

struct ModelConfig {
  int image_channels = RenderedInput::kChannels;
  int coarse_channels = 16;
  int fine_channels = 16;
  int psi_channels = 32;
  int theta_s_hidden = 64;
  int theta_o_hidden = 32;
  GuidanceStrategy guidance;
  /// Appends the fused depth TSDF at q to W(q).
  bool pb_depth_channel = false;

  int volume_input_channels() const { return guidance.output_channels(coarse_channels); }
  int point_channels() const { return fine_channels + (pb_depth_channel ? 1 : 0); }
  int theta_s_inputs() const { return point_channels() + psi_channels; }
  bool valid() const;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Trainable networks. omega_c and omega_f share an architecture but not
/// storage; omega_f only runs up to its stride-2 output.
class ModelParams {
 public:
  ModelParams(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  std::vector<nn::Layer> omega_c;
  std::vector<nn::Layer> omega_f;
  /// enc1, enc2, enc3, dec2, dec1, out
  std::vector<nn::Layer> psi;
  std::vector<nn::Layer> theta_s;
  std::vector<nn::Layer> theta_o;

  std::vector<nn::LayerSpec> layer_specs() const;
  std::vector<nn::Parameter> parameters() const;
  std::size_t parameter_count() const;

 private:
  ModelConfig cfg_;
};

/// Stacks views into an (N, C, H, W) tensor.
nn::Tensor stack_images(std::span<const RenderedInput> images);

struct ImageFeatures {
  nn::Var coarse;  // (N, C_c, H/4, W/4)
  nn::Var fine;    // (N, C_f, H/2, W/2); null unless requested
};

ImageFeatures extract_features(nn::Tape& t, const ModelParams& m, const nn::Var& images,
                               bool need_fine);

struct FeatureMaps {
  std::vector<FeatureMap2D> coarse;
  std::vector<FeatureMap2D> fine;
};

/// Image sizes must be divisible by 4.
FeatureMaps extract_features(const ModelParams& m, std::span<const RenderedInput> images);

/// Unstacks an (N, C, H, W) tensor into per-view maps.
std::vector<FeatureMap2D> to_feature_maps(const nn::Tensor& t, int stride);

/// Per-view inputs seen by the model for one volume.
struct ViewInputs {
  std::span<const Camera> cameras;
  std::span<const DepthMap> depths;  // estimated depths
  double tau = 0.12;
};

/// V^g on `spec` as (C_in, D, H, W): back-projected coarse features plus
/// the guidance channel of the configured strategy.
nn::Var build_guidance_volume(nn::Tape& t, const ModelParams& m, const nn::Var& coarse,
                              const ViewInputs& views, const GridSpec& spec,
                              const TsdfVolume* fused = nullptr);

struct VolumeEncoding {
  nn::Var features;   // (C_psi, D, H, W)
  nn::Var occupancy;  // (1, D, H, W) logits
};

/// Pads to a multiple of 4 at the high end, runs Psi, crops back.
VolumeEncoding encode_volume(nn::Tape& t, const ModelParams& m, const nn::Var& vg);

struct EncodedVolume {
  FeatureVolume features;
  std::vector<double> occupancy_logits;
};

EncodedVolume encode_volume(const ModelParams& m, const FeatureVolume& vg);

/// Trilinear lookup of a (C, count) grid as a gather plan.
GatherPlan trilinear_plan(std::span<const Vec3> points, const GridSpec& spec);

/// S-hat at `points` on the tape. `fine` may be null when PB is off.
nn::Var predict_tsdf(nn::Tape& t, const ModelParams& m, const nn::Var& vpsi,
                     const GridSpec& spec, std::span<const Vec3> points, const nn::Var& fine,
                     const ViewInputs& views, bool enable_pb);

/// Tape-free, per-point deterministic evaluation of S-hat: a point's value
/// does not depend on which other points are in the batch.
class TsdfPredictor {
 public:
  TsdfPredictor(const ModelParams& m, const FeatureVolume& vpsi,
                std::span<const FeatureMap2D> fine, const ViewInputs& views, bool enable_pb);

  void predict(std::span<const Vec3> points, std::span<double> out) const;
  std::vector<double> predict(std::span<const Vec3> points) const;

 private:
  const ModelParams& m_;
  const FeatureVolume& vpsi_;
  std::span<const FeatureMap2D> fine_;
  ViewInputs views_;
  bool enable_pb_;
};

std::vector<double> predict_tsdf(std::span<const Vec3> points, const FeatureVolume& vpsi,
                                 std::span<const FeatureMap2D> fine, const ViewInputs& views,
                                 const ModelParams& m, bool enable_pb);

/// Runs an MLP stack (linear/relu layers) on one input vector.
void mlp_forward(std::span<const nn::Layer> layers, std::span<const double> in,
                 std::span<double> out);

struct LossTerms {
  double total = 0.0;
  double tsdf = 0.0;
  double occupancy = 0.0;
};

struct LossVars {
  nn::Var total;
  nn::Var tsdf;
  nn::Var occupancy;
};

LossVars compute_loss(nn::Tape& t, const nn::Var& pred, std::span<const double> target,
                      const nn::Var& logits, std::span<const double> occupancy);
LossTerms compute_loss(std::span<const double> pred, std::span<const double> target,
                       std::span<const double> logits, std::span<const double> occupancy);

enum class SupervisionMode { rts, interpolated, analytic };

std::string_view to_string(SupervisionMode m);
SupervisionMode parse_supervision(std::string_view s);

struct TrainConfig {
  SupervisionMode supervision = SupervisionMode::rts;
  bool enable_dg = true;
  bool enable_pb = true;
  /// Guidance used when enable_dg is set; otherwise none.
  GuidanceStrategy guidance;
  std::array<int, 3> chunk_dims{64, 64, 32};
  double voxel_size = 0.04;
  int points_per_step = 4096;
  int views_per_step = 6;
  bool rotation_augmentation = true;
  double yaw_range_deg = 180.0;
  double pitch_range_deg = 3.0;
  bool depth_scale_augmentation = true;
  double depth_scale_min = 0.9;
  double depth_scale_max = 1.1;
  int epochs = 1;
  int chunks_per_scene = 8;
  double lr = 1e-3;
  std::uint64_t seed = 0;
  /// Keep world-frame supervision points in step records.
  bool record_points = false;

  bool valid() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// `base` with the guidance implied by enable_dg / guidance.
ModelConfig model_config_for(const TrainConfig& c, ModelConfig base = {});
TrainConfig train_config_from_json(const nlohmann::json& j);

struct StepRecord {
  long step = 0;
  bool skipped = false;
  double loss = 0.0;
  double loss_tsdf = 0.0;
  double loss_occupancy = 0.0;
  int points = 0;
  int views = 0;
  double wall_ms = 0.0;
  std::vector<Vec3> supervision_points;  // world frame, when recorded
};

/// One optimization step on a chunk of `scene`; consumes randomness only
/// from `rng`. With `update` false the parameters are left untouched.
StepRecord train_step(const SceneData& scene, ModelParams& m, nn::AdamState& adam,
                      const TrainConfig& cfg, std::mt19937_64& rng, bool update = true);

struct EpochStats {
  int steps = 0;
  int skipped = 0;
  double loss = 0.0;
  double loss_tsdf = 0.0;
  double loss_occupancy = 0.0;
  std::vector<StepRecord> records;
};

/// chunks_per_scene steps per scene in a seeded shuffled order. Each step
/// is appended to `log` as one JSON line when given.
EpochStats train_epoch(std::span<const SceneData> scenes, ModelParams& m, nn::AdamState& adam,
                       const TrainConfig& cfg, int epoch, std::ostream* log = nullptr);

void save_model(const std::filesystem::path& path, const ModelParams& m,
                const nn::AdamState* adam, const nlohmann::json& extra = {});

struct LoadedModel {
  ModelParams model;
  nn::AdamState adam;
  nlohmann::json meta;
};

LoadedModel load_model(const std::filesystem::path& path);

}  // namespace dgrecon
