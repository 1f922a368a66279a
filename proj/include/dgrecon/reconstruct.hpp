#pragma once

#include "dgrecon/mesh.hpp"
#include "dgrecon/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dgrecon {

struct PhaseTimings {
  int frames = 0;
  double features_ms = 0.0;
  double fusion_ms = 0.0;
  double backprojection_ms = 0.0;
  double volume_ms = 0.0;

  /// Everything done before a TSDF is queried, amortized per frame.
  double per_frame_ms() const {
    return frames ? (features_ms + fusion_ms + backprojection_ms + volume_ms) / frames : 0.0;
  }
};

/// Model outputs for one scene volume: V^Psi, occupancy logits and the fine
/// feature maps used for point back-projection.
struct InferenceContext {
  GridSpec spec;
  double tau = 0.12;
  std::vector<Camera> cameras;
  std::vector<DepthMap> depths;
  std::vector<FeatureMap2D> fine;
  EncodedVolume encoded;
  PhaseTimings timings;
  /// Deterministic per-frame work: voxel projections plus image pixels.
  std::uint64_t per_frame_work = 0;

  ViewInputs views() const { return {cameras, depths, tau}; }
};

InferenceContext prepare_inference(const ModelParams& m, std::span<const Camera> cameras,
                                   std::span<const DepthMap> depths,
                                   std::span<const RenderedInput> images, const GridSpec& spec,
                                   double tau, bool need_fine);

struct ReconstructionRequest {
  double spacing = 0.04;
  bool occupancy_filter = true;
  double occupancy_threshold = 0.5;
  bool enable_pb = true;
};

struct GridReconstruction {
  /// Unevaluated cells hold +1 with weight 0.
  TsdfVolume volume;
  int refinement = 1;
  std::size_t evaluations = 0;
  std::size_t cells = 0;
  /// Model voxels whose predicted occupancy passed the threshold.
  OccupancyGrid occupied;
  double extraction_ms = 0.0;
};

/// Output cells subdivide each model voxel `voxel_size / spacing` times per
/// axis; that ratio must be a positive integer.
GridReconstruction reconstruct_grid(const ModelParams& m, const InferenceContext& ctx,
                                    const ReconstructionRequest& req);

/// Index of the model voxel containing output cell `idx`.
std::size_t parent_voxel(const GridSpec& model, const GridSpec& output, int refinement,
                         std::size_t idx);

}  // namespace dgrecon
