#pragma once

#include "dgrecon/geometry.hpp"
#include "dgrecon/scene.hpp"
#include "dgrecon/tsdf.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace dgrecon {

struct OrbitRing {
  int views = 12;
  double radius = 1.6;
  double height = 0.6;
};

/// Everything needed to regenerate a synthetic scene deterministically.
struct SceneDescription {
  std::string preset = "custom";
  std::uint64_t seed = 0;
  SdfScene scene;
  /// Evaluation/ground-truth region; its voxel_size is the GT spacing.
  GridSpec region;
  double tau = 0.12;
  Intrinsics intrinsics{100.0, 100.0, 63.5, 47.5, 128, 96};
  std::vector<OrbitRing> rings{{12, 1.6, 0.5}, {12, 1.6, 1.0}};
  NoiseConfig noise;
  double image_noise_sigma = 0.05;
  /// Spacing of the analytic ground-truth mesh.
  double gt_mesh_spacing = 0.02;
};

/// Known presets: sphere, boxes, thin, room.
SceneDescription make_preset(const std::string& name, std::uint64_t seed);

std::vector<Camera> scene_cameras(const SceneDescription& desc);

/// Rendered frames, depths and GT samples for one scene.
struct SceneData {
  SceneDescription desc;
  std::vector<Camera> cameras;
  std::vector<DepthMap> gt_depths;
  std::vector<DepthMap> noisy_depths;
  std::vector<RenderedInput> images;
  std::vector<GtSample> gt_samples;  // region nodes, GridSpec index order
};

SceneData build_scene_data(const SceneDescription& desc);

/// Plain-text description: INI-style sections of typed key = value pairs.
std::string format_scene_description(const SceneDescription& desc);
SceneDescription parse_scene_description(const std::string& text);

void write_scene_description(const SceneDescription& desc, const std::filesystem::path& path);
SceneDescription read_scene_description(const std::filesystem::path& path);

/// Cameras file: header with image size, then per frame a row-major 3x3
/// intrinsics matrix and a row-major 4x4 world-from-camera pose.
std::string format_cameras(std::span<const Camera> cameras);
std::vector<Camera> parse_cameras(const std::string& text);

/// Raw little-endian float32, row-major, meters; 0 marks invalid pixels.
void write_depth(const DepthMap& d, const std::filesystem::path& path);
DepthMap read_depth(const std::filesystem::path& path, int width, int height);

/// Raw little-endian float32, channel-major (C, H, W).
void write_image(const RenderedInput& img, const std::filesystem::path& path);
RenderedInput read_image(const std::filesystem::path& path, int width, int height);

/// "%06d.f32"
std::string frame_file(int index);

/// Scene directory: scene.ini, cameras.txt and per frame depth/, gt_depth/
/// and images/ files named by frame_file. Returns the written paths,
/// relative to `dir`.
std::vector<std::string> write_scene_dir(const SceneData& data, const std::filesystem::path& dir);
/// GT samples are recomputed from the description.
SceneData read_scene_dir(const std::filesystem::path& dir);

}  // namespace dgrecon
