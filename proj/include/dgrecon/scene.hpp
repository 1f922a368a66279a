#pragma once

#include "dgrecon/geometry.hpp"

#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

namespace dgrecon {

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 1.0;
};

/// Box rotated by `yaw` radians about the world z (gravity) axis.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half_extents = Vec3::Ones();
  double yaw = 0.0;
};

/// Half-space bounded by n.p = offset; free space on the +normal side.
struct Plane {
  Vec3 normal = Vec3::UnitZ();
  double offset = 0.0;
};

using Primitive = std::variant<Sphere, Box, Plane>;

double primitive_sdf(const Primitive& prim, const Vec3& p);

/// Min-union of primitives. Exact for a single primitive and outside overlap
/// regions; a lower bound on the true distance elsewhere.
struct SdfScene {
  std::vector<Primitive> primitives;

  bool valid() const;
  /// Mean center of the bounded (non-plane) primitives.
  Vec3 centroid() const;
  /// Radius around centroid() enclosing every bounded primitive.
  double bounding_radius() const;
};

double sdf_eval(const SdfScene& scene, const Vec3& p);
/// Normalized TSDF clamp(sdf / tau, -1, 1).
double sdf_eval(const SdfScene& scene, const Vec3& p, double tau);

/// Index of the primitive with the smallest signed distance at p.
std::size_t nearest_primitive(const SdfScene& scene, const Vec3& p);

/// z-depth map; invalid pixels hold 0.
struct DepthMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  DepthMap() = default;
  DepthMap(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0f) {}

  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  bool valid(int x, int y) const { return at(x, y) > 0.0f; }
  std::size_t valid_count() const;
  /// Nearest-pixel lookup at continuous pixel coordinates; 0 when outside.
  float lookup(double u, double v) const;
};

struct RaycastOptions {
  double max_distance = 10.0;
  double hit_epsilon = 1e-5;
  double step_factor = 0.99;
  int max_steps = 256;
};

/// Sphere-traces one ray per pixel center. Misses are stored as 0.
DepthMap raycast_depth(const SdfScene& scene, const Intrinsics& K, const Pose& pose,
                       const RaycastOptions& opts = {});

/// Evenly spaced cameras on a horizontal circle of `radius` around the scene
/// centroid, `height` meters above it, all looking at the centroid.
std::vector<Pose> orbit_trajectory(const SdfScene& scene, int n_views, double radius,
                                   double height);

struct NoiseConfig {
  double multiplicative_sigma = 0.02;
  double outlier_rate = 0.01;
  std::pair<double, double> outlier_scale_range{0.7, 1.3};
  std::uint64_t seed = 0;

  bool valid() const;
};

DepthMap perturb_depth(const DepthMap& depth, const NoiseConfig& cfg);

struct GtSample {
  Vec3 position = Vec3::Zero();
  double value = 0.0;
};

/// Exact normalized TSDF at every node of `region`, in GridSpec index order.
std::vector<GtSample> sample_ground_truth(const SdfScene& scene, const GridSpec& region,
                                          double tau);

/// Three-channel synthetic stand-in for an RGB frame, channel-major (C,H,W):
/// headlight shading from surface normals, object silhouette mask (plane hits
/// excluded), and seeded pixel noise.
struct RenderedInput {
  static constexpr int kChannels = 3;
  int width = 0;
  int height = 0;
  std::vector<float> data;

  float at(int c, int x, int y) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

RenderedInput render_input(const SdfScene& scene, const Intrinsics& K, const Pose& pose,
                           std::uint64_t noise_seed, double noise_sigma = 0.05);

/// Surface normal from central differences of the scene SDF.
Vec3 sdf_normal(const SdfScene& scene, const Vec3& p, double h = 1e-4);

}  // namespace dgrecon
