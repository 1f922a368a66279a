#pragma once

#include "dgrecon/mesh.hpp"
#include "dgrecon/scene.hpp"
#include "dgrecon/tsdf.hpp"

#include <json.hpp>

#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

namespace dgrecon {

/// Distances in cm, ratios in percent.
struct Metrics3D {
  double acc = 0.0;
  double comp = 0.0;
  double chamfer = 0.0;
  double prec = 0.0;
  double rec = 0.0;
  double f1 = 0.0;
  double threshold = 0.05;  // meters
  std::size_t pred_samples = 0;
  std::size_t trimmed_samples = 0;
  std::size_t gt_samples = 0;
};

/// l1 in cm; absrel and sqrel as ratios; deltas and completeness in percent.
/// Error metrics are NaN when no frame has overlapping valid pixels.
struct Metrics2D {
  double l1 = std::numeric_limits<double>::quiet_NaN();
  double absrel = std::numeric_limits<double>::quiet_NaN();
  double sqrel = std::numeric_limits<double>::quiet_NaN();
  double delta_105 = std::numeric_limits<double>::quiet_NaN();
  double delta_125 = std::numeric_limits<double>::quiet_NaN();
  double completeness = 0.0;
  int frames_with_overlap = 0;
};

nlohmann::json to_json(const Metrics3D& m);
nlohmann::json to_json(const Metrics2D& m);

/// A voxel is observed when some GT depth frame sees it in-image with
/// z < D + tau. Pixels without depth count as D = infinity.
struct VisibilityVolume {
  GridSpec spec;
  std::vector<unsigned char> flags;

  /// Points outside the grid are unobserved.
  bool observed(const Vec3& p) const;
  std::size_t observed_count() const;
};

VisibilityVolume compute_visibility(std::span<const DepthMap> gt_depths,
                                    std::span<const Camera> cameras, const GridSpec& spec,
                                    double tau);
VisibilityVolume full_visibility(const GridSpec& spec);

/// Area-weighted uniform samples, `density` per square meter.
std::vector<Vec3> sample_surface(const TriangleMesh& mesh, double density, std::uint64_t seed);

struct MetricsOptions {
  double threshold = 0.05;
  double density = 1e4;  // 1 point per cm^2
  std::uint64_t seed = 0;
};

/// Trimming culls predicted samples only (accuracy/precision side).
/// `vis` null means everything is observed.
Metrics3D metrics_3d(const TriangleMesh& pred, const TriangleMesh& gt,
                     const VisibilityVolume* vis, const MetricsOptions& opts = {});

/// Nearest-neighbour distances from each query to `targets`.
std::vector<double> nearest_distances(std::span<const Vec3> queries, std::span<const Vec3> targets);

/// Ray casting with a bounding volume hierarchy and the Moller-Trumbore test.
class MeshRenderer {
 public:
  explicit MeshRenderer(const TriangleMesh& mesh);
  ~MeshRenderer();
  MeshRenderer(MeshRenderer&&) noexcept;
  MeshRenderer& operator=(MeshRenderer&&) noexcept;

  /// z-depth per pixel; misses are 0.
  DepthMap render(const Intrinsics& K, const Pose& pose) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

DepthMap render_depth(const TriangleMesh& mesh, const Intrinsics& K, const Pose& pose);

Metrics2D metrics_2d(std::span<const DepthMap> rendered, std::span<const DepthMap> gt);

/// Percent of overlapping valid pixels with max(d/r, r/d) < t.
double delta_percent(const DepthMap& rendered, const DepthMap& gt, double t);

/// Marching cubes of the exact SDF at `spacing` over the box covered by the
/// voxels of `region`.
TriangleMesh ground_truth_mesh(const SdfScene& scene, const GridSpec& region, double spacing);

}  // namespace dgrecon
