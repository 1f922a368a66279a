#pragma once

#include "dgrecon/geometry.hpp"
#include "dgrecon/scene.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace dgrecon {

struct Camera {
  Intrinsics K;
  Pose pose;
};

/// Normalized TSDF on a voxel grid. Unobserved voxels hold +1 with weight 0.
struct TsdfVolume {
  GridSpec spec;
  double tau = 0.12;
  std::vector<float> values;
  std::vector<float> weights;

  TsdfVolume() = default;
  TsdfVolume(const GridSpec& s, double truncation)
      : spec(s), tau(truncation), values(s.count(), 1.0f), weights(s.count(), 0.0f) {}

  float value(int i, int j, int k) const { return values[spec.index(i, j, k)]; }
  float weight(int i, int j, int k) const { return weights[spec.index(i, j, k)]; }
  bool observed(std::size_t idx) const { return weights[idx] > 0.0f; }
};

struct OccupancyGrid {
  GridSpec spec;
  std::vector<unsigned char> flags;

  std::size_t occupied_count() const;
};

struct FusionOptions {
  /// Depths beyond this range are ignored.
  double max_depth = 10.0;
  double z_min = kDefaultMinDepth;
};

/// Unit-weight projective TSDF fusion. A view contributes to voxel v iff v
/// projects inside the image, the nearest depth pixel is valid, and
/// D - z(v) > -tau.
TsdfVolume fuse_depths(std::span<const DepthMap> depths, std::span<const Camera> cameras,
                       const GridSpec& spec, double tau, const FusionOptions& opts = {});

struct PointTsdf {
  double value = 1.0;
  int observations = 0;
  bool observed() const { return observations > 0; }
};

/// Single-point brute-force fusion with its own projection path
/// (homogeneous 3x4 camera matrices).
PointTsdf tsdf_point_oracle(const Vec3& p, std::span<const DepthMap> depths,
                            std::span<const Camera> cameras, double tau,
                            const FusionOptions& opts = {});

/// Near-surface occupancy: |S| < 1, dilated by a full 3x3x3 element.
OccupancyGrid occupancy_ground_truth(const TsdfVolume& S);
OccupancyGrid occupancy_from_values(const GridSpec& spec, std::span<const double> values);
OccupancyGrid dilate(const GridSpec& spec, const std::vector<unsigned char>& seed);

/// Binary layout (little-endian): int32 dims[3], float64 voxel_size,
/// float64 origin[3], float64 tau, float32 values[n], float32 weights[n].
void write_volume(const TsdfVolume& vol, const std::filesystem::path& path);
TsdfVolume read_volume(const std::filesystem::path& path);

}  // namespace dgrecon
