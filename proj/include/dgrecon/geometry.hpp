#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace dgrecon {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Pinhole intrinsics in pixel units. Pixel (i, j) has its center at (i, j).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 1;
  int height = 1;

  bool valid() const;
  Mat3 matrix() const;
};

/// Rigid world-from-camera transform: p_world = rotation * p_cam + translation.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  /// Number of compositions this pose is the product of.
  int chain = 0;

  static Pose identity() { return {}; }
  static Pose from_matrix(const Mat4& m);

  Mat4 matrix() const;
  Pose inverse() const;
  /// this * other. Products of more than one composition are
  /// re-orthonormalized.
  Pose compose(const Pose& other) const;
  bool valid(double tol = 1e-9) const;
};

/// Nearest rotation in the Frobenius sense (polar decomposition via SVD).
Mat3 orthonormalize(const Mat3& m);

enum class TransformDirection { forward, inverse };

Vec3 transform_point(const Vec3& p, const Pose& pose,
                     TransformDirection direction = TransformDirection::forward);

struct Projection {
  double u = 0.0;
  double v = 0.0;
  double z = 0.0;
  bool valid = false;
};

inline constexpr double kDefaultMinDepth = 0.05;

/// Projects a world point into the image. `z` is camera-frame depth.
Projection project_point(const Vec3& p, const Intrinsics& K, const Pose& pose,
                         double z_min = kDefaultMinDepth);

/// Distance in pixels from (u, v) to the nearest edge of the image rectangle
/// [-0.5, width - 0.5] x [-0.5, height - 0.5].
double border_distance(double u, double v, const Intrinsics& K);

/// Axis-aligned voxel grid. `origin` is the world position of voxel (0,0,0)'s
/// center; storage is row-major with z fastest.
struct GridSpec {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.04;
  std::array<int, 3> dims{1, 1, 1};

  bool valid() const;
  std::size_t count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  std::size_t index(int i, int j, int k) const {
    return (static_cast<std::size_t>(i) * dims[1] + j) * dims[2] + k;
  }
  std::array<int, 3> unravel(std::size_t idx) const;
  Vec3 center(int i, int j, int k) const {
    return origin + voxel_size * Vec3(i, j, k);
  }
  Vec3 center(std::size_t idx) const;
  /// Continuous grid coordinate of a world point (voxel centers at integers).
  Vec3 to_grid(const Vec3& p) const { return (p - origin) / voxel_size; }
  Vec3 max_corner() const {
    return center(dims[0] - 1, dims[1] - 1, dims[2] - 1);
  }
  /// True when p is inside the box spanned by the voxel centers.
  bool contains(const Vec3& p, double eps = 1e-12) const;

  bool operator==(const GridSpec& o) const {
    return origin == o.origin && voxel_size == o.voxel_size && dims == o.dims;
  }
};

/// The eight taps of a trilinear lookup. Out-of-range queries are clamped to
/// the border and flagged.
struct TrilinearStencil {
  std::array<std::size_t, 8> index{};
  std::array<double, 8> weight{};
  bool out_of_bounds = false;
};

TrilinearStencil trilinear_stencil(const GridSpec& spec, const Vec3& p);

struct ScalarSample {
  double value = 0.0;
  bool out_of_bounds = false;
};

/// Trilinear sampling of a scalar grid (values indexed by GridSpec::index).
ScalarSample trilinear_sample(const GridSpec& spec, std::span<const double> values,
                              const Vec3& p);
ScalarSample trilinear_sample(const GridSpec& spec, std::span<const float> values,
                              const Vec3& p);

/// Trilinear sampling of a channel-major multi-channel grid
/// (values[c * spec.count() + voxel]). Writes `channels` values to `out`.
bool trilinear_sample(const GridSpec& spec, std::span<const double> values,
                      int channels, const Vec3& p, std::span<double> out);

/// Rotation about a world axis by an angle in radians.
Mat3 axis_rotation(const Vec3& axis, double angle);

/// Camera pose at `eye` looking at `target`, with `up` roughly opposing the
/// camera's +y (image down) axis.
Pose look_at(const Vec3& eye, const Vec3& target, const Vec3& up = Vec3::UnitZ());

}  // namespace dgrecon
