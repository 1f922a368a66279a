#pragma once

#include "dgrecon/geometry.hpp"
#include "dgrecon/tsdf.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace dgrecon {

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  /// Empty or one per vertex.
  std::vector<Vec3> normals;

  bool empty() const { return triangles.empty(); }
  bool valid() const;
  double area() const;
};

struct MarchingCubesOptions {
  double iso = 0.0;
  /// Skip cells with any weight-0 (unobserved) corner.
  bool skip_unobserved = false;
  double weld_tolerance = 1e-7;
};

/// 256-case marching cubes with linear edge interpolation. Triangles wind
/// counter-clockwise seen from the positive side.
TriangleMesh marching_cubes(const TsdfVolume& volume, const MarchingCubesOptions& opts = {});

/// Merges vertices closer than `tol` and drops zero-area triangles.
void weld_vertices(TriangleMesh& mesh, double tol);

struct EdgeStats {
  std::size_t edges = 0;
  std::size_t boundary = 0;      // used by one triangle
  std::size_t non_manifold = 0;  // used by more than two
};

EdgeStats edge_stats(const TriangleMesh& mesh);
/// V - E + F over referenced vertices.
long euler_characteristic(const TriangleMesh& mesh);
/// Signed volume enclosed by a closed mesh; positive when outward-facing.
double signed_volume(const TriangleMesh& mesh);

/// Binary little-endian PLY: float32 x y z (optional nx ny nz), faces as
/// uchar-counted int32 lists.
void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path);
TriangleMesh read_ply(const std::filesystem::path& path);

}  // namespace dgrecon
