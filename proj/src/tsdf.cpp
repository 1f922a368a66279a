#include "dgrecon/tsdf.hpp"

#include "dgrecon/io_util.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace dgrecon {

std::size_t OccupancyGrid::occupied_count() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
}

namespace {

void check_views(std::span<const DepthMap> depths, std::span<const Camera> cameras) {
  if (depths.empty()) throw std::invalid_argument("fusion: empty view list");
  if (depths.size() != cameras.size()) {
    throw std::invalid_argument("fusion: " + std::to_string(depths.size()) +
                                " depth maps but " + std::to_string(cameras.size()) +
                                " cameras");
  }
}

}  // namespace

TsdfVolume fuse_depths(std::span<const DepthMap> depths, std::span<const Camera> cameras,
                       const GridSpec& spec, double tau, const FusionOptions& opts) {
  check_views(depths, cameras);
  if (!(tau > 0)) throw std::invalid_argument("fuse_depths: tau must be positive");
  if (!spec.valid()) throw std::invalid_argument("fuse_depths: invalid grid");
  TsdfVolume vol(spec, tau);
  const long n = static_cast<long>(spec.count());
#pragma omp parallel for schedule(static)
  for (long idx = 0; idx < n; ++idx) {
    const Vec3 v = spec.center(static_cast<std::size_t>(idx));
    double sum = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < depths.size(); ++i) {
      const Projection pr = project_point(v, cameras[i].K, cameras[i].pose, opts.z_min);
      if (!pr.valid) continue;
      const double d = depths[i].lookup(pr.u, pr.v);
      if (!(d > 0.0) || d > opts.max_depth) continue;
      const double sdf = d - pr.z;
      if (!(sdf > -tau)) continue;
      sum += std::clamp(sdf / tau, -1.0, 1.0);
      ++count;
    }
    if (count > 0) {
      vol.values[idx] = static_cast<float>(sum / count);
      vol.weights[idx] = static_cast<float>(count);
    }
  }
  return vol;
}

PointTsdf tsdf_point_oracle(const Vec3& p, std::span<const DepthMap> depths,
                            std::span<const Camera> cameras, double tau,
                            const FusionOptions& opts) {
  check_views(depths, cameras);
  PointTsdf out;
  double sum = 0.0;
  const Eigen::Vector4d ph(p.x(), p.y(), p.z(), 1.0);
  for (std::size_t i = 0; i < depths.size(); ++i) {
    const Camera& cam = cameras[i];
    Eigen::Matrix<double, 3, 4> extr;
    extr.leftCols<3>() = cam.pose.rotation.transpose();
    extr.col(3) = -cam.pose.rotation.transpose() * cam.pose.translation;
    const Eigen::Vector3d h = cam.K.matrix() * (extr * ph);
    const double z = h.z();
    if (!(z > opts.z_min)) continue;
    const double u = h.x() / z;
    const double v = h.y() / z;
    if (u < -0.5 || u > cam.K.width - 0.5 || v < -0.5 || v > cam.K.height - 0.5) continue;
    const double d = depths[i].lookup(u, v);
    if (!(d > 0.0) || d > opts.max_depth) continue;
    const double sdf = d - z;
    if (sdf <= -tau) continue;
    sum += std::min(1.0, std::max(-1.0, sdf / tau));
    ++out.observations;
  }
  if (out.observations > 0) out.value = sum / out.observations;
  return out;
}

OccupancyGrid dilate(const GridSpec& spec, const std::vector<unsigned char>& seed) {
  OccupancyGrid out{spec, std::vector<unsigned char>(spec.count(), 0)};
  const auto& d = spec.dims;
  for (int i = 0; i < d[0]; ++i) {
    for (int j = 0; j < d[1]; ++j) {
      for (int k = 0; k < d[2]; ++k) {
        if (!seed[spec.index(i, j, k)]) continue;
        for (int a = std::max(0, i - 1); a <= std::min(d[0] - 1, i + 1); ++a) {
          for (int b = std::max(0, j - 1); b <= std::min(d[1] - 1, j + 1); ++b) {
            for (int c = std::max(0, k - 1); c <= std::min(d[2] - 1, k + 1); ++c) {
              out.flags[spec.index(a, b, c)] = 1;
            }
          }
        }
      }
    }
  }
  return out;
}

OccupancyGrid occupancy_ground_truth(const TsdfVolume& S) {
  std::vector<unsigned char> seed(S.spec.count());
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = std::abs(S.values[i]) < 1.0f;
  return dilate(S.spec, seed);
}

OccupancyGrid occupancy_from_values(const GridSpec& spec, std::span<const double> values) {
  std::vector<unsigned char> seed(spec.count());
  for (std::size_t i = 0; i < seed.size(); ++i) seed[i] = std::abs(values[i]) < 1.0;
  return dilate(spec, seed);
}

void write_volume(const TsdfVolume& vol, const std::filesystem::path& path) {
  BinaryWriter w;
  for (int a = 0; a < 3; ++a) w.put<std::int32_t>(vol.spec.dims[a]);
  w.put<double>(vol.spec.voxel_size);
  for (int a = 0; a < 3; ++a) w.put<double>(vol.spec.origin[a]);
  w.put<double>(vol.tau);
  for (float v : vol.values) w.put<float>(v);
  for (float v : vol.weights) w.put<float>(v);
  write_file_atomic(path, w.bytes());
}

TsdfVolume read_volume(const std::filesystem::path& path) {
  BinaryReader r(read_file(path), path.string());
  GridSpec spec;
  for (int a = 0; a < 3; ++a) spec.dims[a] = r.get<std::int32_t>();
  spec.voxel_size = r.get<double>();
  for (int a = 0; a < 3; ++a) spec.origin[a] = r.get<double>();
  const double tau = r.get<double>();
  if (!spec.valid()) throw std::runtime_error(path.string() + ": invalid grid header");
  TsdfVolume vol(spec, tau);
  for (float& v : vol.values) v = r.get<float>();
  for (float& v : vol.weights) v = r.get<float>();
  r.expect_end();
  return vol;
}

}  // namespace dgrecon
