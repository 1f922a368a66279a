#include "dgrecon/tsdf.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <random>

using namespace dgrecon;

namespace {

Camera axis_camera() { return {Intrinsics{50, 50, 15.5, 15.5, 32, 32}, Pose::identity()}; }

DepthMap constant_depth(int w, int h, float d) {
  DepthMap m(w, h);
  std::fill(m.values.begin(), m.values.end(), d);
  return m;
}

GridSpec axis_grid(double z) {
  GridSpec g;
  g.origin = {0, 0, z};
  g.voxel_size = 0.04;
  g.dims = {1, 1, 1};
  return g;
}

}  // namespace

TEST_SUITE("tsdf") {

TEST_CASE("single view examples") {
  const std::vector<Camera> cams{axis_camera()};
  const std::vector<DepthMap> d{constant_depth(32, 32, 2.0f)};
  const double tau = 0.12;
  const double expect = std::clamp((2.0 - 1.9) / 0.12, -1.0, 1.0);
  const TsdfVolume v = fuse_depths(d, cams, axis_grid(1.9), tau);
  CHECK(v.values[0] == static_cast<float>(expect));
  CHECK(tsdf_point_oracle({0, 0, 1.9}, d, cams, tau).value == doctest::Approx(0.833333333333).epsilon(1e-9));
  CHECK(fuse_depths(d, cams, axis_grid(2.0), tau).values[0] == 0.0f);
  const TsdfVolume unseen = fuse_depths(d, cams, axis_grid(-1.0), tau);
  CHECK(unseen.values[0] == 1.0f);
  CHECK(unseen.weights[0] == 0.0f);
}

TEST_CASE("carving guard boundary is strict") {
  const std::vector<Camera> cams{axis_camera()};
  // exactly representable distances
  const std::vector<DepthMap> d{constant_depth(32, 32, 2.0f)};
  const PointTsdf p = tsdf_point_oracle({0, 0, 2.125}, d, cams, 0.125);
  CHECK_FALSE(p.observed());
  CHECK(p.value == 1.0);
  CHECK(tsdf_point_oracle({0, 0, 2.0625}, d, cams, 0.125).value == -0.5);
}

TEST_CASE("symmetric contributions average to zero") {
  Camera a = axis_camera();
  Camera b = axis_camera();
  b.pose.translation = {0, 0, 0.5};
  const std::vector<Camera> cams{a, b};
  const std::vector<DepthMap> d{constant_depth(32, 32, 1.5f), constant_depth(32, 32, 0.5f)};
  // a: sdf = 1.5 - 1.25 = 0.25 -> +0.5 ; b: sdf = 0.5 - 0.75 = -0.25 -> -0.5
  CHECK(tsdf_point_oracle({0, 0, 1.25}, d, cams, 0.5).value == 0.0);
}

TEST_CASE("errors") {
  const std::vector<Camera> cams{axis_camera()};
  const std::vector<DepthMap> none;
  CHECK_THROWS_AS(fuse_depths(none, std::span<const Camera>{}, axis_grid(1), 0.1), std::invalid_argument);
  const std::vector<DepthMap> two{constant_depth(32, 32, 1), constant_depth(32, 32, 1)};
  CHECK_THROWS_AS(fuse_depths(two, cams, axis_grid(1), 0.1), std::invalid_argument);
}

TEST_CASE("order invariance and sign convention") {
  SdfScene s{{Sphere{{0, 0, 0}, 0.2}}};
  const Intrinsics K{40, 40, 15.5, 11.5, 32, 24};
  std::vector<Camera> cams;
  std::vector<DepthMap> d;
  for (const Pose& P : orbit_trajectory(s, 5, 1.0, 0.3)) {
    cams.push_back({K, P});
    d.push_back(raycast_depth(s, K, P));
  }
  GridSpec g;
  g.origin = Vec3::Constant(-0.3);
  g.voxel_size = 0.05;
  g.dims = {13, 13, 13};
  const TsdfVolume a = fuse_depths(d, cams, g, 0.1);
  std::vector<int> perm{3, 0, 4, 1, 2};
  std::vector<Camera> pc;
  std::vector<DepthMap> pd;
  for (int i : perm) {
    pc.push_back(cams[i]);
    pd.push_back(d[i]);
  }
  const TsdfVolume b = fuse_depths(pd, pc, g, 0.1);
  for (std::size_t i = 0; i < g.count(); ++i) {
    CHECK(std::abs(a.values[i] - b.values[i]) <= 1e-12);
    CHECK(a.weights[i] == b.weights[i]);
  }
  // a voxel between a camera and the surface, one just behind it
  const Vec3 dir = (cams[0].pose.translation).normalized();
  CHECK(tsdf_point_oracle(dir * 0.3, d, cams, 0.1).value > 0.0);
  CHECK(tsdf_point_oracle(dir * 0.17, d, cams, 0.1).value < 0.0);
}

TEST_CASE("occupancy dilation") {
  GridSpec g;
  g.dims = {5, 5, 5};
  TsdfVolume S(g, 0.12);
  CHECK(occupancy_ground_truth(S).occupied_count() == 0);
  std::fill(S.values.begin(), S.values.end(), -1.0f);
  CHECK(occupancy_ground_truth(S).occupied_count() == 0);
  S.values[g.index(2, 2, 2)] = 0.3f;
  CHECK(occupancy_ground_truth(S).occupied_count() == 27);
  S.values[g.index(2, 2, 2)] = -1.0f;
  S.values[g.index(0, 0, 0)] = 0.0f;
  CHECK(occupancy_ground_truth(S).occupied_count() == 8);
}

TEST_CASE("volume file round trip") {
  GridSpec g;
  g.origin = {0.5, -1, 2};
  g.voxel_size = 0.03;
  g.dims = {3, 4, 5};
  TsdfVolume v(g, 0.09);
  std::mt19937 rng(1);
  std::uniform_real_distribution<float> u(-1, 1);
  for (auto& x : v.values) x = u(rng);
  for (auto& w : v.weights) w = std::abs(u(rng));
  const auto path = std::filesystem::temp_directory_path() / "dgrecon_test_volume.bin";
  write_volume(v, path);
  const TsdfVolume r = read_volume(path);
  CHECK(r.spec == g);
  CHECK(r.tau == 0.09);
  CHECK(r.values == v.values);
  CHECK(r.weights == v.weights);
  std::filesystem::remove(path);
}

}
