#include "dgrecon/scene.hpp"
#include "dgrecon/tsdf.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

using namespace dgrecon;

namespace {

// Minimum distance to points sampled on the six faces of an axis-aligned box.
double brute_box_distance(const Vec3& half, const Vec3& p, int n) {
  double best = 1e30;
  for (int axis = 0; axis < 3; ++axis) {
    const int a = (axis + 1) % 3;
    const int b = (axis + 2) % 3;
    for (double side : {-1.0, 1.0}) {
      for (int i = 0; i <= n; ++i) {
        for (int j = 0; j <= n; ++j) {
          Vec3 q;
          q[axis] = side * half[axis];
          q[a] = -half[a] + 2 * half[a] * i / n;
          q[b] = -half[b] + 2 * half[b] * j / n;
          best = std::min(best, (q - p).norm());
        }
      }
    }
  }
  return best;
}

}  // namespace

TEST_SUITE("scene") {

TEST_CASE("sphere sdf") {
  SdfScene s{{Sphere{Vec3::Zero(), 1.0}}};
  CHECK(sdf_eval(s, {0, 0, 2}) == 1.0);
  CHECK(sdf_eval(s, Vec3::Zero()) == -1.0);
  CHECK(sdf_eval(s, {0, 0, 2}, 0.5) == 1.0);
  CHECK(sdf_eval(s, {0, 0, 1.05}, 0.1) == doctest::Approx(0.5));
}

TEST_CASE("box sdf matches a brute-force surface search") {
  SdfScene s{{Box{Vec3::Zero(), Vec3::Ones(), 0.0}}};
  CHECK(sdf_eval(s, {2, 2, 0}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-14));
  CHECK(brute_box_distance(Vec3::Ones(), {2, 2, 0}, 200) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-9));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2.5, 2.5);
  const Vec3 half(0.4, 0.7, 0.3);
  SdfScene b{{Box{Vec3::Zero(), half, 0.0}}};
  for (int i = 0; i < 20; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    const double d = sdf_eval(b, p);
    const double bf = brute_box_distance(half, p, 100);
    // inside points are compared on magnitude
    CHECK(std::abs(std::abs(d) - bf) < 0.011);
  }
}

TEST_CASE("yawed box is a rotated box") {
  const double yaw = 0.6;
  SdfScene a{{Box{{0.1, 0.2, 0.3}, {0.3, 0.1, 0.2}, yaw}}};
  SdfScene b{{Box{Vec3::Zero(), {0.3, 0.1, 0.2}, 0.0}}};
  const Mat3 R = axis_rotation(Vec3::UnitZ(), yaw);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int i = 0; i < 50; ++i) {
    const Vec3 p(u(rng), u(rng), u(rng));
    CHECK(sdf_eval(a, R * p + Vec3(0.1, 0.2, 0.3)) == doctest::Approx(sdf_eval(b, p)).epsilon(1e-12));
  }
}

TEST_CASE("raycast depth") {
  SUBCASE("sphere on the axis") {
    SdfScene s{{Sphere{Vec3::Zero(), 1.0}}};
    const Intrinsics K{50, 50, 32, 24, 65, 49};
    Pose P;
    P.translation = {0, 0, -3};
    const DepthMap d = raycast_depth(s, K, P);
    CHECK(std::abs(d.at(32, 24) - 2.0) < 1e-4);
    CHECK_FALSE(d.valid(0, 0));
  }
  SUBCASE("plane gives constant z-depth") {
    SdfScene s{{Plane{Vec3(0, 0, -1), -2.0}}};
    const Intrinsics K{40, 40, 15.5, 11.5, 32, 24};
    const DepthMap d = raycast_depth(s, K, Pose::identity());
    for (float v : d.values) CHECK(std::abs(v - 2.0) < 1e-4);
  }
}

TEST_CASE("orbit trajectory") {
  SdfScene s{{Sphere{{0.1, 0.2, 0.3}, 0.5}}};
  const auto poses = orbit_trajectory(s, 4, 3.0, 0.0);
  REQUIRE(poses.size() == 4);
  const Intrinsics K{100, 100, 63.5, 47.5, 128, 96};
  for (std::size_t i = 0; i < poses.size(); ++i) {
    CHECK(poses[i].valid());
    const auto pr = project_point(s.centroid(), K, poses[i]);
    CHECK(std::hypot(pr.u - K.cx, pr.v - K.cy) < 1.0);
    const Vec3 a = poses[i].translation - s.centroid();
    const Vec3 b = poses[(i + 1) % 4].translation - s.centroid();
    CHECK(std::acos(a.normalized().dot(b.normalized())) == doctest::Approx(std::numbers::pi / 2));
  }
  CHECK_THROWS(orbit_trajectory(s, 4, 0.3, 0.0));
  CHECK_THROWS(orbit_trajectory(s, 1, 3.0, 0.0));
}

TEST_CASE("depth perturbation") {
  DepthMap d(400, 250);
  for (auto& v : d.values) v = 2.0f;
  d.values[5] = 0.0f;
  SUBCASE("zero noise is the identity") {
    NoiseConfig c;
    c.multiplicative_sigma = 0;
    c.outlier_rate = 0;
    CHECK(perturb_depth(d, c).values == d.values);
  }
  SUBCASE("deterministic and correctly scaled") {
    NoiseConfig c;
    c.outlier_rate = 0;
    c.seed = 42;
    const DepthMap a = perturb_depth(d, c);
    CHECK(a.values == perturb_depth(d, c).values);
    CHECK(a.values[5] == 0.0f);
    double s = 0, s2 = 0;
    long n = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      if (d.values[i] <= 0) continue;
      const double r = a.values[i] / d.values[i];
      s += r;
      s2 += r * r;
      ++n;
    }
    const double mean = s / n;
    const double sd = std::sqrt(s2 / n - mean * mean);
    CHECK(sd >= 0.019);
    CHECK(sd <= 0.021);
  }
}

TEST_CASE("ground truth samples") {
  SdfScene s{{Sphere{Vec3::Zero(), 0.3}}};
  GridSpec g;
  g.origin = Vec3::Constant(-0.6);
  g.voxel_size = 0.04;
  g.dims = {31, 31, 31};
  const double tau = 0.12;
  const auto samples = sample_ground_truth(s, g, tau);
  REQUIRE(samples.size() == g.count());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& x = samples[i];
    CHECK(x.position == g.center(i));
    CHECK(x.value >= -1.0);
    CHECK(x.value <= 1.0);
    CHECK(sdf_eval(s, x.position, tau) == x.value);
    if (x.position.norm() >= 0.3 + tau) CHECK(x.value == 1.0);
  }
}

TEST_CASE("interpolating the grid misplaces the surface near a box corner") {
  // box corner inside a 4 cm cell: the trilinear blend of exact node values
  // gets the sign wrong somewhere
  SdfScene s{{Box{{0.013, 0.017, 0.011}, {0.2, 0.2, 0.2}, 0.0}}};
  GridSpec g;
  g.origin = Vec3::Constant(0.0);
  g.voxel_size = 0.04;
  g.dims = {10, 10, 10};
  const double tau = 0.12;
  std::vector<double> v(g.count());
  for (std::size_t i = 0; i < g.count(); ++i) v[i] = sdf_eval(s, g.center(i), tau);
  int mismatched = 0;
  const int n = 40;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        const Vec3 p = Vec3(0.2, 0.2, 0.2) + Vec3(i, j, k) * (0.1 / n);
        const double exact = sdf_eval(s, p, tau);
        const double interp = trilinear_sample(g, std::span<const double>(v), p).value;
        if (exact * interp < 0) ++mismatched;
      }
  CHECK(mismatched > 0);
}

TEST_CASE("fused noise-free depths agree with the analytic field") {
  SdfScene s{{Sphere{{0, 0, 0.3}, 0.25}}};
  const Intrinsics K{100, 100, 63.5, 47.5, 128, 96};
  std::vector<Camera> cams;
  std::vector<DepthMap> depths;
  for (double h : {0.3, 0.9}) {
    for (const Pose& P : orbit_trajectory(s, 12, 1.2, h)) {
      cams.push_back({K, P});
      depths.push_back(raycast_depth(s, K, P));
    }
  }
  GridSpec g;
  g.origin = Vec3(-0.4, -0.4, -0.1);
  g.voxel_size = 0.04;
  g.dims = {21, 21, 21};
  const double tau = 0.12;
  const TsdfVolume vol = fuse_depths(depths, cams, g, tau);
  const auto gt = sample_ground_truth(s, g, tau);
  double err = 0;
  long n = 0;
  for (std::size_t i = 0; i < g.count(); ++i) {
    if (std::abs(gt[i].value) >= 1.0 || !vol.observed(i)) continue;
    err += std::abs(vol.values[i] - gt[i].value);
    ++n;
  }
  REQUIRE(n > 100);
  CHECK(err / n < 0.2);
}

}
