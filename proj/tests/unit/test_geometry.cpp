#include "dgrecon/geometry.hpp"

#include <doctest.h>

#include <random>

using namespace dgrecon;

namespace {

Intrinsics cam320() { return {100.0, 100.0, 160.0, 120.0, 320, 240}; }

Pose random_pose(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  const Eigen::Quaterniond q(n(rng), n(rng), n(rng), n(rng));
  Pose p;
  p.rotation = q.normalized().toRotationMatrix();
  p.translation = Vec3(n(rng), n(rng), n(rng));
  return p;
}

}  // namespace

TEST_SUITE("geometry") {

TEST_CASE("projection of the optical axis lands on the principal point") {
  const auto pr = project_point({0, 0, 1}, cam320(), Pose::identity());
  CHECK(pr.valid);
  CHECK(pr.u == doctest::Approx(160.0));
  CHECK(pr.v == doctest::Approx(120.0));
  CHECK(pr.z == 1.0);
}

TEST_CASE("off-axis projection") {
  const auto pr = project_point({0.5, 0, 1}, cam320(), Pose::identity());
  CHECK(pr.u == doctest::Approx(210.0).epsilon(1e-14));
  CHECK(pr.v == doctest::Approx(120.0).epsilon(1e-14));
  CHECK(pr.z == 1.0);
}

TEST_CASE("points behind the camera or outside the image are invalid") {
  CHECK_FALSE(project_point({0, 0, -1}, cam320(), Pose::identity()).valid);
  CHECK_FALSE(project_point({0, 0, 0.04}, cam320(), Pose::identity()).valid);
  CHECK_FALSE(project_point({10, 0, 1}, cam320(), Pose::identity()).valid);
}

TEST_CASE("projection agrees with a homogeneous matrix product") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const Intrinsics K = cam320();
  for (int i = 0; i < 1000; ++i) {
    const Pose P = random_pose(rng);
    const Vec3 pc(u(rng), u(rng), 1.0 + std::abs(u(rng)));
    const Vec3 pw = P.rotation * pc + P.translation;
    Eigen::Matrix<double, 3, 4> cam_from_world;
    const Mat4 inv = P.matrix().inverse();
    cam_from_world = K.matrix() * inv.topRows<3>();
    const Eigen::Vector3d h = cam_from_world * pw.homogeneous();
    const auto pr = project_point(pw, K, P, 0.0);
    CHECK(std::abs(pr.u - h.x() / h.z()) < 1e-9);
    CHECK(std::abs(pr.v - h.y() / h.z()) < 1e-9);
    CHECK(std::abs(pr.z - h.z()) < 1e-9);
  }
}

TEST_CASE("transform round trip") {
  std::mt19937_64 rng(5);
  CHECK((transform_point({1, 2, 3}, Pose::identity()) - Vec3(1, 2, 3)).norm() == 0.0);
  Pose t;
  t.translation = {0.3, -1, 2};
  CHECK((transform_point(Vec3::Zero(), t) - t.translation).norm() == 0.0);
  for (int i = 0; i < 200; ++i) {
    const Pose P = random_pose(rng);
    const Vec3 p = P.translation * 3.0;
    const Vec3 q = transform_point(transform_point(p, P), P, TransformDirection::inverse);
    CHECK((q - p).norm() < 1e-12);
  }
}

TEST_CASE("composition chains stay orthonormal") {
  std::mt19937_64 rng(11);
  Pose acc;
  for (int i = 0; i < 100; ++i) acc = acc.compose(random_pose(rng));
  const Mat3& R = acc.rotation;
  CHECK((R.transpose() * R - Mat3::Identity()).norm() < 1e-8);
  CHECK(std::abs(R.determinant() - 1.0) < 1e-8);
  CHECK(acc.valid(1e-8));
}

TEST_CASE("single composition with the identity is exact") {
  std::mt19937_64 rng(2);
  const Pose P = random_pose(rng);
  const Pose Q = Pose::identity().compose(P);
  CHECK(Q.rotation == P.rotation);
  CHECK(Q.translation == P.translation);
}

TEST_CASE("border distance") {
  const Intrinsics K = cam320();
  CHECK(border_distance(-0.5, 100, K) == 0.0);
  CHECK(border_distance(159.5, 119.5, K) == doctest::Approx(120.0));
}

TEST_CASE("trilinear sampling") {
  GridSpec g;
  g.origin = {0.1, -0.2, 0.3};
  g.voxel_size = 0.05;
  g.dims = {5, 6, 7};
  std::vector<double> vals(g.count());
  auto f = [](const Vec3& p) { return 2 * p.x() + 3 * p.y() - p.z(); };
  for (std::size_t i = 0; i < g.count(); ++i) vals[i] = f(g.center(i));

  SUBCASE("node identity") {
    for (std::size_t i = 0; i < g.count(); i += 7) {
      const auto s = trilinear_sample(g, std::span<const double>(vals), g.center(i));
      CHECK(s.value == vals[i]);
      CHECK_FALSE(s.out_of_bounds);
    }
  }
  SUBCASE("affine fields are reproduced") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const Vec3 ext = g.max_corner() - g.origin;
    for (int i = 0; i < 100; ++i) {
      const Vec3 p = g.origin + Vec3(u(rng), u(rng), u(rng)).cwiseProduct(ext);
      CHECK(std::abs(trilinear_sample(g, std::span<const double>(vals), p).value - f(p)) < 1e-12);
    }
  }
  SUBCASE("constant cell") {
    std::vector<double> c(g.count(), 4.25);
    const Vec3 mid = g.center(1, 1, 1) + Vec3::Constant(g.voxel_size / 2);
    CHECK(trilinear_sample(g, std::span<const double>(c), mid).value == 4.25);
  }
  SUBCASE("out of bounds clamps and flags") {
    const auto s = trilinear_sample(g, std::span<const double>(vals), g.origin - Vec3(1, 0, 0));
    CHECK(s.out_of_bounds);
    CHECK(s.value == doctest::Approx(vals[0]));
  }
  SUBCASE("continuity") {
    const Vec3 p = g.center(2, 3, 4) + Vec3(0.0123, 0.004, -0.017);
    const double a = trilinear_sample(g, std::span<const double>(vals), p).value;
    const double b = trilinear_sample(g, std::span<const double>(vals), p + Vec3(1e-9, 0, 0)).value;
    const auto [lo, hi] = std::minmax_element(vals.begin(), vals.end());
    CHECK(std::abs(a - b) < 1e-6 * (*hi - *lo));
  }
  SUBCASE("multi-channel") {
    std::vector<double> mc(2 * g.count());
    for (std::size_t i = 0; i < g.count(); ++i) {
      mc[i] = vals[i];
      mc[g.count() + i] = -vals[i];
    }
    double out[2];
    const Vec3 p = g.center(1, 2, 3) + Vec3(0.01, 0.02, 0.03);
    trilinear_sample(g, mc, 2, p, out);
    CHECK(out[0] == doctest::Approx(f(p)));
    CHECK(out[1] == doctest::Approx(-f(p)));
  }
}

TEST_CASE("look_at points +z at the target") {
  const Pose P = look_at({2, 1, 1.5}, {0, 0, 0.3});
  const Vec3 fwd = P.rotation.col(2);
  CHECK((fwd - (Vec3(0, 0, 0.3) - Vec3(2, 1, 1.5)).normalized()).norm() < 1e-12);
  CHECK(P.rotation.col(1).z() < 0.0);
  CHECK(P.valid());
}

}
