#include "dgrecon/dataset.hpp"
#include "dgrecon/evaluation.hpp"

#include <doctest.h>

#include <cmath>
#include <numeric>
#include <random>

using namespace dgrecon;

namespace {

TriangleMesh square(double half, double z, int n = 4) {
  TriangleMesh m;
  for (int i = 0; i <= n; ++i)
    for (int j = 0; j <= n; ++j) m.vertices.emplace_back(-half + 2 * half * i / n, -half + 2 * half * j / n, z);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const int a = i * (n + 1) + j;
      m.triangles.push_back({a, a + n + 1, a + 1});
      m.triangles.push_back({a + 1, a + n + 1, a + n + 2});
    }
  return m;
}

TriangleMesh translated(TriangleMesh m, const Vec3& t) {
  for (auto& v : m.vertices) v += t;
  return m;
}

TriangleMesh sphere_mesh(const Vec3& c, double r, double voxel) {
  SdfScene s{{Sphere{c, r}}};
  GridSpec g;
  const int n = static_cast<int>(std::ceil(r / voxel)) * 2 + 5;
  g.origin = c - Vec3::Constant(voxel * (n / 2));
  g.voxel_size = voxel;
  g.dims = {n, n, n};
  TsdfVolume v(g, 3 * voxel);
  for (std::size_t i = 0; i < g.count(); ++i) {
    v.values[i] = static_cast<float>(sdf_eval(s, g.center(i), 3 * voxel));
    v.weights[i] = 1;
  }
  return marching_cubes(v);
}

// Brute-force mean nearest distance.
double brute_mean_nn(const std::vector<Vec3>& q, const std::vector<Vec3>& t) {
  double s = 0;
  for (const auto& a : q) {
    double best = 1e30;
    for (const auto& b : t) best = std::min(best, (a - b).squaredNorm());
    s += std::sqrt(best);
  }
  return s / q.size();
}

}  // namespace

TEST_SUITE("evaluation") {

TEST_CASE("metric variance across sampling seeds") {
  SceneDescription desc = make_preset("boxes", 101);
  const TriangleMesh gt = ground_truth_mesh(desc.scene, desc.region, 0.02);
  const TriangleMesh pred = sphere_mesh({0.05, 0.0, 0.2}, 0.3, 0.04);
  std::vector<double> ch;
  for (std::uint64_t s = 0; s < 5; ++s) {
    MetricsOptions o;
    o.seed = s * 7919;
    ch.push_back(metrics_3d(pred, gt, nullptr, o).chamfer);
  }
  const double mean = std::accumulate(ch.begin(), ch.end(), 0.0) / ch.size();
  double var = 0;
  for (double c : ch) var += (c - mean) * (c - mean) / ch.size();
  CHECK(std::sqrt(var) < 0.1);
}

TEST_CASE("surface sampling density") {
  const TriangleMesh m = square(0.5, 0.0);
  const auto pts = sample_surface(m, 1e4, 3);
  CHECK(std::abs(static_cast<double>(pts.size()) - 1e4) < 300);
  for (const auto& p : pts) {
    CHECK(std::abs(p.z()) < 1e-15);
    CHECK(std::abs(p.x()) <= 0.5);
  }
  CHECK(sample_surface(m, 1e4, 3) == pts);
}

TEST_CASE("nearest distances match brute force") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Vec3> a(300), b(500);
  for (auto& p : a) p = {u(rng), u(rng), u(rng)};
  for (auto& p : b) p = {u(rng), u(rng), u(rng)};
  const auto d = nearest_distances(a, b);
  double s = 0;
  for (double x : d) s += x / d.size();
  CHECK(s == doctest::Approx(brute_mean_nn(a, b)).epsilon(1e-12));
}

TEST_CASE("identical meshes") {
  const TriangleMesh m = sphere_mesh({0, 0, 0}, 0.3, 0.04);
  const Metrics3D r = metrics_3d(m, m, nullptr);
  CHECK(r.acc == 0.0);
  CHECK(r.comp == 0.0);
  CHECK(r.chamfer == 0.0);
  CHECK(r.prec == 100.0);
  CHECK(r.rec == 100.0);
  CHECK(r.f1 == 100.0);
  const auto a = sample_surface(m, 1e4, 9);
  const auto d = nearest_distances(a, a);
  for (double x : d) CHECK(x == 0.0);
}

TEST_CASE("offset planes") {
  const TriangleMesh gt = square(0.5, 0.0);
  const TriangleMesh pred = square(0.5, 0.02);
  const Metrics3D r = metrics_3d(pred, gt, nullptr);
  // same seed, so every sample has its twin exactly 2 cm away
  CHECK(r.acc == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(r.comp == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(std::abs(r.chamfer - 2.0) < 0.1);
  CHECK(r.f1 == 100.0);
  // the same value from brute force over the same samples
  const auto ps = sample_surface(pred, 1e4, 0);
  const auto gs = sample_surface(gt, 1e4, 0);
  std::vector<Vec3> sub(ps.begin(), ps.begin() + 400);
  const auto d = nearest_distances(sub, gs);
  double s = 0;
  for (double x : d) s += x / d.size();
  CHECK(s == doctest::Approx(brute_mean_nn(sub, gs)).epsilon(1e-12));
}

TEST_CASE("symmetry and translation sanity") {
  const TriangleMesh a = sphere_mesh({0, 0, 0}, 0.3, 0.04);
  const TriangleMesh b = sphere_mesh({0.01, 0, 0}, 0.28, 0.04);
  MetricsOptions o;
  const Metrics3D ab = metrics_3d(a, b, nullptr, o);
  const Metrics3D ba = metrics_3d(b, a, nullptr, o);
  CHECK(ab.acc == ba.comp);
  CHECK(ab.comp == ba.acc);
  CHECK(ab.prec == ba.rec);
  CHECK(ab.rec == ba.prec);
  CHECK(ab.chamfer == ba.chamfer);
  const Metrics3D base = metrics_3d(a, a, nullptr);
  const Metrics3D moved = metrics_3d(translated(a, {0.004, 0, 0}), a, nullptr);
  CHECK(moved.chamfer - base.chamfer <= 0.4);
  CHECK(moved.f1 == 100.0);
}

TEST_CASE("trimming removes unobserved hallucinations only from acc and prec") {
  const TriangleMesh gt = sphere_mesh({0, 0, 0}, 0.2, 0.04);
  TriangleMesh pred = gt;
  const TriangleMesh extra = sphere_mesh({0.6, 0, 0}, 0.1, 0.04);
  const int off = static_cast<int>(pred.vertices.size());
  pred.vertices.insert(pred.vertices.end(), extra.vertices.begin(), extra.vertices.end());
  for (auto t : extra.triangles) pred.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
  GridSpec g;
  g.origin = Vec3::Constant(-0.4);
  g.voxel_size = 0.04;
  g.dims = {31, 21, 21};
  VisibilityVolume vis = full_visibility(g);
  for (std::size_t i = 0; i < g.count(); ++i)
    if (g.center(i).x() > 0.38) vis.flags[i] = 0;
  const Metrics3D clean = metrics_3d(gt, gt, &vis);
  const Metrics3D trimmed = metrics_3d(pred, gt, &vis);
  const Metrics3D untrimmed = metrics_3d(pred, gt, nullptr);
  CHECK(trimmed.acc == clean.acc);
  CHECK(trimmed.prec == clean.prec);
  CHECK(untrimmed.acc > clean.acc);
  CHECK(untrimmed.prec < 100.0);
  CHECK(trimmed.comp == untrimmed.comp);
  CHECK(trimmed.rec == untrimmed.rec);
  CHECK_THROWS_AS(metrics_3d(TriangleMesh{}, gt, nullptr), std::invalid_argument);
}

TEST_CASE("rendering") {
  const Intrinsics K{40, 40, 15.5, 11.5, 32, 24};
  SUBCASE("plane filling the frustum") {
    const DepthMap d = render_depth(square(5.0, 2.0, 2), K, Pose::identity());
    for (float v : d.values) CHECK(v == 2.0f);
  }
  SUBCASE("empty mesh") {
    const DepthMap d = render_depth(TriangleMesh{}, K, Pose::identity());
    CHECK(d.valid_count() == 0);
  }
  SUBCASE("sphere center pixel") {
    const Intrinsics k{40, 40, 16, 12, 33, 25};
    const TriangleMesh m = sphere_mesh({0, 0, 0}, 0.5, 0.02);
    const Pose P = look_at({0.3, -1.7, 0.4}, {0, 0, 0});
    const DepthMap d = render_depth(m, k, P);
    // closed-form ray-sphere intersection along the optical axis
    const Vec3 o = P.translation;
    const Vec3 dir = P.rotation.col(2);
    const double b = o.dot(dir);
    const double t = -b - std::sqrt(b * b - (o.squaredNorm() - 0.25));
    CHECK(std::abs(d.at(16, 12) - t) < 0.01);
  }
  SUBCASE("agrees with ray casting of the same scene") {
    SceneDescription desc = make_preset("boxes", 2);
    const TriangleMesh gt = ground_truth_mesh(desc.scene, desc.region, 0.02);
    desc.rings = {{6, 1.6, 0.5}};
    const auto cams = scene_cameras(desc);
    std::vector<DepthMap> rendered, cast;
    const MeshRenderer r(gt);
    for (const auto& c : cams) {
      rendered.push_back(r.render(c.K, c.pose));
      cast.push_back(raycast_depth(desc.scene, c.K, c.pose));
    }
    const Metrics2D m = metrics_2d(rendered, cast);
    CHECK(m.l1 < 0.5);
    // the mesh stops at the region boundary
    CHECK(m.completeness > 80.0);
  }
}

TEST_CASE("2D metrics") {
  DepthMap gt(10, 10);
  for (std::size_t i = 0; i < gt.values.size(); ++i) gt.values[i] = 1.0f + 0.01f * i;
  gt.values[3] = 0.0f;
  SUBCASE("identity") {
    const Metrics2D m = metrics_2d(std::vector<DepthMap>{gt}, std::vector<DepthMap>{gt});
    CHECK(m.l1 == 0.0);
    CHECK(m.absrel == 0.0);
    CHECK(m.sqrel == 0.0);
    CHECK(m.delta_105 == 100.0);
    CHECK(m.delta_125 == 100.0);
    CHECK(m.completeness == 100.0);
  }
  SUBCASE("uniform 4 percent scale") {
    DepthMap r = gt;
    for (auto& v : r.values) v = static_cast<float>(v * 1.04);
    const Metrics2D m = metrics_2d(std::vector<DepthMap>{r}, std::vector<DepthMap>{gt});
    CHECK(m.delta_105 == 100.0);
    CHECK(delta_percent(r, gt, 1.03) == 0.0);
    CHECK(m.absrel == doctest::Approx(0.04).epsilon(1e-6));
  }
  SUBCASE("nothing rendered") {
    const DepthMap r(10, 10);
    const Metrics2D m = metrics_2d(std::vector<DepthMap>{r}, std::vector<DepthMap>{gt});
    CHECK(m.completeness == 0.0);
    CHECK(std::isnan(m.l1));
    CHECK(m.frames_with_overlap == 0);
  }
  SUBCASE("mismatched inputs") {
    CHECK_THROWS(metrics_2d(std::vector<DepthMap>{gt}, std::vector<DepthMap>{}));
    CHECK_THROWS(metrics_2d(std::vector<DepthMap>{DepthMap(3, 3)}, std::vector<DepthMap>{gt}));
  }
}

TEST_CASE("visibility") {
  const SceneDescription desc = make_preset("sphere", 1);
  const SceneData d = build_scene_data(desc);
  const VisibilityVolume v = compute_visibility(d.gt_depths, d.cameras, desc.region, desc.tau);
  CHECK(v.observed_count() > 0);
  CHECK(v.observed_count() < desc.region.count());
  CHECK_FALSE(v.observed(Vec3(0, 0, 0.3)));
  CHECK(v.observed(Vec3(0, 0, 0.3 + 0.25 + 0.02)));
  CHECK_FALSE(v.observed(Vec3(5, 5, 5)));
}

}
