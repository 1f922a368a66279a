#include "dgrecon/io_util.hpp"
#include "dgrecon/mesh.hpp"
#include "dgrecon/scene.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace dgrecon;

namespace {

TsdfVolume sphere_volume(double r, double voxel, double tau) {
  SdfScene s{{Sphere{Vec3::Zero(), r}}};
  GridSpec g;
  const int n = static_cast<int>(std::ceil((r + 2 * tau) / voxel)) * 2 + 1;
  g.origin = Vec3::Constant(-voxel * (n / 2));
  g.voxel_size = voxel;
  g.dims = {n, n, n};
  TsdfVolume v(g, tau);
  for (std::size_t i = 0; i < g.count(); ++i) {
    v.values[i] = static_cast<float>(sdf_eval(s, g.center(i), tau));
    v.weights[i] = 1.0f;
  }
  return v;
}

std::filesystem::path tmp(const char* name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_SUITE("mesh") {

TEST_CASE("uniform positive volume gives an empty mesh") {
  GridSpec g;
  g.dims = {4, 4, 4};
  CHECK(marching_cubes(TsdfVolume(g, 0.1)).empty());
}

TEST_CASE("single negative corner gives one triangle") {
  GridSpec g;
  g.dims = {2, 2, 2};
  g.voxel_size = 1.0;
  TsdfVolume v(g, 0.1);
  std::fill(v.weights.begin(), v.weights.end(), 1.0f);
  v.values[g.index(0, 0, 0)] = -1.0f;
  const TriangleMesh m = marching_cubes(v);
  REQUIRE(m.triangles.size() == 1);
  // vertices at the edge midpoints of the three edges leaving the corner
  for (const Vec3& p : m.vertices) CHECK(p.sum() == doctest::Approx(0.5));
  // normal points toward the positive side
  const auto& t = m.triangles[0];
  const Vec3 n = (m.vertices[t[1]] - m.vertices[t[0]]).cross(m.vertices[t[2]] - m.vertices[t[0]]);
  CHECK(n.dot(Vec3(1, 1, 1)) > 0.0);
}

TEST_CASE("sphere: closed, genus 0, outward, close to the surface") {
  const double r = 0.5;
  const TsdfVolume v = sphere_volume(r, 0.02, 0.06);
  const TriangleMesh m = marching_cubes(v);
  REQUIRE_FALSE(m.empty());
  CHECK(m.valid());
  const EdgeStats es = edge_stats(m);
  CHECK(es.boundary == 0);
  CHECK(es.non_manifold == 0);
  CHECK(euler_characteristic(m) == 2);
  const double vol = signed_volume(m);
  CHECK(vol > 0.0);
  CHECK(vol == doctest::Approx(4.0 / 3.0 * 3.14159265358979 * r * r * r).epsilon(0.01));
  double worst = 0;
  for (const Vec3& p : m.vertices) worst = std::max(worst, std::abs(p.norm() - r));
  CHECK(worst < 0.5 * 0.02);
}

TEST_CASE("vertices lie on the edges of their generating nodes") {
  const TsdfVolume v = sphere_volume(0.3, 0.05, 0.15);
  const TriangleMesh m = marching_cubes(v);
  const GridSpec& g = v.spec;
  for (const Vec3& p : m.vertices) {
    const Vec3 c = g.to_grid(p);
    int off = 0;
    for (int a = 0; a < 3; ++a) {
      if (std::abs(c[a] - std::round(c[a])) > 1e-6 / g.voxel_size) ++off;
    }
    CHECK(off <= 1);
  }
}

TEST_CASE("unobserved cells can be skipped") {
  TsdfVolume v = sphere_volume(0.3, 0.05, 0.15);
  const std::size_t full = marching_cubes(v).triangles.size();
  for (std::size_t i = 0; i < v.spec.count(); ++i) {
    if (v.spec.center(i).x() > 0.0) v.weights[i] = 0.0f;
  }
  MarchingCubesOptions o;
  o.skip_unobserved = true;
  const std::size_t half = marching_cubes(v, o).triangles.size();
  CHECK(half > 0);
  CHECK(half < full);
}

TEST_CASE("weld removes duplicates and degenerate triangles") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1e-9, 0, 0}, {2, 0, 0}};
  m.triangles = {{0, 1, 2}, {3, 1, 2}, {0, 3, 2}, {0, 1, 4}};
  weld_vertices(m, 1e-7);
  CHECK(m.triangles.size() == 2);
  CHECK(m.vertices.size() == 3);
}

TEST_CASE("PLY round trip") {
  TriangleMesh m;
  m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 1, 0.5}};
  m.triangles = {{0, 1, 2}, {1, 3, 2}};
  const auto path = tmp("dgrecon_test_two.ply");
  write_ply(m, path);
  const TriangleMesh r = read_ply(path);
  CHECK(r.triangles == m.triangles);
  REQUIRE(r.vertices.size() == m.vertices.size());
  for (std::size_t i = 0; i < m.vertices.size(); ++i) {
    CHECK((r.vertices[i] - m.vertices[i]).norm() == 0.0);
  }

  SUBCASE("empty mesh") {
    write_ply(TriangleMesh{}, path);
    const TriangleMesh e = read_ply(path);
    CHECK(e.vertices.empty());
    CHECK(e.triangles.empty());
  }
  SUBCASE("truncated vertex block") {
    const auto bytes = read_file(path);
    const std::string text(bytes.begin(), bytes.end());
    const std::size_t header = text.find("end_header\n") + 11;
    std::vector<char> cut(bytes.begin(), bytes.begin() + header + 12 * 2 + 5);
    const auto bad = tmp("dgrecon_test_trunc.ply");
    write_file_atomic(bad, cut);
    try {
      read_ply(bad);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("expected 4 vertices") != std::string::npos);
      CHECK(msg.find("holds 2") != std::string::npos);
    }
    std::filesystem::remove(bad);
  }
  SUBCASE("garbage header") {
    const auto bad = tmp("dgrecon_test_bad.ply");
    write_text_atomic(bad, "not a ply\n");
    CHECK_THROWS_AS(read_ply(bad), ParseError);
    std::filesystem::remove(bad);
  }
  std::filesystem::remove(path);
}

}
