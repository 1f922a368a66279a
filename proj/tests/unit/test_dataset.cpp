#include "dgrecon/dataset.hpp"
#include "dgrecon/io_util.hpp"

#include <doctest.h>

#include <filesystem>

using namespace dgrecon;

TEST_SUITE("dataset") {

TEST_CASE("presets are deterministic and valid") {
  for (const char* name : {"sphere", "boxes", "thin", "room"}) {
    INFO(name);
    const SceneDescription a = make_preset(name, 5);
    const SceneDescription b = make_preset(name, 5);
    CHECK(format_scene_description(a) == format_scene_description(b));
    CHECK(a.scene.valid());
    CHECK(a.region.valid());
  }
  CHECK(format_scene_description(make_preset("boxes", 1)) !=
        format_scene_description(make_preset("boxes", 2)));
  CHECK_THROWS_AS(make_preset("castle", 1), std::invalid_argument);
}

TEST_CASE("scene description round trip") {
  for (const char* name : {"sphere", "thin", "room"}) {
    SceneDescription d = make_preset(name, 3);
    d.noise.multiplicative_sigma = 0.013;
    d.rings = {{5, 1.4, 0.2}, {7, 1.9, 1.1}, {3, 2.0, 0.0}};
    const std::string text = format_scene_description(d);
    const SceneDescription r = parse_scene_description(text);
    CHECK(format_scene_description(r) == text);
    CHECK(r.region == d.region);
    CHECK(r.rings.size() == 3);
    CHECK(r.noise.multiplicative_sigma == 0.013);
    CHECK(r.scene.primitives.size() == d.scene.primitives.size());
  }
  CHECK_THROWS(parse_scene_description("[scene]\npreset = x\n[primitive0]\ntype = torus\n"));
}

TEST_CASE("cameras file round trip") {
  const SceneDescription d = make_preset("sphere", 1);
  const auto cams = scene_cameras(d);
  REQUIRE(cams.size() == 24);
  const auto r = parse_cameras(format_cameras(cams));
  REQUIRE(r.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(r[i].pose.rotation == cams[i].pose.rotation);
    CHECK(r[i].pose.translation == cams[i].pose.translation);
    CHECK(r[i].K.fx == cams[i].K.fx);
    CHECK(r[i].K.width == cams[i].K.width);
  }
  try {
    parse_cameras("frames 1\nframe 0 4 4\nK 1 0 2 0 1 2 0 0 1\nT 1 0 0\n");
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("depth files") {
  DepthMap d(5, 3);
  for (std::size_t i = 0; i < d.values.size(); ++i) d.values[i] = 0.5f * i;
  const auto p = std::filesystem::temp_directory_path() / "dgrecon_depth.f32";
  write_depth(d, p);
  CHECK(std::filesystem::file_size(p) == 15 * 4);
  CHECK(read_depth(p, 5, 3).values == d.values);
  CHECK_THROWS_AS(read_depth(p, 4, 4), ParseError);
  std::filesystem::remove(p);
}

TEST_CASE("scene data") {
  SceneDescription desc = make_preset("sphere", 2);
  desc.rings = {{6, 1.6, 0.5}};
  const SceneData a = build_scene_data(desc);
  const SceneData b = build_scene_data(desc);
  CHECK(a.cameras.size() == 6);
  CHECK(a.gt_samples.size() == desc.region.count());
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(a.noisy_depths[i].values == b.noisy_depths[i].values);
    CHECK(a.images[i].data == b.images[i].data);
    CHECK(a.gt_depths[i].valid_count() > 0);
    CHECK(a.noisy_depths[i].values != a.gt_depths[i].values);
  }
}

}
