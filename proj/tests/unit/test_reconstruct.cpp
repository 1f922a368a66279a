#include "dgrecon/reconstruct.hpp"

#include <doctest.h>

#include <cmath>

using namespace dgrecon;

namespace {

struct Fixture {
  SceneData data;
  ModelParams model;
  InferenceContext ctx;

  Fixture()
      : data(build_scene_data([] {
          SceneDescription d = make_preset("sphere", 4);
          d.rings = {{6, 1.6, 0.5}};
          return d;
        }())),
        model(ModelConfig{}, 21) {
    GridSpec spec;
    spec.voxel_size = 0.04;
    spec.dims = {10, 10, 8};
    spec.origin = Vec3(-0.18, -0.18, 0.16);
    ctx = prepare_inference(model, data.cameras, data.noisy_depths, data.images, spec,
                            data.desc.tau, true);
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_SUITE("reconstruct") {

TEST_CASE("output grid layout") {
  const auto& f = fixture();
  ReconstructionRequest req;
  req.spacing = 0.01;
  req.occupancy_filter = false;
  const GridReconstruction r = reconstruct_grid(f.model, f.ctx, req);
  CHECK(r.refinement == 4);
  CHECK(r.volume.spec.dims == std::array<int, 3>{40, 40, 32});
  CHECK(r.evaluations == r.cells);
  // the four cells of a model voxel straddle its center
  const Vec3 c = f.ctx.spec.center(0, 0, 0);
  const Vec3 a = r.volume.spec.center(1, 1, 1);
  const Vec3 b = r.volume.spec.center(2, 2, 2);
  CHECK(((a + b) / 2 - c).norm() < 1e-12);
  CHECK(parent_voxel(f.ctx.spec, r.volume.spec, 4, r.volume.spec.index(7, 3, 31)) ==
        f.ctx.spec.index(1, 0, 7));
}

TEST_CASE("filtering only skips work") {
  const auto& f = fixture();
  ReconstructionRequest req;
  req.spacing = 0.02;
  req.occupancy_filter = false;
  const GridReconstruction full = reconstruct_grid(f.model, f.ctx, req);
  for (double th : {0.3, 0.5, 0.7}) {
    req.occupancy_filter = true;
    req.occupancy_threshold = th;
    const GridReconstruction filt = reconstruct_grid(f.model, f.ctx, req);
    CHECK(filt.evaluations <= full.evaluations);
    for (std::size_t c = 0; c < filt.cells; ++c) {
      const std::size_t parent = parent_voxel(f.ctx.spec, filt.volume.spec, 2, c);
      if (filt.occupied.flags[parent]) {
        CHECK(filt.volume.values[c] == full.volume.values[c]);
        CHECK(filt.volume.weights[c] == 1.0f);
      } else {
        CHECK(filt.volume.values[c] == 1.0f);
        CHECK(filt.volume.weights[c] == 0.0f);
      }
    }
  }
}

TEST_CASE("nothing occupied means nothing evaluated") {
  const auto& f = fixture();
  InferenceContext ctx = f.ctx;
  std::fill(ctx.encoded.occupancy_logits.begin(), ctx.encoded.occupancy_logits.end(), -5.0);
  ReconstructionRequest req;
  const GridReconstruction r = reconstruct_grid(f.model, ctx, req);
  CHECK(r.evaluations == 0);
  for (float v : r.volume.values) CHECK(v == 1.0f);
  CHECK(marching_cubes(r.volume).empty());
}

TEST_CASE("spacing errors") {
  const auto& f = fixture();
  ReconstructionRequest req;
  req.spacing = 0.05;
  CHECK_THROWS_AS(reconstruct_grid(f.model, f.ctx, req), std::invalid_argument);
  req.spacing = 0.03;
  CHECK_THROWS_AS(reconstruct_grid(f.model, f.ctx, req), std::invalid_argument);
  req.spacing = 0.04;
  CHECK_NOTHROW(reconstruct_grid(f.model, f.ctx, req));
}

TEST_CASE("timing and work accounting") {
  const auto& f = fixture();
  CHECK(f.ctx.timings.frames == 6);
  CHECK(f.ctx.per_frame_work == 800u + 128u * 96u);
  CHECK(f.ctx.timings.per_frame_ms() > 0.0);
}

}
