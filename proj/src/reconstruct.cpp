#include "dgrecon/reconstruct.hpp"

#include "dgrecon/nn/ops.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace dgrecon {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

}  // namespace

InferenceContext prepare_inference(const ModelParams& m, std::span<const Camera> cameras,
                                   std::span<const DepthMap> depths,
                                   std::span<const RenderedInput> images, const GridSpec& spec,
                                   double tau, bool need_fine) {
  if (cameras.empty()) throw std::invalid_argument("prepare_inference: no views");
  if (depths.size() != cameras.size() || images.size() != cameras.size()) {
    throw std::invalid_argument("prepare_inference: cameras, depths and images differ in count");
  }
  InferenceContext ctx;
  ctx.spec = spec;
  ctx.tau = tau;
  ctx.cameras.assign(cameras.begin(), cameras.end());
  ctx.depths.assign(depths.begin(), depths.end());
  ctx.timings.frames = static_cast<int>(cameras.size());
  const GuidanceStrategy& g = m.config().guidance;

  nn::Tape t(false);
  auto t0 = Clock::now();
  nn::Var coarse;
  if (g.uses_image_features() || need_fine) {
    const auto f = extract_features(t, m, t.constant(stack_images(images)), need_fine);
    coarse = f.coarse;
    if (need_fine) ctx.fine = to_feature_maps(f.fine->value, 2);
  }
  ctx.timings.features_ms = ms_since(t0);

  t0 = Clock::now();
  TsdfVolume fused;
  if (g.needs_depth_volume()) fused = fuse_depths(depths, cameras, spec, tau);
  ctx.timings.fusion_ms = ms_since(t0);

  t0 = Clock::now();
  const nn::Var vg = build_guidance_volume(t, m, coarse, ctx.views(), spec,
                                           g.needs_depth_volume() ? &fused : nullptr);
  ctx.timings.backprojection_ms = ms_since(t0);

  t0 = Clock::now();
  const VolumeEncoding enc = encode_volume(t, m, vg);
  ctx.encoded.features.spec = spec;
  ctx.encoded.features.channels = enc.features->value.dim(0);
  ctx.encoded.features.data = enc.features->value.storage();
  ctx.encoded.occupancy_logits = enc.occupancy->value.storage();
  ctx.timings.volume_ms = ms_since(t0);

  const std::uint64_t pixels =
      static_cast<std::uint64_t>(images[0].width) * static_cast<std::uint64_t>(images[0].height);
  ctx.per_frame_work = static_cast<std::uint64_t>(spec.count()) + pixels;
  return ctx;
}

std::size_t parent_voxel(const GridSpec& model, const GridSpec& output, int r, std::size_t idx) {
  const auto c = output.unravel(idx);
  return model.index(c[0] / r, c[1] / r, c[2] / r);
}

GridReconstruction reconstruct_grid(const ModelParams& m, const InferenceContext& ctx,
                                    const ReconstructionRequest& req) {
  const auto t0 = Clock::now();
  const GridSpec& ms = ctx.spec;
  if (!(req.spacing > 0.0)) throw std::invalid_argument("reconstruct_grid: spacing must be positive");
  if (req.spacing > ms.voxel_size * (1 + 1e-9)) {
    throw std::invalid_argument("reconstruct_grid: spacing " + std::to_string(req.spacing) +
                                " exceeds the model voxel size " + std::to_string(ms.voxel_size));
  }
  const double ratio = ms.voxel_size / req.spacing;
  const int r = static_cast<int>(std::lround(ratio));
  if (std::abs(ratio - r) > 1e-6) {
    throw std::invalid_argument("reconstruct_grid: voxel size / spacing must be an integer, got " +
                                std::to_string(ratio));
  }
  if (!(req.occupancy_threshold > 0.0 && req.occupancy_threshold < 1.0)) {
    throw std::invalid_argument("reconstruct_grid: occupancy threshold must lie in (0, 1)");
  }

  GridReconstruction out;
  out.refinement = r;
  GridSpec os;
  os.voxel_size = ms.voxel_size / r;
  os.dims = {ms.dims[0] * r, ms.dims[1] * r, ms.dims[2] * r};
  os.origin = ms.origin - Vec3::Constant(ms.voxel_size / 2) + Vec3::Constant(os.voxel_size / 2);
  out.volume = TsdfVolume(os, ctx.tau);
  out.cells = os.count();

  out.occupied.spec = ms;
  out.occupied.flags.assign(ms.count(), 1);
  if (req.occupancy_filter) {
    const double cut = std::log(req.occupancy_threshold / (1.0 - req.occupancy_threshold));
    for (std::size_t v = 0; v < ms.count(); ++v) {
      out.occupied.flags[v] = ctx.encoded.occupancy_logits[v] >= cut;
    }
  }

  std::vector<std::size_t> idx;
  std::vector<Vec3> pts;
  for (std::size_t c = 0; c < os.count(); ++c) {
    if (out.occupied.flags[parent_voxel(ms, os, r, c)]) {
      idx.push_back(c);
      pts.push_back(os.center(c));
    }
  }
  out.evaluations = pts.size();
  if (!pts.empty()) {
    const TsdfPredictor predictor(m, ctx.encoded.features, ctx.fine, ctx.views(), req.enable_pb);
    const std::vector<double> s = predictor.predict(pts);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      out.volume.values[idx[i]] = static_cast<float>(std::clamp(s[i], -1.0, 1.0));
      out.volume.weights[idx[i]] = 1.0f;
    }
  }
  out.extraction_ms = ms_since(t0);
  return out;
}

}  // namespace dgrecon
