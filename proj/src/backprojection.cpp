#include "dgrecon/backprojection.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dgrecon {

std::string_view to_string(GuidanceVariant v) {
  switch (v) {
    case GuidanceVariant::tsdf: return "tsdf";
    case GuidanceVariant::density: return "density";
    case GuidanceVariant::gaussian_weight: return "gaussian_weight";
    case GuidanceVariant::tsdf_plus_gaussian: return "tsdf_plus_gaussian";
    case GuidanceVariant::none: return "none";
    case GuidanceVariant::depth_only: return "depth_only";
  }
  return "unknown";
}

GuidanceVariant parse_guidance(std::string_view name) {
  for (auto v : {GuidanceVariant::tsdf, GuidanceVariant::density,
                 GuidanceVariant::gaussian_weight, GuidanceVariant::tsdf_plus_gaussian,
                 GuidanceVariant::none, GuidanceVariant::depth_only}) {
    if (to_string(v) == name) return v;
  }
  throw std::invalid_argument("unknown guidance strategy '" + std::string(name) + "'");
}

double border_weight(double d, double margin, double falloff) {
  const double x = falloff * (std::min(d / margin, 1.0) * 2.0 - 1.0);
  return 1.0 / (1.0 + std::exp(-x));
}

namespace {

struct Bilinear {
  std::array<int, 4> spatial{};
  std::array<double, 4> weight{};
};

Bilinear bilinear_taps(double u, double v, int width, int height, int stride) {
  // cell k covers input pixels [k*stride, (k+1)*stride)
  double fx = (u + 0.5) / stride - 0.5;
  double fy = (v + 0.5) / stride - 0.5;
  fx = std::clamp(fx, 0.0, static_cast<double>(width - 1));
  fy = std::clamp(fy, 0.0, static_cast<double>(height - 1));
  const int x0 = std::min(static_cast<int>(std::floor(fx)), std::max(0, width - 2));
  const int y0 = std::min(static_cast<int>(std::floor(fy)), std::max(0, height - 2));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double ax = width == 1 ? 0.0 : fx - x0;
  const double ay = height == 1 ? 0.0 : fy - y0;
  Bilinear b;
  b.spatial = {y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1};
  b.weight = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  return b;
}

}  // namespace

GatherPlan plan_backprojection(std::span<const Vec3> points, std::span<const Camera> cameras,
                               int map_width, int map_height, int stride,
                               const PlanOptions& opts) {
  if (opts.weighting == ViewWeighting::gaussian_depth && opts.depths.size() != cameras.size()) {
    throw std::invalid_argument("plan_backprojection: gaussian weighting needs one depth map per view");
  }
  GatherPlan plan;
  plan.outputs = static_cast<int>(points.size());
  plan.offsets.reserve(points.size() + 1);
  plan.view_count.assign(points.size(), 0);
  std::vector<std::pair<int, Bilinear>> hits;
  std::vector<double> view_w;
  const double inv2s2 = 1.0 / (2.0 * opts.sigma * opts.sigma);
  for (std::size_t o = 0; o < points.size(); ++o) {
    hits.clear();
    view_w.clear();
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      const Projection pr = project_point(points[o], cameras[i].K, cameras[i].pose);
      if (!pr.valid) continue;
      double w = 1.0;
      if (opts.weighting == ViewWeighting::gaussian_depth) {
        const double d = opts.depths[i].lookup(pr.u, pr.v);
        if (!(d > 0.0)) continue;
        w = std::exp(-(pr.z - d) * (pr.z - d) * inv2s2);
        if (w == 0.0) continue;
      } else if (opts.weighting == ViewWeighting::border) {
        w = border_weight(border_distance(pr.u, pr.v, cameras[i].K));
      }
      hits.emplace_back(static_cast<int>(i),
                        bilinear_taps(pr.u, pr.v, map_width, map_height, stride));
      view_w.push_back(w);
    }
    double total = 0.0;
    for (double w : view_w) total += w;
    if (total > 0.0) {
      for (std::size_t h = 0; h < hits.size(); ++h) {
        const double vw = view_w[h] / total;
        const auto& [view, b] = hits[h];
        for (int t = 0; t < 4; ++t) {
          if (b.weight[t] != 0.0) plan.taps.push_back({view, b.spatial[t], vw * b.weight[t]});
        }
      }
      plan.view_count[o] = static_cast<int>(hits.size());
    }
    plan.offsets.push_back(plan.taps.size());
  }
  return plan;
}

std::vector<double> apply_gather(const GatherPlan& plan, std::span<const double> maps,
                                 int channels, int spatial_size) {
  std::vector<double> out(static_cast<std::size_t>(channels) * plan.outputs, 0.0);
  const std::size_t per_batch = static_cast<std::size_t>(channels) * spatial_size;
#pragma omp parallel for schedule(static)
  for (long o = 0; o < plan.outputs; ++o) {
    for (std::size_t t = plan.offsets[o]; t < plan.offsets[o + 1]; ++t) {
      const GatherTap& tap = plan.taps[t];
      const double* base = maps.data() + tap.batch * per_batch + tap.spatial;
      for (int c = 0; c < channels; ++c) {
        out[static_cast<std::size_t>(c) * plan.outputs + o] += tap.weight * base[c * spatial_size];
      }
    }
  }
  return out;
}

std::vector<double> density_channel(std::span<const Vec3> points,
                                    std::span<const Camera> cameras,
                                    std::span<const DepthMap> depths, double sigma) {
  if (depths.size() != cameras.size()) {
    throw std::invalid_argument("density_channel: one depth map per view required");
  }
  std::vector<double> out(points.size(), 0.0);
  const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
#pragma omp parallel for schedule(static)
  for (long o = 0; o < static_cast<long>(points.size()); ++o) {
    double sum = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      const Projection pr = project_point(points[o], cameras[i].K, cameras[i].pose);
      if (!pr.valid) continue;
      ++n;
      const double d = depths[i].lookup(pr.u, pr.v);
      if (d > 0.0) sum += std::exp(-(pr.z - d) * (pr.z - d) * inv2s2);
    }
    out[o] = n ? sum / n : 0.0;
  }
  return out;
}

std::vector<Vec3> voxel_centers(const GridSpec& spec) {
  std::vector<Vec3> pts(spec.count());
  for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = spec.center(i);
  return pts;
}

namespace {

void check_maps(std::span<const FeatureMap2D> maps, std::size_t views) {
  if (maps.size() != views) {
    throw std::invalid_argument("back-projection: " + std::to_string(maps.size()) +
                                " feature maps for " + std::to_string(views) + " cameras");
  }
  for (const auto& m : maps) {
    if (m.width != maps[0].width || m.height != maps[0].height ||
        m.channels != maps[0].channels || m.stride != maps[0].stride) {
      throw std::invalid_argument("back-projection: feature maps differ in shape");
    }
  }
}

std::vector<double> stack_maps(std::span<const FeatureMap2D> maps) {
  std::vector<double> out;
  for (const auto& m : maps) out.insert(out.end(), m.data.begin(), m.data.end());
  return out;
}

}  // namespace

FeatureVolume backproject_dense(std::span<const FeatureMap2D> features,
                                std::span<const Camera> cameras, const GridSpec& spec,
                                const TsdfVolume* depth_volume,
                                const GuidanceStrategy& strategy,
                                std::span<const DepthMap> depths) {
  if (!strategy.valid()) throw std::invalid_argument("backproject_dense: invalid sigma");
  if (strategy.needs_depth_volume()) {
    if (!depth_volume) {
      throw std::invalid_argument("backproject_dense: strategy '" +
                                  std::string(to_string(strategy.variant)) +
                                  "' requires a depth volume");
    }
    if (!(depth_volume->spec == spec)) {
      throw std::invalid_argument("backproject_dense: depth volume grid differs from target grid");
    }
  }
  if (strategy.needs_depth_maps() && depths.size() != cameras.size()) {
    throw std::invalid_argument("backproject_dense: strategy '" +
                                std::string(to_string(strategy.variant)) +
                                "' requires one depth map per view");
  }
  const std::vector<Vec3> pts = voxel_centers(spec);
  const std::size_t n = pts.size();
  FeatureVolume out;
  out.spec = spec;
  out.validity.assign(n, 0);

  if (strategy.uses_image_features()) {
    check_maps(features, cameras.size());
    const auto& m0 = features.front();
    PlanOptions opts;
    if (strategy.gaussian_weighting()) {
      opts.weighting = ViewWeighting::gaussian_depth;
      opts.sigma = strategy.sigma_weight;
      opts.depths = depths;
    }
    const GatherPlan plan =
        plan_backprojection(pts, cameras, m0.width, m0.height, m0.stride, opts);
    out.data = apply_gather(plan, stack_maps(features), m0.channels, m0.width * m0.height);
    out.channels = m0.channels;
    out.validity = plan.view_count;
  } else {
    for (std::size_t o = 0; o < n; ++o) {
      for (const auto& cam : cameras) {
        if (project_point(pts[o], cam.K, cam.pose).valid) ++out.validity[o];
      }
    }
  }

  switch (strategy.variant) {
    case GuidanceVariant::tsdf:
    case GuidanceVariant::tsdf_plus_gaussian:
    case GuidanceVariant::depth_only:
      for (float v : depth_volume->values) out.data.push_back(v);
      ++out.channels;
      break;
    case GuidanceVariant::density: {
      const auto dens = density_channel(pts, cameras, depths, strategy.sigma_density);
      out.data.insert(out.data.end(), dens.begin(), dens.end());
      ++out.channels;
      break;
    }
    case GuidanceVariant::gaussian_weight:
    case GuidanceVariant::none:
      break;
  }
  return out;
}

PointFeatures point_backproject(std::span<const Vec3> points,
                                std::span<const FeatureMap2D> fine_features,
                                std::span<const Camera> cameras) {
  check_maps(fine_features, cameras.size());
  PointFeatures out;
  if (fine_features.empty()) {
    out.no_view.assign(points.size(), 1);
    return out;
  }
  const auto& m0 = fine_features.front();
  PlanOptions opts;
  opts.weighting = ViewWeighting::border;
  const GatherPlan plan =
      plan_backprojection(points, cameras, m0.width, m0.height, m0.stride, opts);
  out.channels = m0.channels;
  out.data = apply_gather(plan, stack_maps(fine_features), m0.channels, m0.width * m0.height);
  out.no_view.resize(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) out.no_view[i] = plan.view_count[i] == 0;
  return out;
}

}  // namespace dgrecon
