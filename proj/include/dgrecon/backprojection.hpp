#pragma once

#include "dgrecon/geometry.hpp"
#include "dgrecon/scene.hpp"
#include "dgrecon/tsdf.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dgrecon {

/// Channel-major 2D feature map (C,H,W). One cell covers `stride` x `stride`
/// input pixels.
struct FeatureMap2D {
  int width = 0;
  int height = 0;
  int channels = 0;
  int stride = 1;
  std::vector<double> data;

  FeatureMap2D() = default;
  FeatureMap2D(int w, int h, int c, int s)
      : width(w), height(h), channels(c), stride(s),
        data(static_cast<std::size_t>(w) * h * c, 0.0) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
};

/// Channel-major voxel features (data[c * spec.count() + voxel]).
struct FeatureVolume {
  GridSpec spec;
  int channels = 0;
  std::vector<double> data;
  /// Number of views that contributed to each voxel.
  std::vector<int> validity;

  double at(int c, std::size_t voxel) const { return data[c * spec.count() + voxel]; }
};

enum class GuidanceVariant { tsdf, density, gaussian_weight, tsdf_plus_gaussian, none, depth_only };

std::string_view to_string(GuidanceVariant v);
GuidanceVariant parse_guidance(std::string_view name);

struct GuidanceStrategy {
  GuidanceVariant variant = GuidanceVariant::tsdf;
  double sigma_density = 0.06;
  double sigma_weight = 0.06;

  bool uses_image_features() const { return variant != GuidanceVariant::depth_only; }
  bool gaussian_weighting() const {
    return variant == GuidanceVariant::gaussian_weight ||
           variant == GuidanceVariant::tsdf_plus_gaussian;
  }
  bool needs_depth_volume() const {
    return variant == GuidanceVariant::tsdf || variant == GuidanceVariant::tsdf_plus_gaussian ||
           variant == GuidanceVariant::depth_only;
  }
  bool needs_depth_maps() const {
    return variant == GuidanceVariant::density || gaussian_weighting();
  }
  /// Channels appended after (or instead of) the image features.
  int guidance_channels() const {
    return variant == GuidanceVariant::none || variant == GuidanceVariant::gaussian_weight ? 0
                                                                                           : 1;
  }
  int output_channels(int image_channels) const {
    return (uses_image_features() ? image_channels : 0) + guidance_channels();
  }
  bool valid() const { return sigma_density > 0 && sigma_weight > 0; }
};

/// Down-weights samples near the image border: sigmoid(l * (min(d/m, 1) * 2 - 1)).
double border_weight(double d, double margin = 20.0, double falloff = 6.0);

/// Sparse linear map from stacked 2D feature maps (B,C,H,W) to C x outputs.
/// Taps for output o live in [offsets[o], offsets[o+1]).
struct GatherTap {
  int batch = 0;
  int spatial = 0;  // y * width + x
  double weight = 0.0;
};

struct GatherPlan {
  int outputs = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<GatherTap> taps;
  std::vector<int> view_count;
};

enum class ViewWeighting { mean, gaussian_depth, border };

struct PlanOptions {
  ViewWeighting weighting = ViewWeighting::mean;
  double sigma = 0.06;                      // gaussian_depth
  std::span<const DepthMap> depths = {};     // gaussian_depth
};

/// Builds the projection/bilinear gather for `points` into per-view feature
/// maps of size map_width x map_height at `stride`.
GatherPlan plan_backprojection(std::span<const Vec3> points, std::span<const Camera> cameras,
                               int map_width, int map_height, int stride,
                               const PlanOptions& opts = {});

/// out[c * plan.outputs + o] = sum of taps over `maps` (B,C,H,W contiguous).
std::vector<double> apply_gather(const GatherPlan& plan, std::span<const double> maps,
                                 int channels, int spatial_size);

/// Mean over valid views of exp(-(z - D(u))^2 / (2 sigma^2)).
std::vector<double> density_channel(std::span<const Vec3> points,
                                    std::span<const Camera> cameras,
                                    std::span<const DepthMap> depths, double sigma);

std::vector<Vec3> voxel_centers(const GridSpec& spec);

/// Dense voxel back-projection with depth guidance.
FeatureVolume backproject_dense(std::span<const FeatureMap2D> features,
                                std::span<const Camera> cameras, const GridSpec& spec,
                                const TsdfVolume* depth_volume,
                                const GuidanceStrategy& strategy,
                                std::span<const DepthMap> depths = {});

struct PointFeatures {
  int channels = 0;
  std::vector<double> data;        // (C, P)
  std::vector<unsigned char> no_view;
};

/// Border-weighted mean of fine features sampled at arbitrary points.
PointFeatures point_backproject(std::span<const Vec3> points,
                                std::span<const FeatureMap2D> fine_features,
                                std::span<const Camera> cameras);

}  // namespace dgrecon
