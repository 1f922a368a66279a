#include "dgrecon/scene.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace dgrecon {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double box_sdf(const Box& b, const Vec3& p) {
  const double c = std::cos(b.yaw);
  const double s = std::sin(b.yaw);
  const Vec3 d = p - b.center;
  // world -> box frame (inverse yaw)
  const Vec3 local(c * d.x() + s * d.y(), -s * d.x() + c * d.y(), d.z());
  const Vec3 q = local.cwiseAbs() - b.half_extents;
  const double outside = q.cwiseMax(0.0).norm();
  const double inside = std::min(q.maxCoeff(), 0.0);
  return outside + inside;
}

}  // namespace

double primitive_sdf(const Primitive& prim, const Vec3& p) {
  return std::visit(
      overloaded{
          [&](const Sphere& s) { return (p - s.center).norm() - s.radius; },
          [&](const Box& b) { return box_sdf(b, p); },
          [&](const Plane& pl) { return pl.normal.normalized().dot(p) - pl.offset; },
      },
      prim);
}

bool SdfScene::valid() const {
  if (primitives.empty()) return false;
  for (const auto& prim : primitives) {
    const bool ok = std::visit(
        overloaded{
            [](const Sphere& s) { return s.radius > 0; },
            [](const Box& b) { return (b.half_extents.array() > 0).all(); },
            [](const Plane& pl) { return pl.normal.norm() > 0; },
        },
        prim);
    if (!ok) return false;
  }
  return true;
}

Vec3 SdfScene::centroid() const {
  Vec3 sum = Vec3::Zero();
  int n = 0;
  for (const auto& prim : primitives) {
    if (const auto* s = std::get_if<Sphere>(&prim)) {
      sum += s->center;
      ++n;
    } else if (const auto* b = std::get_if<Box>(&prim)) {
      sum += b->center;
      ++n;
    }
  }
  return n ? Vec3(sum / n) : Vec3::Zero();
}

double SdfScene::bounding_radius() const {
  const Vec3 c = centroid();
  double r = 0.0;
  for (const auto& prim : primitives) {
    if (const auto* s = std::get_if<Sphere>(&prim)) {
      r = std::max(r, (s->center - c).norm() + s->radius);
    } else if (const auto* b = std::get_if<Box>(&prim)) {
      r = std::max(r, (b->center - c).norm() + b->half_extents.norm());
    }
  }
  return r;
}

double sdf_eval(const SdfScene& scene, const Vec3& p) {
  double d = std::numeric_limits<double>::infinity();
  for (const auto& prim : scene.primitives) d = std::min(d, primitive_sdf(prim, p));
  return d;
}

double sdf_eval(const SdfScene& scene, const Vec3& p, double tau) {
  return std::clamp(sdf_eval(scene, p) / tau, -1.0, 1.0);
}

std::size_t nearest_primitive(const SdfScene& scene, const Vec3& p) {
  std::size_t best = 0;
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < scene.primitives.size(); ++i) {
    const double di = primitive_sdf(scene.primitives[i], p);
    if (di < d) {
      d = di;
      best = i;
    }
  }
  return best;
}

std::size_t DepthMap::valid_count() const {
  return static_cast<std::size_t>(
      std::count_if(values.begin(), values.end(), [](float v) { return v > 0.0f; }));
}

float DepthMap::lookup(double u, double v) const {
  const long x = std::lround(u);
  const long y = std::lround(v);
  if (x < 0 || y < 0 || x >= width || y >= height) return 0.0f;
  return at(static_cast<int>(x), static_cast<int>(y));
}

namespace {

struct RayHit {
  bool hit = false;
  double t = 0.0;
};

RayHit sphere_trace(const SdfScene& scene, const Vec3& origin, const Vec3& dir,
                    const RaycastOptions& opts) {
  double t = 0.0;
  for (int step = 0; step < opts.max_steps; ++step) {
    const double d = sdf_eval(scene, origin + t * dir);
    if (std::abs(d) < opts.hit_epsilon) return {true, t};
    t += opts.step_factor * d;
    if (t > opts.max_distance || t < 0.0) break;
  }
  return {};
}

Vec3 pixel_ray(const Intrinsics& K, const Pose& pose, int x, int y) {
  const Vec3 d_cam((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
  return pose.rotation * d_cam;
}

}  // namespace

DepthMap raycast_depth(const SdfScene& scene, const Intrinsics& K, const Pose& pose,
                       const RaycastOptions& opts) {
  DepthMap out(K.width, K.height);
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Vec3 ray = pixel_ray(K, pose, x, y);
      const double len = ray.norm();
      const RayHit h = sphere_trace(scene, pose.translation, ray / len, opts);
      // ray has unit camera-z component, so z-depth = t / len
      if (h.hit) out.at(x, y) = static_cast<float>(h.t / len);
    }
  }
  return out;
}

std::vector<Pose> orbit_trajectory(const SdfScene& scene, int n_views, double radius,
                                   double height) {
  if (n_views < 2) throw std::invalid_argument("orbit_trajectory: need at least 2 views");
  const double br = scene.bounding_radius();
  if (radius < br) {
    throw std::invalid_argument("orbit_trajectory: radius " + std::to_string(radius) +
                                " is inside the scene bounding radius " +
                                std::to_string(br));
  }
  const Vec3 c = scene.centroid();
  std::vector<Pose> poses;
  poses.reserve(n_views);
  for (int i = 0; i < n_views; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n_views;
    const Vec3 eye = c + Vec3(radius * std::cos(a), radius * std::sin(a), height);
    poses.push_back(look_at(eye, c));
  }
  return poses;
}

bool NoiseConfig::valid() const {
  return multiplicative_sigma >= 0 && outlier_rate >= 0 && outlier_rate <= 1 &&
         outlier_scale_range.first <= outlier_scale_range.second;
}

DepthMap perturb_depth(const DepthMap& depth, const NoiseConfig& cfg) {
  if (!cfg.valid()) throw std::invalid_argument("perturb_depth: invalid noise config");
  DepthMap out = depth;
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto [lo, hi] = cfg.outlier_scale_range;
  for (float& v : out.values) {
    // draw the same number of variates per pixel so the stream stays aligned
    const double n = gauss(rng);
    const double pick = unit(rng);
    const double scale = lo + (hi - lo) * unit(rng);
    if (!(v > 0.0f)) continue;
    double d = v * (1.0 + cfg.multiplicative_sigma * n);
    if (pick < cfg.outlier_rate) d *= scale;
    v = d > 0.0 ? static_cast<float>(d) : 0.0f;
  }
  return out;
}

std::vector<GtSample> sample_ground_truth(const SdfScene& scene, const GridSpec& region,
                                          double tau) {
  if (!(tau > 0)) throw std::invalid_argument("sample_ground_truth: tau must be positive");
  std::vector<GtSample> out(region.count());
#pragma omp parallel for
  for (long idx = 0; idx < static_cast<long>(out.size()); ++idx) {
    const Vec3 x = region.center(static_cast<std::size_t>(idx));
    out[idx] = {x, sdf_eval(scene, x, tau)};
  }
  return out;
}

Vec3 sdf_normal(const SdfScene& scene, const Vec3& p, double h) {
  Vec3 g;
  for (int a = 0; a < 3; ++a) {
    Vec3 e = Vec3::Zero();
    e[a] = h;
    g[a] = sdf_eval(scene, p + e) - sdf_eval(scene, p - e);
  }
  const double n = g.norm();
  return n > 0 ? Vec3(g / n) : Vec3::UnitZ();
}

RenderedInput render_input(const SdfScene& scene, const Intrinsics& K, const Pose& pose,
                           std::uint64_t noise_seed, double noise_sigma) {
  RenderedInput img;
  img.width = K.width;
  img.height = K.height;
  const std::size_t plane = static_cast<std::size_t>(K.width) * K.height;
  img.data.assign(RenderedInput::kChannels * plane, 0.0f);
  const RaycastOptions opts;
#pragma omp parallel for schedule(dynamic, 4)
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      const Vec3 ray = pixel_ray(K, pose, x, y);
      const Vec3 dir = ray.normalized();
      const RayHit h = sphere_trace(scene, pose.translation, dir, opts);
      if (!h.hit) continue;
      const Vec3 p = pose.translation + h.t * dir;
      const std::size_t px = static_cast<std::size_t>(y) * K.width + x;
      img.data[px] = static_cast<float>(std::abs(sdf_normal(scene, p).dot(dir)));
      const bool is_plane =
          std::holds_alternative<Plane>(scene.primitives[nearest_primitive(scene, p)]);
      img.data[plane + px] = is_plane ? 0.0f : 1.0f;
    }
  }
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> gauss(0.0, noise_sigma);
  for (std::size_t px = 0; px < plane; ++px) {
    img.data[2 * plane + px] = static_cast<float>(gauss(rng));
  }
  return img;
}

}  // namespace dgrecon
