#include "dgrecon/evaluation.hpp"

#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace dgrecon {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

nlohmann::json to_json(const Metrics3D& m) {
  return {{"acc_cm", m.acc},          {"comp_cm", m.comp},
          {"chamfer_cm", m.chamfer},  {"prec", m.prec},
          {"rec", m.rec},             {"f1", m.f1},
          {"threshold_m", m.threshold}, {"pred_samples", m.pred_samples},
          {"trimmed_samples", m.trimmed_samples}, {"gt_samples", m.gt_samples}};
}

nlohmann::json to_json(const Metrics2D& m) {
  auto num = [](double v) { return std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v); };
  return {{"l1_cm", num(m.l1)},
          {"absrel", num(m.absrel)},
          {"sqrel", num(m.sqrel)},
          {"delta_105", num(m.delta_105)},
          {"delta_125", num(m.delta_125)},
          {"completeness", m.completeness},
          {"frames_with_overlap", m.frames_with_overlap}};
}

bool VisibilityVolume::observed(const Vec3& p) const {
  const Vec3 g = spec.to_grid(p);
  std::array<int, 3> c{};
  for (int a = 0; a < 3; ++a) {
    c[a] = static_cast<int>(std::lround(g[a]));
    if (c[a] < 0 || c[a] >= spec.dims[a]) return false;
  }
  return flags[spec.index(c[0], c[1], c[2])] != 0;
}

std::size_t VisibilityVolume::observed_count() const {
  return static_cast<std::size_t>(std::count(flags.begin(), flags.end(), 1));
}

VisibilityVolume compute_visibility(std::span<const DepthMap> gt_depths,
                                    std::span<const Camera> cameras, const GridSpec& spec,
                                    double tau) {
  if (gt_depths.size() != cameras.size()) {
    throw std::invalid_argument("compute_visibility: one depth map per camera required");
  }
  VisibilityVolume vis{spec, std::vector<unsigned char>(spec.count(), 0)};
#pragma omp parallel for schedule(static)
  for (long v = 0; v < static_cast<long>(spec.count()); ++v) {
    const Vec3 p = spec.center(static_cast<std::size_t>(v));
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      const Projection pr = project_point(p, cameras[i].K, cameras[i].pose);
      if (!pr.valid) continue;
      const double d = gt_depths[i].lookup(pr.u, pr.v);
      // a miss sees through to infinity
      if (!(d > 0.0) || pr.z < d + tau) {
        vis.flags[v] = 1;
        break;
      }
    }
  }
  return vis;
}

VisibilityVolume full_visibility(const GridSpec& spec) {
  return {spec, std::vector<unsigned char>(spec.count(), 1)};
}

std::vector<Vec3> sample_surface(const TriangleMesh& mesh, double density, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(mesh.area() * density) + mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    const double expected = 0.5 * (b - a).cross(c - a).norm() * density;
    auto n = static_cast<long>(std::floor(expected));
    if (u01(rng) < expected - n) ++n;
    for (long i = 0; i < n; ++i) {
      double r1 = u01(rng);
      double r2 = u01(rng);
      if (r1 + r2 > 1.0) {
        r1 = 1.0 - r1;
        r2 = 1.0 - r2;
      }
      out.push_back(a + r1 * (b - a) + r2 * (c - a));
    }
  }
  return out;
}

namespace {

using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;

}  // namespace

std::vector<double> nearest_distances(std::span<const Vec3> queries, std::span<const Vec3> targets) {
  if (targets.empty()) throw std::invalid_argument("nearest_distances: no target points");
  std::vector<BPoint> pts;
  pts.reserve(targets.size());
  for (const auto& p : targets) pts.emplace_back(p.x(), p.y(), p.z());
  const bgi::rtree<BPoint, bgi::rstar<16>> tree(pts.begin(), pts.end());
  std::vector<double> d(queries.size());
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(queries.size()); ++i) {
    const BPoint q(queries[i].x(), queries[i].y(), queries[i].z());
    BPoint hit;
    tree.query(bgi::nearest(q, 1), &hit);
    d[i] = bg::distance(q, hit);
  }
  return d;
}

Metrics3D metrics_3d(const TriangleMesh& pred, const TriangleMesh& gt, const VisibilityVolume* vis,
                     const MetricsOptions& opts) {
  if (pred.empty() || gt.empty()) {
    throw std::invalid_argument("metrics_3d: metrics are undefined for an empty mesh");
  }
  // one seed for both sides: identical meshes give identical samples
  const auto ps = sample_surface(pred, opts.density, opts.seed);
  const auto gs = sample_surface(gt, opts.density, opts.seed);
  if (ps.empty() || gs.empty()) {
    throw std::invalid_argument("metrics_3d: a mesh has zero sampled area");
  }
  std::vector<Vec3> trimmed;
  for (const auto& p : ps) {
    if (!vis || vis->observed(p)) trimmed.push_back(p);
  }
  Metrics3D m;
  m.threshold = opts.threshold;
  m.pred_samples = ps.size();
  m.trimmed_samples = trimmed.size();
  m.gt_samples = gs.size();

  const auto d_comp = nearest_distances(gs, ps);
  m.comp = 100.0 * std::accumulate(d_comp.begin(), d_comp.end(), 0.0) / d_comp.size();
  m.rec = 100.0 * std::count_if(d_comp.begin(), d_comp.end(),
                                [&](double d) { return d < opts.threshold; }) /
          static_cast<double>(d_comp.size());
  if (trimmed.empty()) {
    m.acc = std::numeric_limits<double>::quiet_NaN();
    m.prec = 0.0;
  } else {
    const auto d_acc = nearest_distances(trimmed, gs);
    m.acc = 100.0 * std::accumulate(d_acc.begin(), d_acc.end(), 0.0) / d_acc.size();
    m.prec = 100.0 * std::count_if(d_acc.begin(), d_acc.end(),
                                   [&](double d) { return d < opts.threshold; }) /
             static_cast<double>(d_acc.size());
  }
  m.chamfer = (m.acc + m.comp) / 2.0;
  m.f1 = m.prec + m.rec > 0.0 ? 2.0 * m.prec * m.rec / (m.prec + m.rec) : 0.0;
  return m;
}

struct MeshRenderer::Impl {
  struct Node {
    Eigen::Vector3d lo, hi;
    int left = -1;   // child index, or -1 for a leaf
    int right = -1;
    int first = 0;   // leaf triangle range in `order`
    int count = 0;
  };
  std::vector<Vec3> a, e1, e2;
  std::vector<int> order;
  std::vector<Node> nodes;

  explicit Impl(const TriangleMesh& mesh) {
    const int n = static_cast<int>(mesh.triangles.size());
    a.resize(n);
    e1.resize(n);
    e2.resize(n);
    std::vector<Vec3> centroid(n);
    for (int i = 0; i < n; ++i) {
      const auto& t = mesh.triangles[i];
      a[i] = mesh.vertices[t[0]];
      e1[i] = mesh.vertices[t[1]] - a[i];
      e2[i] = mesh.vertices[t[2]] - a[i];
      centroid[i] = a[i] + (e1[i] + e2[i]) / 3.0;
    }
    order.resize(n);
    std::iota(order.begin(), order.end(), 0);
    if (n > 0) build(0, n, centroid);
  }

  int build(int first, int count, const std::vector<Vec3>& centroid) {
    Node node;
    node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    for (int k = first; k < first + count; ++k) {
      const int i = order[k];
      for (const Vec3& p : {a[i], Vec3(a[i] + e1[i]), Vec3(a[i] + e2[i])}) {
        node.lo = node.lo.cwiseMin(p);
        node.hi = node.hi.cwiseMax(p);
      }
    }
    const int id = static_cast<int>(nodes.size());
    nodes.push_back(node);
    if (count <= 4) {
      nodes[id].first = first;
      nodes[id].count = count;
      return id;
    }
    int axis = 0;
    (node.hi - node.lo).maxCoeff(&axis);
    const int mid = first + count / 2;
    std::nth_element(order.begin() + first, order.begin() + mid, order.begin() + first + count,
                     [&](int x, int y) { return centroid[x][axis] < centroid[y][axis]; });
    const int l = build(first, mid - first, centroid);
    const int r = build(mid, first + count - mid, centroid);
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
  }

  static bool slab(const Node& n, const Vec3& o, const Vec3& inv, double tmax) {
    double t0 = 0.0;
    double t1 = tmax;
    for (int k = 0; k < 3; ++k) {
      double ta = (n.lo[k] - o[k]) * inv[k];
      double tb = (n.hi[k] - o[k]) * inv[k];
      if (ta > tb) std::swap(ta, tb);
      t0 = std::max(t0, ta);
      t1 = std::min(t1, tb);
      if (t0 > t1) return false;
    }
    return true;
  }

  // Moller-Trumbore; returns the ray parameter or +inf.
  double intersect(int i, const Vec3& o, const Vec3& d) const {
    constexpr double kEps = 1e-12;
    const Vec3 p = d.cross(e2[i]);
    const double det = e1[i].dot(p);
    if (std::abs(det) < kEps) return std::numeric_limits<double>::infinity();
    const double inv = 1.0 / det;
    const Vec3 s = o - a[i];
    const double u = s.dot(p) * inv;
    if (u < 0.0 || u > 1.0) return std::numeric_limits<double>::infinity();
    const Vec3 q = s.cross(e1[i]);
    const double v = d.dot(q) * inv;
    if (v < 0.0 || u + v > 1.0) return std::numeric_limits<double>::infinity();
    const double t = e2[i].dot(q) * inv;
    return t > kEps ? t : std::numeric_limits<double>::infinity();
  }

  double cast(const Vec3& o, const Vec3& d) const {
    double best = std::numeric_limits<double>::infinity();
    if (nodes.empty()) return best;
    const Vec3 inv(1.0 / d.x(), 1.0 / d.y(), 1.0 / d.z());
    int stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& n = nodes[stack[--top]];
      if (!slab(n, o, inv, best)) continue;
      if (n.left < 0) {
        for (int k = n.first; k < n.first + n.count; ++k) best = std::min(best, intersect(order[k], o, d));
      } else {
        stack[top++] = n.left;
        stack[top++] = n.right;
      }
    }
    return best;
  }
};

MeshRenderer::MeshRenderer(const TriangleMesh& mesh) : impl_(std::make_unique<Impl>(mesh)) {}
MeshRenderer::~MeshRenderer() = default;
MeshRenderer::MeshRenderer(MeshRenderer&&) noexcept = default;
MeshRenderer& MeshRenderer::operator=(MeshRenderer&&) noexcept = default;

DepthMap MeshRenderer::render(const Intrinsics& K, const Pose& pose) const {
  DepthMap out(K.width, K.height);
#pragma omp parallel for schedule(dynamic)
  for (int y = 0; y < K.height; ++y) {
    for (int x = 0; x < K.width; ++x) {
      // unnormalized so that the ray parameter equals z-depth
      const Vec3 dc((x - K.cx) / K.fx, (y - K.cy) / K.fy, 1.0);
      const double t = impl_->cast(pose.translation, pose.rotation * dc);
      if (std::isfinite(t)) out.at(x, y) = static_cast<float>(t);
    }
  }
  return out;
}

DepthMap render_depth(const TriangleMesh& mesh, const Intrinsics& K, const Pose& pose) {
  return MeshRenderer(mesh).render(K, pose);
}

double delta_percent(const DepthMap& r, const DepthMap& g, double t) {
  long n = 0;
  long hit = 0;
  for (std::size_t i = 0; i < g.values.size(); ++i) {
    const double d = g.values[i];
    const double p = r.values[i];
    if (!(d > 0.0) || !(p > 0.0)) continue;
    ++n;
    if (std::max(d / p, p / d) < t) ++hit;
  }
  return n ? 100.0 * hit / n : std::numeric_limits<double>::quiet_NaN();
}

Metrics2D metrics_2d(std::span<const DepthMap> rendered, std::span<const DepthMap> gt) {
  if (rendered.size() != gt.size()) {
    throw std::invalid_argument("metrics_2d: " + std::to_string(rendered.size()) +
                                " rendered vs " + std::to_string(gt.size()) + " GT frames");
  }
  Metrics2D m;
  double l1 = 0, absrel = 0, sqrel = 0, d105 = 0, d125 = 0, comp = 0;
  int comp_frames = 0;
  for (std::size_t f = 0; f < gt.size(); ++f) {
    const DepthMap& r = rendered[f];
    const DepthMap& g = gt[f];
    if (r.width != g.width || r.height != g.height) {
      throw std::invalid_argument("metrics_2d: frame " + std::to_string(f) + " sizes differ");
    }
    long valid_gt = 0;
    long n = 0;
    double s_l1 = 0, s_abs = 0, s_sq = 0;
    long h105 = 0, h125 = 0;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const double d = g.values[i];
      if (!(d > 0.0)) continue;
      ++valid_gt;
      const double p = r.values[i];
      if (!(p > 0.0)) continue;
      ++n;
      const double e = std::abs(d - p);
      s_l1 += e;
      s_abs += e / d;
      s_sq += e * e / d;
      const double ratio = std::max(d / p, p / d);
      h105 += ratio < 1.05;
      h125 += ratio < 1.25;
    }
    if (valid_gt > 0) {
      comp += 100.0 * n / valid_gt;
      ++comp_frames;
    }
    if (n == 0) continue;
    ++m.frames_with_overlap;
    l1 += 100.0 * s_l1 / n;
    absrel += s_abs / n;
    sqrel += s_sq / n;
    d105 += 100.0 * h105 / n;
    d125 += 100.0 * h125 / n;
  }
  m.completeness = comp_frames ? comp / comp_frames : 0.0;
  if (m.frames_with_overlap > 0) {
    const double k = m.frames_with_overlap;
    m.l1 = l1 / k;
    m.absrel = absrel / k;
    m.sqrel = sqrel / k;
    m.delta_105 = d105 / k;
    m.delta_125 = d125 / k;
  }
  return m;
}

TriangleMesh ground_truth_mesh(const SdfScene& scene, const GridSpec& region, double spacing) {
  if (!(spacing > 0.0)) throw std::invalid_argument("ground_truth_mesh: spacing must be positive");
  GridSpec g;
  g.voxel_size = spacing;
  g.origin = region.origin - Vec3::Constant(region.voxel_size / 2);
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = static_cast<int>(std::lround(region.dims[a] * region.voxel_size / spacing)) + 1;
  }
  const double band = 4.0 * spacing;
  TsdfVolume vol(g, band);
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(g.count()); ++i) {
    vol.values[i] = static_cast<float>(sdf_eval(scene, g.center(static_cast<std::size_t>(i)), band));
    vol.weights[i] = 1.0f;
  }
  return marching_cubes(vol);
}

}  // namespace dgrecon
