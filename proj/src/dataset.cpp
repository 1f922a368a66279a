#include "dgrecon/dataset.hpp"

#include "dgrecon/io_util.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

namespace dgrecon {

namespace pt = boost::property_tree;

namespace {

GridSpec region_between(const Vec3& lo, const Vec3& hi, double voxel) {
  GridSpec g;
  g.origin = lo;
  g.voxel_size = voxel;
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = static_cast<int>(std::ceil((hi[a] - lo[a]) / voxel - 1e-9)) + 1;
  }
  return g;
}

struct Footprint {
  double x, y, r;
};

bool fits(const std::vector<Footprint>& placed, const Footprint& f, double gap) {
  for (const auto& p : placed) {
    if (std::hypot(p.x - f.x, p.y - f.y) < p.r + f.r + gap) return false;
  }
  return true;
}

void add_random_boxes(SdfScene& s, std::vector<Footprint>& placed, int count, double reach,
                      std::mt19937_64& rng) {
  std::uniform_real_distribution<double> pos(-reach, reach);
  std::uniform_real_distribution<double> half(0.05, 0.16);
  std::uniform_real_distribution<double> height(0.05, 0.2);
  std::uniform_real_distribution<double> yaw(-std::numbers::pi / 4, std::numbers::pi / 4);
  for (int tries = 0; count > 0 && tries < 500; ++tries) {
    Box b;
    b.half_extents = Vec3(half(rng), half(rng), height(rng));
    b.center = Vec3(pos(rng), pos(rng), b.half_extents.z());
    b.yaw = yaw(rng);
    const Footprint f{b.center.x(), b.center.y(), b.half_extents.head<2>().norm()};
    if (std::abs(f.x) + f.r > reach + 0.1 || std::abs(f.y) + f.r > reach + 0.1) continue;
    if (!fits(placed, f, 0.1)) continue;
    placed.push_back(f);
    s.primitives.emplace_back(b);
    --count;
  }
}

}  // namespace

SceneDescription make_preset(const std::string& name, std::uint64_t seed) {
  SceneDescription d;
  d.preset = name;
  d.seed = seed;
  d.noise.seed = seed;
  std::mt19937_64 rng(seed);
  std::vector<Footprint> placed;
  const double vs = 0.04;
  if (name == "sphere") {
    d.scene.primitives.emplace_back(Sphere{Vec3(0, 0, 0.3), 0.25});
    d.region = region_between(Vec3(-0.46, -0.46, 0.02), Vec3(0.46, 0.46, 0.58), vs);
    // free-floating: one ring above and one below
    d.rings = {{12, 1.6, 0.7}, {12, 1.6, -0.7}};
  } else if (name == "boxes") {
    std::uniform_int_distribution<int> count(4, 6);
    add_random_boxes(d.scene, placed, count(rng), 0.42, rng);
    d.region = region_between(Vec3(-0.62, -0.62, -0.06), Vec3(0.62, 0.62, 0.54), vs);
  } else if (name == "thin") {
    std::uniform_real_distribution<double> jitter(-0.05, 0.05);
    std::uniform_real_distribution<double> yaw(-0.4, 0.4);
    const double tx = -0.15 + jitter(rng);
    const double ty = 0.1 + jitter(rng);
    const double top = 0.36 + jitter(rng);
    const Vec3 slab(0.24, 0.16, 0.015);
    d.scene.primitives.emplace_back(Box{Vec3(tx, ty, top), slab, 0.0});
    const double leg_h = (top - slab.z()) / 2;
    for (int sx : {-1, 1}) {
      for (int sy : {-1, 1}) {
        d.scene.primitives.emplace_back(Box{Vec3(tx + sx * (slab.x() - 0.03), ty + sy * (slab.y() - 0.03), leg_h),
                                            Vec3(0.018, 0.018, leg_h), 0.0});
      }
    }
    const double pole_h = 0.2 + std::abs(jitter(rng));
    d.scene.primitives.emplace_back(
        Box{Vec3(0.3 + jitter(rng), -0.3 + jitter(rng), pole_h), Vec3(0.015, 0.015, pole_h), 0.0});
    d.scene.primitives.emplace_back(
        Box{Vec3(0.25 + jitter(rng), 0.3 + jitter(rng), 0.15), Vec3(0.16, 0.012, 0.15), yaw(rng)});
    d.scene.primitives.emplace_back(
        Box{Vec3(-0.3 + jitter(rng), -0.3 + jitter(rng), 0.08), Vec3(0.1, 0.1, 0.08), yaw(rng)});
    d.region = region_between(Vec3(-0.62, -0.62, -0.06), Vec3(0.62, 0.62, 0.54), vs);
  } else if (name == "room") {
    d.scene.primitives.emplace_back(Plane{Vec3::UnitZ(), 0.0});
    std::uniform_int_distribution<int> count(3, 5);
    add_random_boxes(d.scene, placed, count(rng), 0.42, rng);
    d.region = region_between(Vec3(-0.9, -0.9, -0.1), Vec3(0.9, 0.9, 2.1), vs);
  } else {
    throw std::invalid_argument("unknown scene preset '" + name +
                                "' (expected sphere, boxes, thin or room)");
  }
  return d;
}

std::vector<Camera> scene_cameras(const SceneDescription& desc) {
  std::vector<Camera> cams;
  for (const auto& ring : desc.rings) {
    for (const auto& p : orbit_trajectory(desc.scene, ring.views, ring.radius, ring.height)) {
      cams.push_back({desc.intrinsics, p});
    }
  }
  return cams;
}

SceneData build_scene_data(const SceneDescription& desc) {
  if (!desc.scene.valid()) throw std::invalid_argument("build_scene_data: invalid scene");
  if (!desc.region.valid()) throw std::invalid_argument("build_scene_data: invalid region");
  SceneData d;
  d.desc = desc;
  d.cameras = scene_cameras(desc);
  const std::size_t n = d.cameras.size();
  d.gt_depths.resize(n);
  d.noisy_depths.resize(n);
  d.images.resize(n);
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    const Camera& c = d.cameras[i];
    d.gt_depths[i] = raycast_depth(desc.scene, c.K, c.pose);
    NoiseConfig nc = desc.noise;
    nc.seed = desc.noise.seed * 1000003ULL + static_cast<std::uint64_t>(i);
    d.noisy_depths[i] = perturb_depth(d.gt_depths[i], nc);
    d.images[i] = render_input(desc.scene, c.K, c.pose, nc.seed ^ 0x5bd1e995ULL,
                               desc.image_noise_sigma);
  }
  d.gt_samples = sample_ground_truth(desc.scene, desc.region, desc.tau);
  return d;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(const Vec3& v) { return fmt(v.x()) + " " + fmt(v.y()) + " " + fmt(v.z()); }

template <class T>
std::vector<T> numbers(const std::string& s, std::size_t n, const std::string& key) {
  std::istringstream in(s);
  std::vector<T> out;
  T v;
  while (in >> v) out.push_back(v);
  if (!in.eof() || out.size() != n) {
    throw std::runtime_error("scene description: '" + key + "' expects " + std::to_string(n) +
                             " numbers, got '" + s + "'");
  }
  return out;
}

Vec3 vec3(const pt::ptree& t, const std::string& key) {
  const auto v = numbers<double>(t.get<std::string>(key), 3, key);
  return {v[0], v[1], v[2]};
}

}  // namespace

std::string format_scene_description(const SceneDescription& d) {
  std::ostringstream o;
  o << "[scene]\npreset = " << d.preset << "\nseed = " << d.seed << "\ntau = " << fmt(d.tau)
    << "\ngt_mesh_spacing = " << fmt(d.gt_mesh_spacing) << "\n\n";
  o << "[region]\norigin = " << fmt(d.region.origin) << "\nvoxel_size = " << fmt(d.region.voxel_size)
    << "\ndims = " << d.region.dims[0] << ' ' << d.region.dims[1] << ' ' << d.region.dims[2]
    << "\n\n";
  const auto& K = d.intrinsics;
  o << "[camera]\nfx = " << fmt(K.fx) << "\nfy = " << fmt(K.fy) << "\ncx = " << fmt(K.cx)
    << "\ncy = " << fmt(K.cy) << "\nwidth = " << K.width << "\nheight = " << K.height << "\n\n";
  o << "[trajectory]\nrings = " << d.rings.size() << '\n';
  for (std::size_t i = 0; i < d.rings.size(); ++i) {
    o << "ring" << i << " = " << d.rings[i].views << ' ' << fmt(d.rings[i].radius) << ' '
      << fmt(d.rings[i].height) << '\n';
  }
  o << "\n[noise]\nmultiplicative_sigma = " << fmt(d.noise.multiplicative_sigma)
    << "\noutlier_rate = " << fmt(d.noise.outlier_rate)
    << "\noutlier_scale_range = " << fmt(d.noise.outlier_scale_range.first) << ' '
    << fmt(d.noise.outlier_scale_range.second) << "\nseed = " << d.noise.seed
    << "\nimage_sigma = " << fmt(d.image_noise_sigma) << "\n";
  for (std::size_t i = 0; i < d.scene.primitives.size(); ++i) {
    o << "\n[primitive" << i << "]\n";
    std::visit(
        [&](const auto& p) {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, Sphere>) {
            o << "type = sphere\ncenter = " << fmt(p.center) << "\nradius = " << fmt(p.radius)
              << '\n';
          } else if constexpr (std::is_same_v<T, Box>) {
            o << "type = box\ncenter = " << fmt(p.center) << "\nhalf_extents = "
              << fmt(p.half_extents) << "\nyaw = " << fmt(p.yaw) << '\n';
          } else {
            o << "type = plane\nnormal = " << fmt(p.normal) << "\noffset = " << fmt(p.offset)
              << '\n';
          }
        },
        d.scene.primitives[i]);
  }
  return o.str();
}

SceneDescription parse_scene_description(const std::string& text) {
  pt::ptree t;
  std::istringstream in(text);
  try {
    pt::read_ini(in, t);
  } catch (const pt::ini_parser_error& e) {
    throw std::runtime_error(std::string("scene description: ") + e.what());
  }
  try {
    SceneDescription d;
    d.preset = t.get<std::string>("scene.preset", "custom");
    d.seed = t.get<std::uint64_t>("scene.seed", 0);
    d.tau = t.get<double>("scene.tau");
    d.gt_mesh_spacing = t.get<double>("scene.gt_mesh_spacing", d.gt_mesh_spacing);
    d.region.origin = vec3(t, "region.origin");
    d.region.voxel_size = t.get<double>("region.voxel_size");
    const auto dims = numbers<int>(t.get<std::string>("region.dims"), 3, "region.dims");
    d.region.dims = {dims[0], dims[1], dims[2]};
    d.intrinsics.fx = t.get<double>("camera.fx");
    d.intrinsics.fy = t.get<double>("camera.fy");
    d.intrinsics.cx = t.get<double>("camera.cx");
    d.intrinsics.cy = t.get<double>("camera.cy");
    d.intrinsics.width = t.get<int>("camera.width");
    d.intrinsics.height = t.get<int>("camera.height");
    d.rings.clear();
    const int rings = t.get<int>("trajectory.rings");
    for (int i = 0; i < rings; ++i) {
      const std::string key = "trajectory.ring" + std::to_string(i);
      const auto v = numbers<double>(t.get<std::string>(key), 3, key);
      d.rings.push_back({static_cast<int>(v[0]), v[1], v[2]});
    }
    d.noise.multiplicative_sigma = t.get<double>("noise.multiplicative_sigma");
    d.noise.outlier_rate = t.get<double>("noise.outlier_rate");
    const auto r = numbers<double>(t.get<std::string>("noise.outlier_scale_range"), 2,
                                   "noise.outlier_scale_range");
    d.noise.outlier_scale_range = {r[0], r[1]};
    d.noise.seed = t.get<std::uint64_t>("noise.seed");
    d.image_noise_sigma = t.get<double>("noise.image_sigma");
    for (int i = 0;; ++i) {
      const auto node = t.get_child_optional("primitive" + std::to_string(i));
      if (!node) break;
      const std::string type = node->get<std::string>("type");
      if (type == "sphere") {
        d.scene.primitives.emplace_back(Sphere{vec3(*node, "center"), node->get<double>("radius")});
      } else if (type == "box") {
        d.scene.primitives.emplace_back(
            Box{vec3(*node, "center"), vec3(*node, "half_extents"), node->get<double>("yaw")});
      } else if (type == "plane") {
        d.scene.primitives.emplace_back(Plane{vec3(*node, "normal"), node->get<double>("offset")});
      } else {
        throw std::runtime_error("scene description: primitive" + std::to_string(i) +
                                 " has unknown type '" + type + "'");
      }
    }
    if (!d.scene.valid()) throw std::runtime_error("scene description: invalid primitive set");
    if (!d.region.valid()) throw std::runtime_error("scene description: invalid region");
    if (!d.intrinsics.valid()) throw std::runtime_error("scene description: invalid camera");
    if (!d.noise.valid()) throw std::runtime_error("scene description: invalid noise settings");
    return d;
  } catch (const pt::ptree_error& e) {
    throw std::runtime_error(std::string("scene description: ") + e.what());
  }
}

void write_scene_description(const SceneDescription& desc, const std::filesystem::path& path) {
  write_text_atomic(path, format_scene_description(desc));
}

SceneDescription read_scene_description(const std::filesystem::path& path) {
  try {
    return parse_scene_description(read_text_file(path));
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::string format_cameras(std::span<const Camera> cameras) {
  std::ostringstream o;
  o << "# K: row-major 3x3 intrinsics; T: row-major 4x4 world-from-camera pose\n";
  o << "frames " << cameras.size() << '\n';
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const auto& c = cameras[i];
    o << "frame " << i << ' ' << c.K.width << ' ' << c.K.height << "\nK";
    const Mat3 K = c.K.matrix();
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) o << ' ' << fmt(K(r, k));
    o << "\nT";
    const Mat4 T = c.pose.matrix();
    for (int r = 0; r < 4; ++r)
      for (int k = 0; k < 4; ++k) o << ' ' << fmt(T(r, k));
    o << '\n';
  }
  return o.str();
}

std::vector<Camera> parse_cameras(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& msg) -> std::runtime_error {
    return std::runtime_error("cameras file line " + std::to_string(lineno) + ": " + msg);
  };
  auto next = [&]() {
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line[0] != '#') return true;
    }
    return false;
  };
  if (!next()) throw fail("missing 'frames' header");
  std::istringstream hs(line);
  std::string tag;
  std::size_t n = 0;
  if (!(hs >> tag >> n) || tag != "frames") throw fail("expected 'frames <count>'");
  std::vector<Camera> out;
  for (std::size_t i = 0; i < n; ++i) {
    Camera c;
    if (!next()) throw fail("expected frame " + std::to_string(i));
    std::istringstream fs(line);
    std::size_t idx = 0;
    if (!(fs >> tag >> idx >> c.K.width >> c.K.height) || tag != "frame" || idx != i) {
      throw fail("expected 'frame " + std::to_string(i) + " <width> <height>'");
    }
    auto row = [&](const char* want, std::size_t count) {
      if (!next()) throw fail(std::string("expected '") + want + "' row");
      std::istringstream rs(line);
      std::string t;
      rs >> t;
      if (t != want) throw fail(std::string("expected '") + want + "' row");
      std::vector<double> v;
      double x;
      while (rs >> x) v.push_back(x);
      if (v.size() != count || !rs.eof()) {
        throw fail(std::string("'") + want + "' needs " + std::to_string(count) + " numbers");
      }
      return v;
    };
    const auto k = row("K", 9);
    c.K.fx = k[0];
    c.K.cx = k[2];
    c.K.fy = k[4];
    c.K.cy = k[5];
    if (k[1] != 0 || k[3] != 0 || k[6] != 0 || k[7] != 0 || k[8] != 1) {
      throw fail("intrinsics must be [fx 0 cx; 0 fy cy; 0 0 1]");
    }
    if (!c.K.valid()) throw fail("invalid intrinsics");
    const auto tv = row("T", 16);
    Mat4 T;
    for (int r = 0; r < 4; ++r)
      for (int q = 0; q < 4; ++q) T(r, q) = tv[r * 4 + q];
    c.pose = Pose::from_matrix(T);
    if (!c.pose.valid(1e-6)) throw fail("pose rotation is not orthonormal");
    out.push_back(c);
  }
  return out;
}

void write_depth(const DepthMap& d, const std::filesystem::path& path) {
  std::vector<char> bytes(d.values.size() * sizeof(float));
  std::memcpy(bytes.data(), d.values.data(), bytes.size());
  write_file_atomic(path, bytes);
}

DepthMap read_depth(const std::filesystem::path& path, int width, int height) {
  auto bytes = read_file(path);
  const std::size_t want = static_cast<std::size_t>(width) * height * sizeof(float);
  if (bytes.size() != want) {
    throw ParseError(path.string() + ": depth file has " + std::to_string(bytes.size()) +
                         " bytes, expected " + std::to_string(want),
                     std::min(bytes.size(), want));
  }
  DepthMap d(width, height);
  std::memcpy(d.values.data(), bytes.data(), want);
  return d;
}

void write_image(const RenderedInput& img, const std::filesystem::path& path) {
  std::vector<char> bytes(img.data.size() * sizeof(float));
  std::memcpy(bytes.data(), img.data.data(), bytes.size());
  write_file_atomic(path, bytes);
}

RenderedInput read_image(const std::filesystem::path& path, int width, int height) {
  auto bytes = read_file(path);
  const std::size_t want =
      static_cast<std::size_t>(RenderedInput::kChannels) * width * height * sizeof(float);
  if (bytes.size() != want) {
    throw ParseError(path.string() + ": image file has " + std::to_string(bytes.size()) +
                         " bytes, expected " + std::to_string(want),
                     std::min(bytes.size(), want));
  }
  RenderedInput img;
  img.width = width;
  img.height = height;
  img.data.resize(want / sizeof(float));
  std::memcpy(img.data.data(), bytes.data(), want);
  return img;
}

std::string frame_file(int i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d.f32", i);
  return buf;
}

std::vector<std::string> write_scene_dir(const SceneData& data, const std::filesystem::path& dir) {
  std::vector<std::string> files{"scene.ini", "cameras.txt"};
  write_scene_description(data.desc, dir / "scene.ini");
  write_text_atomic(dir / "cameras.txt", format_cameras(data.cameras));
  for (std::size_t i = 0; i < data.cameras.size(); ++i) {
    const std::string f = frame_file(static_cast<int>(i));
    write_depth(data.noisy_depths[i], dir / "depth" / f);
    write_depth(data.gt_depths[i], dir / "gt_depth" / f);
    write_image(data.images[i], dir / "images" / f);
    files.push_back("depth/" + f);
    files.push_back("gt_depth/" + f);
    files.push_back("images/" + f);
  }
  return files;
}

SceneData read_scene_dir(const std::filesystem::path& dir) {
  SceneData d;
  d.desc = read_scene_description(dir / "scene.ini");
  d.cameras = parse_cameras(read_text_file(dir / "cameras.txt"));
  for (std::size_t i = 0; i < d.cameras.size(); ++i) {
    const std::string f = frame_file(static_cast<int>(i));
    const Intrinsics& K = d.cameras[i].K;
    d.noisy_depths.push_back(read_depth(dir / "depth" / f, K.width, K.height));
    d.gt_depths.push_back(read_depth(dir / "gt_depth" / f, K.width, K.height));
    d.images.push_back(read_image(dir / "images" / f, K.width, K.height));
  }
  d.gt_samples = sample_ground_truth(d.desc.scene, d.desc.region, d.desc.tau);
  return d;
}

}  // namespace dgrecon
