#include "dgrecon/mesh.hpp"

#include "dgrecon/io_util.hpp"
#include "detail/mc_tables.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace dgrecon {

bool TriangleMesh::valid() const {
  if (!normals.empty() && normals.size() != vertices.size()) return false;
  const int n = static_cast<int>(vertices.size());
  for (const auto& t : triangles) {
    for (int v : t) {
      if (v < 0 || v >= n) return false;
    }
  }
  return true;
}

double TriangleMesh::area() const {
  double a = 0.0;
  for (const auto& t : triangles) {
    a += 0.5 * (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]).norm();
  }
  return a;
}

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1},
                               {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

using EdgeKey = std::uint64_t;

}  // namespace

TriangleMesh marching_cubes(const TsdfVolume& vol, const MarchingCubesOptions& opts) {
  const GridSpec& g = vol.spec;
  const auto [nx, ny, nz] = g.dims;
  TriangleMesh mesh;
  if (nx < 2 || ny < 2 || nz < 2) return mesh;
  const bool have_weights = vol.weights.size() == vol.values.size();

  // Each cell contributes triangles as triples of edge keys (lower node * 3 + axis).
  std::vector<std::vector<std::array<EdgeKey, 3>>> slabs(nx - 1);
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < nx - 1; ++i) {
    auto& out = slabs[i];
    for (int j = 0; j < ny - 1; ++j) {
      for (int k = 0; k < nz - 1; ++k) {
        std::size_t node[8];
        int cube = 0;
        bool skip = false;
        for (int c = 0; c < 8; ++c) {
          node[c] = g.index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (opts.skip_unobserved && have_weights && vol.weights[node[c]] <= 0.0f) skip = true;
          if (vol.values[node[c]] < opts.iso) cube |= 1 << c;
        }
        if (skip || detail::MCEdgeTable[cube] == 0) continue;
        EdgeKey keys[12];
        for (int e = 0; e < 12; ++e) {
          if (!(detail::MCEdgeTable[cube] & (1 << e))) continue;
          const int a = kEdge[e][0];
          const int b = kEdge[e][1];
          int axis = 0;
          while (kCorner[a][axis] == kCorner[b][axis]) ++axis;
          const int lo = kCorner[a][axis] < kCorner[b][axis] ? a : b;
          keys[e] = static_cast<EdgeKey>(node[lo]) * 3 + axis;
        }
        const int* t = detail::MCTriTable[cube];
        for (; *t != -1; t += 3) out.push_back({keys[t[0]], keys[t[1]], keys[t[2]]});
      }
    }
  }

  std::unordered_map<EdgeKey, int> index;
  const std::array<std::size_t, 3> step{static_cast<std::size_t>(ny) * nz,
                                        static_cast<std::size_t>(nz), 1};
  auto vertex_of = [&](EdgeKey key) {
    auto [it, fresh] = index.try_emplace(key, static_cast<int>(mesh.vertices.size()));
    if (fresh) {
      const std::size_t a = key / 3;
      const int axis = static_cast<int>(key % 3);
      const std::size_t b = a + step[axis];
      const double va = vol.values[a];
      const double vb = vol.values[b];
      const double t = (opts.iso - va) / (vb - va);
      const Vec3 pa = g.center(a);
      Vec3 p = pa;
      p[axis] += t * g.voxel_size;
      mesh.vertices.push_back(p);
    }
    return it->second;
  };
  for (const auto& slab : slabs) {
    for (const auto& tri : slab) {
      mesh.triangles.push_back({vertex_of(tri[0]), vertex_of(tri[1]), vertex_of(tri[2])});
    }
  }
  weld_vertices(mesh, opts.weld_tolerance);
  return mesh;
}

void weld_vertices(TriangleMesh& mesh, double tol) {
  struct CellHash {
    std::size_t operator()(const std::array<long long, 3>& c) const {
      return static_cast<std::size_t>(c[0] * 73856093LL ^ c[1] * 19349663LL ^ c[2] * 83492791LL);
    }
  };
  std::unordered_map<std::array<long long, 3>, std::vector<int>, CellHash> cells;
  std::vector<int> remap(mesh.vertices.size());
  std::vector<Vec3> kept;
  std::vector<Vec3> kept_normals;
  const double cell = std::max(tol, 1e-12);
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const Vec3& p = mesh.vertices[v];
    const std::array<long long, 3> c{static_cast<long long>(std::floor(p.x() / cell)),
                                     static_cast<long long>(std::floor(p.y() / cell)),
                                     static_cast<long long>(std::floor(p.z() / cell))};
    int found = -1;
    for (int dx = -1; dx <= 1 && found < 0; ++dx)
      for (int dy = -1; dy <= 1 && found < 0; ++dy)
        for (int dz = -1; dz <= 1 && found < 0; ++dz) {
          auto it = cells.find({c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == cells.end()) continue;
          for (int k : it->second) {
            if ((kept[k] - p).norm() <= tol) {
              found = k;
              break;
            }
          }
        }
    if (found < 0) {
      found = static_cast<int>(kept.size());
      kept.push_back(p);
      if (!mesh.normals.empty()) kept_normals.push_back(mesh.normals[v]);
      cells[c].push_back(found);
    }
    remap[v] = found;
  }
  std::vector<std::array<int, 3>> tris;
  tris.reserve(mesh.triangles.size());
  for (const auto& t : mesh.triangles) {
    const std::array<int, 3> r{remap[t[0]], remap[t[1]], remap[t[2]]};
    if (r[0] == r[1] || r[1] == r[2] || r[0] == r[2]) continue;
    if ((kept[r[1]] - kept[r[0]]).cross(kept[r[2]] - kept[r[0]]).squaredNorm() == 0.0) continue;
    tris.push_back(r);
  }
  // drop vertices no longer referenced
  std::vector<int> used(kept.size(), -1);
  mesh.vertices.clear();
  std::vector<Vec3> normals;
  for (auto& t : tris) {
    for (int& v : t) {
      if (used[v] < 0) {
        used[v] = static_cast<int>(mesh.vertices.size());
        mesh.vertices.push_back(kept[v]);
        if (!kept_normals.empty()) normals.push_back(kept_normals[v]);
      }
      v = used[v];
    }
  }
  mesh.triangles = std::move(tris);
  mesh.normals = std::move(normals);
}

EdgeStats edge_stats(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> uses;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      const int a = t[e];
      const int b = t[(e + 1) % 3];
      ++uses[{std::min(a, b), std::max(a, b)}];
    }
  }
  EdgeStats s;
  s.edges = uses.size();
  for (const auto& [edge, n] : uses) {
    if (n == 1) ++s.boundary;
    if (n > 2) ++s.non_manifold;
  }
  return s;
}

long euler_characteristic(const TriangleMesh& mesh) {
  std::vector<unsigned char> used(mesh.vertices.size(), 0);
  for (const auto& t : mesh.triangles)
    for (int v : t) used[v] = 1;
  const long v = std::count(used.begin(), used.end(), 1);
  return v - static_cast<long>(edge_stats(mesh).edges) + static_cast<long>(mesh.triangles.size());
}

double signed_volume(const TriangleMesh& mesh) {
  double vol = 0.0;
  for (const auto& t : mesh.triangles) {
    vol += mesh.vertices[t[0]].dot(mesh.vertices[t[1]].cross(mesh.vertices[t[2]]));
  }
  return vol / 6.0;
}

void write_ply(const TriangleMesh& mesh, const std::filesystem::path& path) {
  if (!mesh.valid()) throw std::invalid_argument("write_ply: mesh has out-of-range indices");
  const bool normals = !mesh.normals.empty();
  std::ostringstream h;
  h << "ply\nformat binary_little_endian 1.0\ncomment dgrecon\n"
    << "element vertex " << mesh.vertices.size() << "\n"
    << "property float x\nproperty float y\nproperty float z\n";
  if (normals) h << "property float nx\nproperty float ny\nproperty float nz\n";
  h << "element face " << mesh.triangles.size() << "\n"
    << "property list uchar int vertex_indices\nend_header\n";
  BinaryWriter w;
  w.put_bytes(h.str());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
    for (int a = 0; a < 3; ++a) w.put<float>(static_cast<float>(mesh.vertices[i][a]));
    if (normals)
      for (int a = 0; a < 3; ++a) w.put<float>(static_cast<float>(mesh.normals[i][a]));
  }
  for (const auto& t : mesh.triangles) {
    w.put<std::uint8_t>(3);
    for (int v : t) w.put<std::int32_t>(v);
  }
  write_file_atomic(path, w.bytes());
}

namespace {

int scalar_size(const std::string& type) {
  if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
  if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
  if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
      type == "float" || type == "float32")
    return 4;
  if (type == "double" || type == "float64") return 8;
  return 0;
}

double read_scalar(BinaryReader& r, const std::string& type) {
  if (type == "char" || type == "int8") return r.get<std::int8_t>();
  if (type == "uchar" || type == "uint8") return r.get<std::uint8_t>();
  if (type == "short" || type == "int16") return r.get<std::int16_t>();
  if (type == "ushort" || type == "uint16") return r.get<std::uint16_t>();
  if (type == "int" || type == "int32") return r.get<std::int32_t>();
  if (type == "uint" || type == "uint32") return r.get<std::uint32_t>();
  if (type == "float" || type == "float32") return r.get<float>();
  return r.get<double>();
}

struct PlyProperty {
  std::string name;
  std::string type;
  std::string count_type;  // non-empty for lists
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> props;
};

}  // namespace

TriangleMesh read_ply(const std::filesystem::path& path) {
  std::vector<char> bytes = read_file(path);
  const std::string src = path.string();
  const std::string_view all(bytes.data(), bytes.size());
  const std::size_t end = all.find("end_header\n");
  if (all.substr(0, 4) != "ply\n" || end == std::string_view::npos) {
    throw ParseError(src + ": not a PLY file (missing 'ply' magic or 'end_header')", 0);
  }
  const std::size_t body = end + 11;
  std::istringstream header(std::string(all.substr(0, end)));
  std::string line;
  std::vector<PlyElement> elements;
  bool format_ok = false;
  std::size_t offset = 0;
  while (std::getline(header, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt != "binary_little_endian") {
        throw ParseError(src + ": unsupported PLY format '" + fmt + "'", offset);
      }
      format_ok = true;
    } else if (word == "element") {
      PlyElement e;
      if (!(ls >> e.name >> e.count)) throw ParseError(src + ": bad element line", offset);
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) throw ParseError(src + ": property before element", offset);
      PlyProperty p;
      std::string type;
      ls >> type;
      if (type == "list") {
        ls >> p.count_type >> p.type >> p.name;
        if (!scalar_size(p.count_type)) throw ParseError(src + ": bad list type", offset);
      } else {
        p.type = type;
        ls >> p.name;
      }
      if (!scalar_size(p.type)) {
        throw ParseError(src + ": unknown property type '" + p.type + "'", offset);
      }
      elements.back().props.push_back(p);
    }
    offset += line.size() + 1;
  }
  if (!format_ok) throw ParseError(src + ": missing format line", 0);

  BinaryReader r(std::move(bytes), src);
  r.get_bytes(body);
  TriangleMesh mesh;
  for (const auto& e : elements) {
    std::size_t fixed = 0;
    bool has_list = false;
    for (const auto& p : e.props) {
      if (p.count_type.empty()) fixed += scalar_size(p.type);
      else has_list = true;
    }
    if (e.name == "vertex") {
      if (has_list) throw ParseError(src + ": list property on vertices", r.offset());
      if (fixed * e.count > r.remaining()) {
        throw ParseError(src + ": truncated vertex block: expected " + std::to_string(e.count) +
                             " vertices, file holds " + std::to_string(r.remaining() / fixed),
                         r.offset() + (r.remaining() / fixed) * fixed);
      }
      int ix[6] = {-1, -1, -1, -1, -1, -1};
      const char* names[6] = {"x", "y", "z", "nx", "ny", "nz"};
      for (std::size_t k = 0; k < e.props.size(); ++k)
        for (int a = 0; a < 6; ++a)
          if (e.props[k].name == names[a]) ix[a] = static_cast<int>(k);
      if (ix[0] < 0 || ix[1] < 0 || ix[2] < 0) {
        throw ParseError(src + ": vertex element lacks x/y/z", r.offset());
      }
      const bool normals = ix[3] >= 0 && ix[4] >= 0 && ix[5] >= 0;
      std::vector<double> vals(e.props.size());
      for (std::size_t i = 0; i < e.count; ++i) {
        for (std::size_t k = 0; k < e.props.size(); ++k) vals[k] = read_scalar(r, e.props[k].type);
        mesh.vertices.emplace_back(vals[ix[0]], vals[ix[1]], vals[ix[2]]);
        if (normals) mesh.normals.emplace_back(vals[ix[3]], vals[ix[4]], vals[ix[5]]);
      }
    } else if (e.name == "face") {
      for (std::size_t i = 0; i < e.count; ++i) {
        const std::size_t at = r.offset();
        try {
          for (const auto& p : e.props) {
            if (p.count_type.empty()) {
              read_scalar(r, p.type);
              continue;
            }
            const auto n = static_cast<long>(read_scalar(r, p.count_type));
            if (p.name != "vertex_indices" && p.name != "vertex_index") {
              for (long k = 0; k < n; ++k) read_scalar(r, p.type);
              continue;
            }
            if (n != 3) {
              throw ParseError(src + ": face " + std::to_string(i) + " has " + std::to_string(n) +
                                   " vertices; only triangles are supported",
                               at);
            }
            std::array<int, 3> t{};
            for (int& v : t) v = static_cast<int>(read_scalar(r, p.type));
            mesh.triangles.push_back(t);
          }
        } catch (const ParseError& err) {
          if (r.remaining() == 0 || std::string_view(err.what()).find("unexpected end") !=
                                        std::string_view::npos) {
            throw ParseError(src + ": truncated face block: expected " + std::to_string(e.count) +
                                 " faces, file holds " + std::to_string(i),
                             at);
          }
          throw;
        }
      }
    } else {
      if (has_list) {
        for (std::size_t i = 0; i < e.count; ++i)
          for (const auto& p : e.props) {
            const long n = p.count_type.empty() ? 1 : static_cast<long>(read_scalar(r, p.count_type));
            for (long k = 0; k < n; ++k) read_scalar(r, p.type);
          }
      } else {
        r.get_bytes(fixed * e.count);
      }
    }
  }
  r.expect_end();
  if (!mesh.valid()) throw ParseError(src + ": face index out of range", r.offset());
  return mesh;
}

}  // namespace dgrecon
