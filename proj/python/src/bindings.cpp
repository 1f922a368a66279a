#include "dgrecon/dataset.hpp"
#include "dgrecon/evaluation.hpp"
#include "dgrecon/experiment.hpp"
#include "dgrecon/mesh.hpp"
#include "dgrecon/model.hpp"
#include "dgrecon/reconstruct.hpp"
#include "dgrecon/scene.hpp"
#include "dgrecon/tsdf.hpp"

#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

namespace py = pybind11;
using namespace dgrecon;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;
using IntArray = py::array_t<int, py::array::c_style | py::array::forcecast>;

FloatArray depth_to_numpy(const DepthMap& d) {
  FloatArray a({d.height, d.width});
  std::copy(d.values.begin(), d.values.end(), a.mutable_data());
  return a;
}

DepthMap depth_from_numpy(const FloatArray& a) {
  if (a.ndim() != 2) throw std::invalid_argument("depth maps must be 2-D (height, width)");
  DepthMap d(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::copy(a.data(), a.data() + a.size(), d.values.begin());
  return d;
}

FloatArray volume_array(const GridSpec& g, const std::vector<float>& v) {
  FloatArray a({g.dims[0], g.dims[1], g.dims[2]});
  std::copy(v.begin(), v.end(), a.mutable_data());
  return a;
}

DoubleArray vertices_to_numpy(const TriangleMesh& m) {
  DoubleArray a({static_cast<py::ssize_t>(m.vertices.size()), py::ssize_t{3}});
  double* p = a.mutable_data();
  for (const Vec3& v : m.vertices) {
    *p++ = v.x();
    *p++ = v.y();
    *p++ = v.z();
  }
  return a;
}

IntArray triangles_to_numpy(const TriangleMesh& m) {
  IntArray a({static_cast<py::ssize_t>(m.triangles.size()), py::ssize_t{3}});
  int* p = a.mutable_data();
  for (const auto& t : m.triangles) {
    *p++ = t[0];
    *p++ = t[1];
    *p++ = t[2];
  }
  return a;
}

TriangleMesh mesh_from_numpy(const DoubleArray& v, const IntArray& f) {
  if (v.ndim() != 2 || v.shape(1) != 3) throw std::invalid_argument("vertices must be (N, 3)");
  if (f.ndim() != 2 || f.shape(1) != 3) throw std::invalid_argument("triangles must be (M, 3)");
  TriangleMesh m;
  for (py::ssize_t i = 0; i < v.shape(0); ++i) m.vertices.emplace_back(v.at(i, 0), v.at(i, 1), v.at(i, 2));
  for (py::ssize_t i = 0; i < f.shape(0); ++i) m.triangles.push_back({f.at(i, 0), f.at(i, 1), f.at(i, 2)});
  if (!m.valid()) throw std::invalid_argument("triangle indices out of range");
  return m;
}

py::dict metrics_dict(const nlohmann::json& j) {
  py::dict d;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it->is_null()) {
      d[py::str(it.key())] = py::none();
    } else if (it->is_number_integer()) {
      d[py::str(it.key())] = it->get<long long>();
    } else if (it->is_number()) {
      d[py::str(it.key())] = it->get<double>();
    } else if (it->is_boolean()) {
      d[py::str(it.key())] = it->get<bool>();
    } else {
      d[py::str(it.key())] = it->dump();
    }
  }
  return d;
}

}  // namespace

PYBIND11_MODULE(_dgrecon, m) {
  m.doc() = "Depth-guided TSDF reconstruction";

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init([](double fx, double fy, double cx, double cy, int w, int h) {
             return Intrinsics{fx, fy, cx, cy, w, h};
           }),
           py::arg("fx"), py::arg("fy"), py::arg("cx"), py::arg("cy"), py::arg("width"),
           py::arg("height"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def_readwrite("width", &Intrinsics::width)
      .def_readwrite("height", &Intrinsics::height)
      .def("matrix", &Intrinsics::matrix);

  py::class_<Pose>(m, "Pose")
      .def(py::init([](const Mat4& T) { return Pose::from_matrix(T); }), py::arg("matrix"))
      .def_readwrite("rotation", &Pose::rotation)
      .def_readwrite("translation", &Pose::translation)
      .def("matrix", &Pose::matrix)
      .def("inverse", &Pose::inverse);

  m.def("look_at", &look_at, py::arg("eye"), py::arg("target"), py::arg("up") = Vec3(Vec3::UnitZ()));

  py::class_<Camera>(m, "Camera")
      .def(py::init([](const Intrinsics& K, const Pose& P) { return Camera{K, P}; }), py::arg("K"),
           py::arg("pose"))
      .def_readwrite("K", &Camera::K)
      .def_readwrite("pose", &Camera::pose);

  py::class_<GridSpec>(m, "GridSpec")
      .def(py::init([](const Vec3& origin, double voxel, std::array<int, 3> dims) {
             GridSpec g;
             g.origin = origin;
             g.voxel_size = voxel;
             g.dims = dims;
             if (!g.valid()) throw std::invalid_argument("invalid grid");
             return g;
           }),
           py::arg("origin"), py::arg("voxel_size"), py::arg("dims"))
      .def_readwrite("origin", &GridSpec::origin)
      .def_readwrite("voxel_size", &GridSpec::voxel_size)
      .def_readwrite("dims", &GridSpec::dims)
      .def("count", &GridSpec::count)
      .def("center", py::overload_cast<int, int, int>(&GridSpec::center, py::const_));

  py::class_<TsdfVolume>(m, "TsdfVolume")
      .def_readonly("spec", &TsdfVolume::spec)
      .def_readonly("tau", &TsdfVolume::tau)
      .def_property_readonly("values", [](const TsdfVolume& v) { return volume_array(v.spec, v.values); })
      .def_property_readonly("weights", [](const TsdfVolume& v) { return volume_array(v.spec, v.weights); });

  py::class_<SceneData>(m, "Scene")
      .def_property_readonly("key", [](const SceneData& s) { return scene_key(s.desc); })
      .def_property_readonly("tau", [](const SceneData& s) { return s.desc.tau; })
      .def_property_readonly("region", [](const SceneData& s) { return s.desc.region; })
      .def_readonly("cameras", &SceneData::cameras)
      .def_property_readonly("depths", [](const SceneData& s) {
        py::list l;
        for (const auto& d : s.noisy_depths) l.append(depth_to_numpy(d));
        return l;
      })
      .def_property_readonly("gt_depths", [](const SceneData& s) {
        py::list l;
        for (const auto& d : s.gt_depths) l.append(depth_to_numpy(d));
        return l;
      })
      .def("sdf", [](const SceneData& s, const Vec3& p) { return sdf_eval(s.desc.scene, p, s.desc.tau); },
           py::arg("point"), "Normalized exact TSDF at a point.")
      .def("gt_mesh", [](const SceneData& s, double spacing) {
             const TriangleMesh g = ground_truth_mesh(s.desc.scene, s.desc.region, spacing);
             return py::make_tuple(vertices_to_numpy(g), triangles_to_numpy(g));
           },
           py::arg("spacing") = 0.02);

  m.def("make_scene", [](const std::string& preset, std::uint64_t seed) {
    py::gil_scoped_release release;
    return build_scene_data(make_preset(preset, seed));
  }, py::arg("preset"), py::arg("seed") = 0, "Render a preset scene (sphere, boxes, thin, room).");
  m.def("load_scene", [](const std::filesystem::path& dir) { return read_scene_dir(dir); },
        py::arg("directory"));

  m.def("fuse_depths",
        [](const std::vector<FloatArray>& depths, const std::vector<Camera>& cams,
           const GridSpec& g, double tau) {
          std::vector<DepthMap> d;
          for (const auto& a : depths) d.push_back(depth_from_numpy(a));
          py::gil_scoped_release release;
          return fuse_depths(d, cams, g, tau);
        },
        py::arg("depths"), py::arg("cameras"), py::arg("grid"), py::arg("tau"));

  m.def("marching_cubes",
        [](const TsdfVolume& v, double iso, bool skip_unobserved) {
          MarchingCubesOptions o;
          o.iso = iso;
          o.skip_unobserved = skip_unobserved;
          const TriangleMesh mesh = marching_cubes(v, o);
          return py::make_tuple(vertices_to_numpy(mesh), triangles_to_numpy(mesh));
        },
        py::arg("volume"), py::arg("iso") = 0.0, py::arg("skip_unobserved") = false,
        "Returns (vertices, triangles).");

  m.def("render_depth",
        [](const DoubleArray& v, const IntArray& f, const Intrinsics& K, const Pose& P) {
          const TriangleMesh mesh = mesh_from_numpy(v, f);
          return depth_to_numpy(render_depth(mesh, K, P));
        },
        py::arg("vertices"), py::arg("triangles"), py::arg("K"), py::arg("pose"));

  m.def("metrics_3d",
        [](const DoubleArray& pv, const IntArray& pf, const DoubleArray& gv, const IntArray& gf,
           double threshold, double density, std::uint64_t seed) {
          MetricsOptions o;
          o.threshold = threshold;
          o.density = density;
          o.seed = seed;
          return metrics_dict(to_json(metrics_3d(mesh_from_numpy(pv, pf), mesh_from_numpy(gv, gf), nullptr, o)));
        },
        py::arg("pred_vertices"), py::arg("pred_triangles"), py::arg("gt_vertices"),
        py::arg("gt_triangles"), py::arg("threshold") = 0.05, py::arg("density") = 1e4,
        py::arg("seed") = 0, "Untrimmed 3D metrics; distances in cm, ratios in percent.");

  m.def("metrics_2d",
        [](const std::vector<FloatArray>& rendered, const std::vector<FloatArray>& gt) {
          std::vector<DepthMap> r, g;
          for (const auto& a : rendered) r.push_back(depth_from_numpy(a));
          for (const auto& a : gt) g.push_back(depth_from_numpy(a));
          return metrics_dict(to_json(metrics_2d(r, g)));
        },
        py::arg("rendered"), py::arg("gt"));

  py::class_<ModelParams>(m, "Model")
      .def_property_readonly("parameter_count", &ModelParams::parameter_count)
      .def_property_readonly("guidance", [](const ModelParams& p) {
        return std::string(to_string(p.config().guidance.variant));
      })
      .def("save", [](const ModelParams& p, const std::filesystem::path& path) { save_model(path, p, nullptr); },
           py::arg("path"));

  m.def("load_model", [](const std::filesystem::path& path) { return load_model(path).model; },
        py::arg("path"));

  m.def("train",
        [](const std::vector<std::string>& scene_keys, const py::dict& overrides) {
          TrainConfig cfg = Benchmark().train;
          nlohmann::json j = to_json(cfg);
          for (auto item : overrides) {
            const std::string k = py::str(item.first);
            if (!j.contains(k)) throw std::invalid_argument("unknown training option '" + k + "'");
            const py::handle v = item.second;
            if (py::isinstance<py::bool_>(v)) j[k] = v.cast<bool>();
            else if (py::isinstance<py::int_>(v)) j[k] = v.cast<long long>();
            else if (py::isinstance<py::float_>(v)) j[k] = v.cast<double>();
            else if (py::isinstance<py::str>(v)) j[k] = v.cast<std::string>();
            else j[k] = v.cast<std::vector<int>>();
          }
          cfg = train_config_from_json(j);
          std::vector<SceneData> scenes;
          py::gil_scoped_release release;
          for (const auto& k : scene_keys) scenes.push_back(build_scene_data(scene_from_key(k)));
          return train_model(scenes, cfg);
        },
        py::arg("scenes"), py::arg("config") = py::dict(),
        "Train from preset:seed scene keys; config keys as in the training manifest.");

  m.def("reconstruct",
        [](const ModelParams& model, const SceneData& s, double spacing, bool occupancy_filter,
           bool enable_pb) {
          ReconstructionRequest req;
          req.spacing = spacing;
          req.occupancy_filter = occupancy_filter;
          req.enable_pb = enable_pb;
          GridReconstruction rec;
          InferenceContext ctx;
          {
            py::gil_scoped_release release;
            ctx = prepare_inference(model, s.cameras, s.noisy_depths, s.images, s.desc.region,
                                    s.desc.tau, enable_pb);
            rec = reconstruct_grid(model, ctx, req);
          }
          py::dict info;
          info["evaluations"] = rec.evaluations;
          info["cells"] = rec.cells;
          info["per_frame_ms"] = ctx.timings.per_frame_ms();
          info["extraction_ms"] = rec.extraction_ms;
          return py::make_tuple(std::move(rec.volume), info);
        },
        py::arg("model"), py::arg("scene"), py::arg("spacing") = 0.04,
        py::arg("occupancy_filter") = true, py::arg("enable_pb") = true,
        "Returns (TsdfVolume, info).");
}
