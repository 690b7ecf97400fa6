#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "skullkit/checkpoint.hpp"
#include "skullkit/dataset.hpp"
#include "skullkit/defects.hpp"
#include "skullkit/losses.hpp"
#include "skullkit/registration.hpp"
#include "skullkit/trainer.hpp"
#include "skullkit/version.hpp"
#include "skullkit/volume_io.hpp"
#include "skullkit/voxel_ops.hpp"

namespace py = pybind11;
using namespace skullkit;

namespace {

template <typename T>
py::array volume_array(const Volume& v, const std::vector<T>& data) {
  // expose as (nx, ny, nz) with x fastest: Fortran-style strides over the
  // volume's native layout
  py::array_t<T> arr({v.dims[0], v.dims[1], v.dims[2]},
                     {static_cast<int64_t>(sizeof(T)),
                      static_cast<int64_t>(sizeof(T)) * v.dims[0],
                      static_cast<int64_t>(sizeof(T)) * v.dims[0] * v.dims[1]});
  std::memcpy(arr.mutable_data(), data.data(), data.size() * sizeof(T));
  return arr;
}

py::array to_numpy(const Volume& v) {
  if (v.dtype == Dtype::U8) return volume_array(v, v.u8);
  return volume_array(v, v.f32);
}

Volume from_numpy(py::array arr, std::array<float, 3> spacing, std::array<float, 3> origin) {
  if (arr.ndim() != 3) throw Error(ErrorCode::InvalidConfig, "expected a 3D array");
  Volume v;
  for (int a = 0; a < 3; ++a) v.dims[a] = arr.shape(a);
  v.spacing = spacing;
  v.origin = origin;
  if (py::isinstance<py::array_t<uint8_t>>(arr) || arr.dtype().kind() == 'u' ||
      arr.dtype().kind() == 'b') {
    auto a8 = py::array_t<uint8_t, py::array::forcecast>::ensure(arr);
    v.dtype = Dtype::U8;
    v.u8.resize(static_cast<size_t>(v.numel()));
    auto r = a8.unchecked<3>();
    for (int64_t z = 0; z < v.dims[2]; ++z)
      for (int64_t y = 0; y < v.dims[1]; ++y)
        for (int64_t x = 0; x < v.dims[0]; ++x)
          v.u8[static_cast<size_t>(v.index(x, y, z))] = r(x, y, z);
  } else {
    auto af = py::array_t<float, py::array::forcecast>::ensure(arr);
    v.dtype = Dtype::F32;
    v.f32.resize(static_cast<size_t>(v.numel()));
    auto r = af.unchecked<3>();
    for (int64_t z = 0; z < v.dims[2]; ++z)
      for (int64_t y = 0; y < v.dims[1]; ++y)
        for (int64_t x = 0; x < v.dims[0]; ++x)
          v.f32[static_cast<size_t>(v.index(x, y, z))] = r(x, y, z);
  }
  v.validate();
  return v;
}

DefectSpec defect_spec_from_kwargs(DefectKind kind, uint64_t seed,
                                   std::optional<std::array<double, 3>> center_frac,
                                   double radius_frac, double plane_frac,
                                   std::array<double, 2> band_frac, int anterior_axis) {
  DefectSpec spec;
  spec.kind = kind;
  spec.seed = seed;
  spec.center_frac = center_frac;
  spec.radius_frac = radius_frac;
  spec.plane_frac = plane_frac;
  spec.band_frac = band_frac;
  spec.anterior_axis = anterior_axis;
  return spec;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Volumetric skull reconstruction toolkit: NRRD/NIfTI I/O, synthetic "
            "defects, a 3D convolutional autoencoder trained with Dice loss, and "
            "similarity-transform implant extraction.";
  m.attr("__version__") = SKULLKIT_VERSION;
  m.attr("CHECKPOINT_FORMAT_VERSION") = kCheckpointFormatVersion;

  py::register_exception<Error>(m, "SkullkitError", PyExc_RuntimeError);

  py::class_<Volume>(m, "Volume")
      .def(py::init<>())
      .def_property_readonly("dims", [](const Volume& v) { return v.dims; })
      .def_property_readonly("spacing", [](const Volume& v) { return v.spacing; })
      .def_property_readonly("origin", [](const Volume& v) { return v.origin; })
      .def_property_readonly("dtype",
                             [](const Volume& v) { return v.dtype == Dtype::U8 ? "uint8" : "float32"; })
      .def("to_numpy", &to_numpy, "Copy voxels into a (nx, ny, nz) numpy array.")
      .def("foreground_count", &Volume::foreground_count)
      .def("is_binary", &Volume::is_binary)
      .def("__eq__", [](const Volume& a, const Volume& b) { return a == b; })
      .def("__repr__", [](const Volume& v) {
        return "Volume(dims=(" + std::to_string(v.dims[0]) + ", " + std::to_string(v.dims[1]) +
               ", " + std::to_string(v.dims[2]) +
               "), dtype=" + (v.dtype == Dtype::U8 ? "uint8" : "float32") + ")";
      });

  m.def("from_numpy", &from_numpy, py::arg("array"),
        py::arg("spacing") = std::array<float, 3>{1.f, 1.f, 1.f},
        py::arg("origin") = std::array<float, 3>{0.f, 0.f, 0.f},
        "Build a Volume from a (nx, ny, nz) array; uint8/bool arrays stay uint8, "
        "everything else becomes float32.");

  // ---- volume_io
  m.def("read_volume",
        [](const std::string& path) { return read_volume(path); },
        py::arg("path"));
  m.def("write_volume", &write_volume, py::arg("volume"), py::arg("path"));
  m.def("parse_nrrd",
        [](py::bytes data) {
          std::string s = data;
          return parse_nrrd(std::vector<uint8_t>(s.begin(), s.end()));
        },
        py::arg("data"));
  m.def("write_nrrd",
        [](const Volume& v, bool gzip) {
          auto bytes = write_nrrd(v, gzip ? Encoding::Gzip : Encoding::Raw);
          return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("volume"), py::arg("gzip") = false);
  m.def("parse_nifti",
        [](py::bytes data) {
          std::string s = data;
          return parse_nifti(std::vector<uint8_t>(s.begin(), s.end()));
        },
        py::arg("data"));
  m.def("write_nifti",
        [](const Volume& v, bool gzip) {
          auto bytes = write_nifti(v, gzip);
          return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
        },
        py::arg("volume"), py::arg("gzip") = false);
  m.def("binarize", &binarize, py::arg("volume"), py::arg("threshold") = 0.5f);

  // ---- voxel_ops
  m.def("resize_area", &resize_area, py::arg("volume"), py::arg("target"),
        "Exact box-filter (area) resampling.");
  m.def("crop",
        [](const Volume& v, std::array<int64_t, 3> lo, std::array<int64_t, 3> hi) {
          return crop(v, CropRegion{lo, hi});
        },
        py::arg("volume"), py::arg("lo"), py::arg("hi"));
  m.def("crop_axial_centered", &crop_axial_centered, py::arg("volume"), py::arg("n_slices"));
  m.def("union_", [](const Volume& a, const Volume& b) { return boolean_op(a, b, BoolOp::Union); },
        py::arg("a"), py::arg("b"));
  m.def("intersect",
        [](const Volume& a, const Volume& b) { return boolean_op(a, b, BoolOp::Intersect); },
        py::arg("a"), py::arg("b"));
  m.def("subtract",
        [](const Volume& a, const Volume& b) { return boolean_op(a, b, BoolOp::Subtract); },
        py::arg("a"), py::arg("b"));
  m.def("largest_component", &largest_component, py::arg("volume"));
  m.def("make_phantom",
        [](uint64_t seed, std::array<int64_t, 3> dims, double shell_thickness,
           std::array<double, 3> radii, double face_width, double face_depth, double face_height,
           double jitter) {
          PhantomSpec spec;
          spec.seed = seed;
          spec.dims = dims;
          spec.shell_thickness = shell_thickness;
          spec.radii = radii;
          spec.face_width = face_width;
          spec.face_depth = face_depth;
          spec.face_height = face_height;
          spec.jitter = jitter;
          return make_phantom(spec);
        },
        py::arg("seed") = 0, py::arg("dims") = std::array<int64_t, 3>{48, 48, 48},
        py::arg("shell_thickness") = 3.0, py::arg("radii") = std::array<double, 3>{18, 18, 16},
        py::arg("face_width") = 12.0, py::arg("face_depth") = 6.0, py::arg("face_height") = 10.0,
        py::arg("jitter") = 0.0,
        "Deterministic synthetic skull: hollow ellipsoid shell plus anterior face block.");

  // ---- defects
  m.def("inject_cranial",
        [](const Volume& complete, uint64_t seed, std::optional<std::array<double, 3>> center_frac,
           double radius_frac) {
          auto pair = inject_cranial(
              complete, defect_spec_from_kwargs(DefectKind::Cranial, seed, center_frac,
                                                radius_frac, 0.7, {0.0, 1.0}, 1));
          return py::make_tuple(pair.defective, pair.implant);
        },
        py::arg("complete"), py::arg("seed") = 0, py::arg("center_frac") = py::none(),
        py::arg("radius_frac") = 0.125,
        "Remove a spherical region; returns (defective, implant).");
  m.def("inject_facial",
        [](const Volume& complete, uint64_t seed, double plane_frac,
           std::array<double, 2> band_frac, int anterior_axis) {
          auto pair = inject_facial(
              complete, defect_spec_from_kwargs(DefectKind::Facial, seed, std::nullopt, 0.125,
                                                plane_frac, band_frac, anterior_axis));
          return py::make_tuple(pair.defective, pair.implant);
        },
        py::arg("complete"), py::arg("seed") = 0, py::arg("plane_frac") = 0.7,
        py::arg("band_frac") = std::array<double, 2>{0.0, 1.0}, py::arg("anterior_axis") = 1,
        "Cut everything anterior of the plane inside the axial band; returns "
        "(defective, implant).");

  // ---- losses
  m.def("dice_metric", &dice_metric, py::arg("pred"), py::arg("truth"),
        "Hard Dice coefficient of two binary volumes.");

  // ---- registration
  py::class_<SimilarityTransform>(m, "SimilarityTransform")
      .def(py::init<>())
      .def_readwrite("scale", &SimilarityTransform::scale)
      .def_readwrite("translation", &SimilarityTransform::translation)
      .def_readwrite("center", &SimilarityTransform::center)
      .def_property(
          "quaternion",
          [](const SimilarityTransform& t) {
            return std::array<double, 4>{t.rotation.w, t.rotation.x, t.rotation.y, t.rotation.z};
          },
          [](SimilarityTransform& t, std::array<double, 4> q) {
            t.rotation = Quaternion{q[0], q[1], q[2], q[3]}.normalized();
          })
      .def("to_json", &SimilarityTransform::to_json)
      .def_static("from_json", &SimilarityTransform::from_json, py::arg("text"));

  py::class_<RegistrationResult>(m, "RegistrationResult")
      .def_readonly("transform", &RegistrationResult::transform)
      .def_readonly("dice", &RegistrationResult::dice)
      .def_readonly("converged", &RegistrationResult::converged)
      .def_readonly("iterations", &RegistrationResult::iterations);

  m.def("apply_transform", &apply_transform, py::arg("volume"), py::arg("transform"),
        py::call_guard<py::gil_scoped_release>());
  m.def("register_similarity",
        [](const Volume& moving, const Volume& fixed, double success_dice) {
          RegistrationConfig cfg;
          cfg.success_dice = success_dice;
          return register_similarity(moving, fixed, cfg);
        },
        py::arg("moving"), py::arg("fixed"), py::arg("success_dice") = 0.80,
        py::call_guard<py::gil_scoped_release>(),
        "Centroid/moment initialization plus Nelder-Mead refinement of the "
        "7-DOF similarity transform.");
  m.def("extract_implant",
        [](const Volume& reconstruction, const Volume& defective, double success_dice) {
          ImplantResult r = [&] {
            py::gil_scoped_release release;  // tuple construction below needs the GIL back
            RegistrationConfig cfg;
            cfg.success_dice = success_dice;
            return extract_implant(reconstruction, defective, cfg);
          }();
          return py::make_tuple(r.implant, r.registration);
        },
        py::arg("reconstruction"), py::arg("defective"), py::arg("success_dice") = 0.80,
        "Align the reconstruction to the defective skull and subtract; returns "
        "(implant, registration_result).");

  // ---- dataset / training pipeline
  m.def("split_dataset", &split_dataset, py::arg("completes"), py::arg("counts"), py::arg("seed"),
        "Deterministic train/val/test assignment; returns manifest JSON text.");
  m.def("build_pairs",
        [](const std::string& manifest_in, const std::string& manifest_out,
           std::array<int64_t, 3> counts, const std::string& kind, uint64_t seed,
           double cranial_radius_frac, double facial_plane_frac) {
          DatasetManifest input = load_manifest(manifest_in, true);
          PairBuildParams params;
          params.counts = counts;
          params.seed = seed;
          params.kind_policy = kind == "cranial" ? KindPolicy::Cranial
                               : kind == "facial" ? KindPolicy::Facial
                                                  : KindPolicy::Mixed;
          params.cranial.radius_frac = cranial_radius_frac;
          params.facial.plane_frac = facial_plane_frac;
          build_pairs(input, std::filesystem::path(manifest_in).parent_path(), params,
                      manifest_out);
          return manifest_out;
        },
        py::arg("manifest_in"), py::arg("manifest_out"),
        py::arg("counts") = std::array<int64_t, 3>{-1, -1, -1}, py::arg("kind") = "both",
        py::arg("seed") = 0, py::arg("cranial_radius_frac") = 0.125,
        py::arg("facial_plane_frac") = 0.7,
        "Inject defects over a completes manifest; writes volumes and the "
        "output manifest, returns its path.");
  m.def("train",
        [](const std::string& config_json, const std::string& manifest,
           std::optional<std::string> resume) {
          TrainConfig cfg = TrainConfig::from_json(config_json);
          std::optional<std::filesystem::path> res;
          if (resume) res = *resume;
          Checkpoint ckpt = train(manifest, cfg, nullptr, res);
          return (std::filesystem::path(cfg.checkpoint_dir) / "last.ckpt").string();
        },
        py::arg("config_json"), py::arg("manifest"), py::arg("resume") = py::none(),
        py::call_guard<py::gil_scoped_release>(),
        "Run the training loop; returns the path of the final checkpoint.");
  m.def("reconstruct",
        [](const std::string& ckpt_path, const Volume& defective) {
          return reconstruct(load_checkpoint(ckpt_path), defective);
        },
        py::arg("checkpoint"), py::arg("defective"),
        py::call_guard<py::gil_scoped_release>(),
        "Predict the completed skull for a defective input.");
  m.def("evaluate",
        [](const std::string& ckpt_path, const std::string& manifest, const std::string& split) {
          return evaluate(load_checkpoint(ckpt_path), manifest, split);
        },
        py::arg("checkpoint"), py::arg("manifest"), py::arg("split") = "test",
        py::call_guard<py::gil_scoped_release>(),
        "Dice report (JSON text) over one manifest split.");
}
