#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dsvqa/bvfe.h"
#include "dsvqa/data.h"
#include "dsvqa/evaluate.h"
#include "dsvqa/synth.h"
#include "dsvqa/tensor_file.h"
#include "dsvqa/train.h"

namespace py = pybind11;
using namespace dsvqa;

namespace {

template <typename T>
py::array_t<T> to_numpy(const Tensor<T>& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<T> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

template <typename T>
Tensor<T> from_numpy(const py::array& a) {
  auto c = py::array_t<T, py::array::c_style | py::array::forcecast>::ensure(a);
  if (!c) throw std::invalid_argument("expected a numeric array");
  Shape shape(c.shape(), c.shape() + c.ndim());
  return Tensor<T>(std::move(shape), std::vector<T>(c.data(), c.data() + c.size()));
}

py::object json_to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the dual-stream video quality engine";

  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ManifestError>(m, "ManifestError", PyExc_ValueError);
  py::register_exception<MetricError>(m, "MetricError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

  m.def("read_tensor", [](const std::filesystem::path& path) -> py::array {
    return std::visit([](const auto& t) -> py::array { return to_numpy(t); }, read_tensor(path));
  }, py::arg("path"), "Reads a TensorFile into a float32 or float64 array.");

  m.def("write_tensor", [](const std::filesystem::path& path, const py::array& array, const std::string& dtype) {
    if (dtype == "f32") {
      write_tensor(from_numpy<float>(array), path);
    } else if (dtype == "f64") {
      write_tensor(from_numpy<double>(array), path);
    } else {
      throw std::invalid_argument("dtype must be 'f32' or 'f64'");
    }
  }, py::arg("path"), py::arg("array"), py::arg("dtype") = "f32");

  m.def("fragment_offsets", [](std::size_t h, std::size_t w, std::size_t grid, std::size_t patch,
                               std::uint64_t seed) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& o : fragment_offsets(h, w, grid, patch, seed)) out.emplace_back(o.y, o.x);
    return out;
  }, py::arg("height"), py::arg("width"), py::arg("grid"), py::arg("patch"), py::arg("seed"),
     "Row-major (y, x) crop origins of the fragment grid.");

  m.def("sample_fragments", [](const py::array& frames, std::size_t grid, std::size_t patch,
                               std::uint64_t seed) {
    return to_numpy(sample_fragments(from_numpy<double>(frames), grid, patch, seed).patches);
  }, py::arg("frames"), py::arg("grid"), py::arg("patch"), py::arg("seed"),
     "C x T x H x W frames to C x T x (grid*patch) x (grid*patch) fragments.");

  m.def("sample_frames",&sample_frames, py::arg("num_available"), py::arg("count"), py::arg("seed"));
  m.def("assign_splits", &assign_splits, py::arg("n"), py::arg("seed"));

  m.def("validate_manifest", [](const std::filesystem::path& path) {
    py::list issues;
    for (const auto& i : validate_manifest(load_manifest(path)).issues) {
      py::dict d;
      d["video_id"] = i.video_id;
      d["field"] = i.field;
      d["message"] = i.message;
      issues.append(d);
    }
    return issues;
  }, py::arg("manifest"), "Validation issues of a manifest file (empty when valid).");

  m.def("plcc", &plcc, py::arg("pred"), py::arg("gt"));
  m.def("srocc", &srocc, py::arg("pred"), py::arg("gt"));

  m.def("synth", [](const std::filesystem::path& out, std::size_t n, std::size_t dim, double noise,
                    std::uint64_t seed, std::uint64_t direction_seed) {
    SynthConfig c;
    c.n_videos = n;
    c.dim = dim;
    c.noise = noise;
    c.seed = seed;
    c.direction_seed = direction_seed;
    synth_dataset(c, out);
    return out / "manifest.json";
  }, py::arg("out"), py::arg("n") = 200, py::arg("dim") = 32, py::arg("noise") = 0.02, py::arg("seed") = 1,
     py::arg("direction_seed") = 7);

  m.def("train", [](const std::filesystem::path& manifest, const std::filesystem::path& out,
                    const std::string& config_json) {
    RunConfig run = config_json.empty() ? RunConfig{} : config_from_json(nlohmann::json::parse(config_json));
    run.validate();
    TrainResult r;
    {
      py::gil_scoped_release release;
      r = train(run, load_manifest(manifest), out);
    }
    py::dict d;
    d["initial_loss"] = r.initial_loss;
    d["final_loss"] = r.final_loss;
    d["train_srocc"] = r.train_srocc;
    d["train_plcc"] = r.train_plcc;
    d["epochs"] = r.epochs.size();
    return d;
  }, py::arg("manifest"), py::arg("out"), py::arg("config_json") = "",
     "Trains on the train split; config_json overrides the defaults.");

  m.def("evaluate", [](const std::filesystem::path& checkpoint, const std::filesystem::path& manifest,
                       const std::string& split) {
    EvalReport r;
    {
      py::gil_scoped_release release;
      r = evaluate(checkpoint, manifest, split);
    }
    return json_to_py(report_to_json(r));
  }, py::arg("checkpoint"), py::arg("manifest"), py::arg("split") = "test");
}
