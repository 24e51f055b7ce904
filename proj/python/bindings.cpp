// Python bindings. Tensors cross the boundary as float32 numpy arrays;
// configurations and reports as JSON text.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "json.hpp"
#include "styleaug/benchmark.hpp"
#include "styleaug/dataset.hpp"
#include "styleaug/errors.hpp"
#include "styleaug/experiment.hpp"
#include "styleaug/image.hpp"
#include "styleaug/losses.hpp"
#include "styleaug/serialization.hpp"
#include "styleaug/transfer.hpp"
#include "styleaug/weights.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;
using namespace styleaug;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const FloatArray& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

FloatArray to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  FloatArray out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::tuple loss_tuple(const LossGrad& l) { return py::make_tuple(l.value, to_array(l.grad)); }

TransferConfig transfer_config(const std::string& config_json) {
  return config_json.empty() ? TransferConfig{}
                             : transfer_config_from_json(json::parse(config_json));
}

py::dict synthesize_py(const FloatArray& content, const FloatArray& reference,
                       const std::string& config_json, std::optional<fs::path> weights) {
  const TransferConfig cfg = transfer_config(config_json);
  const Tensor c = to_tensor(content);
  const Tensor r = to_tensor(reference);
  AugmentationPlan plan;
  plan.transfer = cfg;
  plan.image_size = c.shape().size() == 3 ? c.dim(1) : 16;
  plan.weights = std::move(weights);
  TransferResult result;
  {
    py::gil_scoped_release release;
    const Network net = synthesis_network(plan);
    result = synthesize(net, prepare_targets(net, c, r, cfg), cfg);
  }
  py::dict snapshots;
  for (const auto& [k, img] : result.snapshots) snapshots[py::int_(k)] = to_array(img);
  py::list trace;
  for (const LossRecord& rec : result.trace) trace.append(rec.total);
  py::dict out;
  out["image"] = to_array(result.image);
  out["snapshots"] = snapshots;
  out["trace"] = trace;
  return out;
}

std::string augment_py(const fs::path& src, const std::string& target_class,
                       const fs::path& reference, const fs::path& out, double ratio,
                       std::uint64_t seed, std::optional<fs::path> adverse_pool,
                       const std::string& config_json, std::size_t image_size) {
  AugmentationPlan plan;
  plan.source_root = src;
  plan.target_class = target_class;
  plan.reference = reference;
  plan.output_root = out;
  plan.ratio = ratio;
  plan.seed = seed;
  plan.image_size = image_size;
  plan.transfer = transfer_config(config_json);
  plan.adverse_pool = std::move(adverse_pool);
  py::gil_scoped_release release;
  const DatasetManifest m = plan.adverse_pool ? build_real_composite(plan) : build_composite(plan);
  return m.to_json();
}

py::dict read_stwb(const fs::path& path) {
  const WeightStore store = WeightStore::load(path);
  py::dict tensors;
  for (const WeightStore::Entry& e : store.entries()) tensors[py::str(e.name)] = to_array(e.tensor);
  py::dict out;
  out["tensors"] = tensors;
  out["metadata"] = store.metadata_json();
  return out;
}

void write_stwb(const fs::path& path, const std::vector<std::pair<std::string, FloatArray>>& tensors,
                const std::string& metadata_json) {
  WeightStore store;
  for (const auto& [name, array] : tensors) store.put(name, to_tensor(array));
  store.set_metadata_json(metadata_json);
  store.save(path);
}

}  // namespace

PYBIND11_MODULE(_styleaug, m) {
  m.doc() = "Style-transfer data augmentation core";

  static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const ConfigError& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    } catch (const Error& e) {
      py::set_error(error, e.what());
    } catch (const json::exception& e) {
      PyErr_SetString(PyExc_ValueError, e.what());
    }
  });

  m.def("gram", [](const FloatArray& f) { return to_array(gram(to_tensor(f))); },
        "G = F F^T for features [N, M].");
  m.def("content_loss",
        [](const FloatArray& f, const FloatArray& p) {
          return loss_tuple(content_loss(to_tensor(f), to_tensor(p)));
        },
        "(value, gradient) of 1/2 sum (F - P)^2.");
  m.def("style_energy",
        [](const FloatArray& f, const FloatArray& a) {
          return loss_tuple(style_energy(to_tensor(f), to_tensor(a)));
        },
        "(value, gradient) of the normalized Gram distance.");
  m.def("tv_loss", [](const FloatArray& img) { return loss_tuple(tv_loss(to_tensor(img))); },
        "(value, gradient) of the squared neighbour differences of [C, H, W].");

  m.def("load_image", [](const fs::path& p) { return to_array(load_image(p)); },
        "PNG as float32 [3, H, W] in [0, 1].");
  m.def("save_image",
        [](const FloatArray& img, const fs::path& p) { save_image(to_tensor(img), p); });
  m.def("resize",
        [](const FloatArray& img, std::size_t h, std::size_t w) {
          return to_array(resize_bilinear(to_tensor(img), h, w));
        });

  m.def("synthesize", &synthesize_py, py::arg("content"), py::arg("reference"),
        py::arg("config_json") = "", py::arg("weights") = py::none(),
        "Stylize `content` towards `reference`; returns image, snapshots and loss trace.");
  m.def("default_transfer_config",
        [] { return transfer_config_to_json(TransferConfig{}).dump(); });

  m.def("replaced_count", &replaced_count, py::arg("ratio"), py::arg("n"));
  m.def("augment", &augment_py, py::arg("src"), py::arg("target_class"),
        py::arg("reference"), py::arg("out"), py::arg("ratio") = 0.2, py::arg("seed") = 0,
        py::arg("adverse_pool") = py::none(), py::arg("config_json") = "",
        py::arg("image_size") = 16, "Build a composite dataset; returns the manifest JSON.");

  m.def(
      "run_experiment",
      [](const fs::path& plan_file) {
        const ExperimentPlan plan = ExperimentPlan::load(plan_file);
        py::gil_scoped_release release;
        const ExperimentOutcome o = run_experiment_plan(plan);
        return std::make_pair(o.report.to_json(), o.report.to_table());
      },
      "Run an experiment plan; returns (report JSON, text table).");

  m.def(
      "generate_benchmark",
      [](const fs::path& root, std::size_t images_per_class, std::size_t test_size,
         std::size_t adverse_pool_size, float snow, std::uint64_t seed) {
        BenchmarkConfig cfg;
        cfg.images_per_class = images_per_class;
        cfg.test_size = test_size;
        cfg.adverse_pool_size = adverse_pool_size;
        cfg.snow = snow;
        cfg.seed = seed;
        generate_benchmark(root, cfg);
      },
      py::arg("root"), py::arg("images_per_class") = 500, py::arg("test_size") = 200,
      py::arg("adverse_pool_size") = 100, py::arg("snow") = BenchmarkConfig{}.snow,
      py::arg("seed") = 0);

  m.def("read_stwb", &read_stwb, "STWB weight file as {tensors, metadata}.");
  m.def("write_stwb", &write_stwb, py::arg("path"), py::arg("tensors"),
        py::arg("metadata_json") = "{}",
        "Write named float32 tensors (in order) and JSON metadata as STWB.");
}
