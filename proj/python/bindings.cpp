#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lungcadex/cade/losses.hpp"
#include "lungcadex/cadx/similarity.hpp"
#include "lungcadex/cli.hpp"
#include "lungcadex/errors.hpp"
#include "lungcadex/eval/metrics.hpp"
#include "lungcadex/gallery/radiomics.hpp"
#include "lungcadex/ingest/volume.hpp"
#include "lungcadex/phantom/phantom.hpp"
#include "lungcadex/retrieval/retrieve.hpp"

namespace py = pybind11;
using namespace lungcadex;

namespace {

cadx::SimilarityMatrix to_matrix(const std::vector<std::vector<double>>& rows) {
  cadx::SimilarityMatrix m;
  m.rows = static_cast<int>(rows.size());
  m.cols = rows.empty() ? 0 : static_cast<int>(rows.front().size());
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != m.cols) throw ContractError("similarity rows differ in length");
    m.values.insert(m.values.end(), row.begin(), row.end());
  }
  return m;
}

py::dict report_dict(const eval::MetricsReport& r) {
  py::dict d;
  auto opt = [](const std::optional<double>& v) { return v ? py::object(py::float_(*v)) : py::object(py::none()); };
  d["auc"] = opt(r.auc);
  d["accuracy"] = opt(r.accuracy);
  d["sensitivity"] = opt(r.sensitivity);
  d["specificity"] = opt(r.specificity);
  d["f1"] = opt(r.f1);
  d["n_samples"] = r.n_samples;
  return d;
}

}  // namespace

PYBIND11_MODULE(_lungcadex, m) {
  m.doc() = "Lung nodule segmentation, retrieval and diagnosis core.";

  auto error = py::register_exception<Error>(m, "LungCadexError", PyExc_RuntimeError);
  py::register_exception<ParameterError>(m, "ParameterError", error.ptr());
  py::register_exception<InputError>(m, "InputError", error.ptr());
  py::register_exception<ContractError>(m, "ContractError", error.ptr());
  py::register_exception<ValidationError>(m, "ValidationError", error.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", error.ptr());
  py::register_exception<StateError>(m, "StateError", error.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", error.ptr());

  m.def("bce_loss", [](const std::vector<double>& p, const std::vector<double>& g) { return cade::bce_loss(p, g); },
        py::arg("prediction"), py::arg("target"));
  m.def("dice_loss", [](const std::vector<double>& p, const std::vector<double>& g) { return cade::dice_loss(p, g); },
        py::arg("prediction"), py::arg("target"));
  m.def("segmentation_loss",
        [](const std::vector<double>& p, const std::vector<double>& g) { return cade::combined_loss(p, g); },
        py::arg("prediction"), py::arg("target"));

  m.def(
      "sce_loss",
      [](const std::vector<std::vector<double>>& sim, double temperature, double alpha, double beta) {
        const cadx::SceTerms t = cadx::sce_loss_terms(to_matrix(sim), {temperature, alpha, beta});
        return py::make_tuple(t.total, t.ce, t.rce);
      },
      py::arg("similarity"), py::arg("temperature") = 0.07, py::arg("alpha") = 1.0, py::arg("beta") = 1.0,
      "Returns (total, ce, rce).");

  m.def("window_value", [](float hu, double level, double width) { return ingest::window_value(hu, level, width); },
        py::arg("hu"), py::arg("level") = ingest::kDefaultWindowLevel, py::arg("width") = ingest::kDefaultWindowWidth);

  m.def(
      "derive_label",
      [](double score) { return std::string(gallery::to_string(gallery::derive_label(score).cls)); },
      py::arg("raw_score"));

  m.def(
      "split_by_scan",
      [](std::vector<std::string> ids, double fraction, std::uint64_t seed) {
        const ingest::DatasetSplit s = ingest::split_by_scan(std::move(ids), fraction, seed);
        return py::make_tuple(std::vector<std::string>(s.train_scan_ids.begin(), s.train_scan_ids.end()),
                              std::vector<std::string>(s.test_scan_ids.begin(), s.test_scan_ids.end()));
      },
      py::arg("scan_ids"), py::arg("train_fraction") = 0.7, py::arg("seed") = 0);

  m.def(
      "top_k_indices", [](const std::vector<double>& scores, int k) { return retrieval::top_k_indices(scores, k); },
      py::arg("scores"), py::arg("k") = retrieval::kDefaultK);

  m.def(
      "roc_auc", [](const std::vector<double>& s, const std::vector<int>& y) { return eval::roc_auc(s, y); },
      py::arg("scores"), py::arg("labels"));
  m.def(
      "metrics_report",
      [](const std::vector<double>& s, const std::vector<int>& y, double threshold) {
        return report_dict(eval::metrics_report(s, y, threshold));
      },
      py::arg("scores"), py::arg("labels"), py::arg("threshold") = 0.5);

  m.def(
      "generate_phantom",
      [](const std::filesystem::path& out, int volumes, int nodules_per_volume, std::uint64_t seed) {
        phantom::PhantomSpec spec;
        spec.num_volumes = volumes;
        spec.nodules_per_volume = nodules_per_volume;
        spec.seed = seed;
        return phantom::write_phantom(phantom::generate(spec), out);
      },
      py::arg("out_dir"), py::arg("volumes") = 40, py::arg("nodules_per_volume") = 2, py::arg("seed") = 0,
      "Writes a phantom dataset and returns the manifest path.");

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return cli::run(args);
      },
      py::arg("args"), "Runs a command-line invocation in process and returns its exit code.");
}
