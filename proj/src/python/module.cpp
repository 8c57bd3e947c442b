#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mambakick/checkpoint.hpp"
#include "mambakick/config.hpp"
#include "mambakick/dataset.hpp"
#include "mambakick/error.hpp"
#include "mambakick/metrics.hpp"
#include "mambakick/optim.hpp"
#include "mambakick/report.hpp"
#include "mambakick/rng.hpp"
#include "mambakick/ssm.hpp"
#include "mambakick/train.hpp"

namespace py = pybind11;
using namespace mambakick;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-d array");
  Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), m.values().begin());
  return m;
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.values().begin(), m.values().end(), out.mutable_data());
  return out;
}

py::array_t<float> sequence_array(const EmbeddingSequence& s) {
  py::array_t<float> out({s.steps, s.dim});
  std::copy(s.data.begin(), s.data.end(), out.mutable_data());
  return out;
}

py::dict report_dict(const MetricReport& r) {
  py::dict d;
  d["samples"] = r.samples;
  d["accuracy"] = r.accuracy;
  d["macro_precision"] = r.macro_precision;
  d["macro_recall"] = r.macro_recall;
  d["macro_f1"] = r.macro_f1;
  py::list per_class;
  for (const auto& c : r.per_class) {
    py::dict e;
    e["precision"] = c.precision;
    e["recall"] = c.recall;
    e["f1"] = c.f1;
    e["support"] = c.support;
    per_class.append(e);
  }
  d["per_class"] = per_class;
  return d;
}

py::list confusion_rows(const ConfusionMatrix& cm) {
  py::list rows;
  for (std::size_t i = 0; i < cm.classes(); ++i) {
    py::list row;
    for (std::size_t j = 0; j < cm.classes(); ++j) row.append(cm.at(i, j));
    rows.append(row);
  }
  return rows;
}

py::dict subgroup_dict(const SubgroupReport& report) {
  py::dict d;
  for (const auto& g : report) {
    py::dict e;
    e["n"] = g.n;
    e["correct"] = g.correct;
    e["accuracy"] = g.accuracy();
    d[py::str(g.group)] = e;
  }
  return d;
}

py::dict eval_dict(const EvalResult& r) {
  py::dict d = report_dict(r.report);
  d["confusion"] = confusion_rows(r.confusion);
  d["subgroups"] = subgroup_dict(r.subgroups);
  d["predictions"] = r.predictions;
  return d;
}

py::dict summary_dict(const MetricSummary& s) {
  py::dict d;
  d["folds"] = s.folds;
  d["accuracy"] = s.accuracy;
  d["accuracy_std"] = s.accuracy_std;
  d["macro_precision"] = s.macro_precision;
  d["macro_precision_std"] = s.macro_precision_std;
  d["macro_recall"] = s.macro_recall;
  d["macro_recall_std"] = s.macro_recall_std;
  d["macro_f1"] = s.macro_f1;
  d["macro_f1_std"] = s.macro_f1_std;
  return d;
}

TrainConfig config_from(const py::object& config) {
  if (config.is_none()) return TrainConfig{};
  if (py::isinstance<py::str>(config)) return TrainConfig::parse(config.cast<std::string>());
  if (py::isinstance<py::dict>(config)) {
    KeyValues kv;
    for (const auto& [k, v] : config.cast<py::dict>()) {
      const std::string key = py::str(k);
      const std::string value = py::isinstance<py::bool_>(v) ? (v.cast<bool>() ? "true" : "false")
                                                             : std::string(py::str(v));
      kv.set(key, value);
    }
    return TrainConfig::from_kv(kv);
  }
  return config.cast<TrainConfig>();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Selective state-space penalty direction classifier";

  auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", error.ptr());
  py::register_exception<DataError>(m, "DataError", error.ptr());
  py::register_exception<InvalidInputError>(m, "InvalidInputError", error.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", error.ptr());

  m.def("discretize_zoh", [](double a, double b, double delta) {
    const ZohPair p = discretize_zoh(a, b, delta);
    return py::make_tuple(p.a_bar, p.b_bar);
  }, py::arg("a"), py::arg("b"), py::arg("delta"));

  m.def("selective_scan", [](const Array& x, std::size_t state_size, std::uint64_t seed,
                             const std::string& method) {
    const Matrix in = to_matrix(x);
    SsmParams params(in.cols(), state_size);
    Rng rng(seed);
    params.init(rng);
    if (method == "recurrent") return to_array(scan_recurrent(in, params));
    if (method == "parallel") return to_array(scan_parallel(in, params));
    throw ConfigError("unknown scan method '" + method + "'");
  }, py::arg("x"), py::arg("state_size") = 16, py::arg("seed") = 0,
     py::arg("method") = "recurrent",
     "Runs a randomly initialized selective scan over x (steps x channels).");

  m.def("cosine_warmup_lr", &cosine_warmup_lr, py::arg("step"), py::arg("warmup"),
        py::arg("total"), py::arg("lr_max"));

  py::class_<TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_static("parse", &TrainConfig::parse)
      .def_static("load", &TrainConfig::load)
      .def("to_text", &TrainConfig::to_text)
      .def("validate", &TrainConfig::validate)
      .def_readwrite("batch_size", &TrainConfig::batch_size)
      .def_readwrite("max_epochs", &TrainConfig::max_epochs)
      .def_readwrite("patience", &TrainConfig::patience)
      .def_readwrite("lr", &TrainConfig::lr)
      .def_readwrite("weight_decay", &TrainConfig::weight_decay)
      .def_readwrite("seed", &TrainConfig::seed)
      .def_readwrite("folds", &TrainConfig::folds)
      .def_readwrite("d_model", &TrainConfig::d_model)
      .def_readwrite("state_size", &TrainConfig::state_size)
      .def_readwrite("num_layers", &TrainConfig::num_layers)
      .def_readwrite("meta_dim", &TrainConfig::meta_dim)
      .def_readwrite("fusion_hidden", &TrainConfig::fusion_hidden)
      .def_readwrite("dropout", &TrainConfig::dropout)
      .def_readwrite("augment_enabled", &TrainConfig::augment_enabled)
      .def("__eq__", [](const TrainConfig& a, const TrainConfig& b) { return a == b; });

  py::class_<PenaltySample>(m, "PenaltySample")
      .def_readonly("id", &PenaltySample::id)
      .def_readonly("label", &PenaltySample::label)
      .def_readonly("gk_direction", &PenaltySample::gk_direction)
      .def_property_readonly("run", [](const PenaltySample& s) { return sequence_array(s.run); })
      .def_property_readonly("kick", [](const PenaltySample& s) { return sequence_array(s.kick); })
      .def_property_readonly("pitch_side", [](const PenaltySample& s) { return s.meta.pitch_side; })
      .def_property_readonly("dominant_foot",
                             [](const PenaltySample& s) { return s.meta.dominant_foot; });

  py::class_<Dataset>(m, "Dataset")
      .def_static("load", &load_dataset, py::arg("path"))
      .def("save", [](const Dataset& d, const std::filesystem::path& p) { save_dataset(p, d); })
      .def("binarize", [](const Dataset& d) { return binarize(d); })
      .def("labels", &Dataset::labels)
      .def("sidecar", [](const Dataset& d) { return manifest_sidecar(d); })
      .def_property_readonly("dim", [](const Dataset& d) { return d.manifest.dim; })
      .def_property_readonly("classes", [](const Dataset& d) { return d.manifest.classes; })
      .def_property_readonly("backbone", [](const Dataset& d) { return d.manifest.backbone; })
      .def_property_readonly("class_counts", [](const Dataset& d) { return d.manifest.class_counts; })
      .def("__len__", [](const Dataset& d) { return d.samples.size(); })
      .def("__getitem__", [](const Dataset& d, std::size_t i) {
        if (i >= d.samples.size()) throw py::index_error();
        return d.samples[i];
      });

  m.def("generate_synthetic", [](std::size_t samples, std::size_t dim, std::uint64_t seed,
                                 double noise, double signal, double sharpness) {
    SyntheticConfig c;
    c.num_samples = samples;
    c.dim = dim;
    c.seed = seed;
    c.noise_std = noise;
    c.signal_strength = signal;
    c.metadata_sharpness = sharpness;
    return generate_synthetic(c);
  }, py::arg("samples") = 622, py::arg("dim") = 16, py::arg("seed") = 0, py::arg("noise") = 0.1,
     py::arg("signal") = 1.0, py::arg("sharpness") = 1.0);

  m.def("stratified_kfold", [](const Dataset& d, std::size_t k, std::uint64_t seed) {
    return stratified_kfold(d.samples, d.manifest.classes, k, seed).fold_of;
  }, py::arg("dataset"), py::arg("k"), py::arg("seed") = 0);

  m.def("class_weights", [](const std::vector<int>& labels, std::size_t classes) {
    return compute_class_weights(labels, classes);
  }, py::arg("labels"), py::arg("classes"));

  m.def("evaluate_predictions", [](const Dataset& d, const std::vector<int>& predictions) {
    return eval_dict(evaluate_predictions(d.samples, predictions, d.manifest.classes));
  }, py::arg("dataset"), py::arg("predictions"));

  m.def("gk_baseline", [](const Dataset& d) {
    return eval_dict(gk_baseline(d.samples, d.manifest.classes));
  }, py::arg("dataset"));

  m.def("cross_validate", [](const Dataset& d, const py::object& config, std::size_t jobs,
                             const py::object& out_dir) {
    const TrainConfig c = config_from(config);
    CrossValOptions options;
    options.jobs = jobs;
    CrossValResult cv;
    {
      py::gil_scoped_release release;
      cv = cross_validate(d, c, options);
    }
    if (!out_dir.is_none()) write_crossval_run(out_dir.cast<std::filesystem::path>(), d, c, cv);
    py::dict r;
    r["summary"] = summary_dict(cv.summary);
    r["pooled"] = report_dict(cv.pooled_report);
    r["confusion"] = confusion_rows(cv.pooled);
    r["subgroups"] = subgroup_dict(cv.subgroups);
    r["predictions"] = cv.predictions;
    r["fold_of"] = cv.split.fold_of;
    py::list folds;
    for (const auto& f : cv.folds) {
      py::dict e = report_dict(f.eval.report);
      e["fold"] = f.fold;
      e["best_epoch"] = f.train.best_epoch;
      e["stopped_epoch"] = f.train.stopped_epoch;
      folds.append(e);
    }
    r["folds"] = folds;
    r["gk"] = cv.gk ? py::object(eval_dict(*cv.gk)) : py::object(py::none());
    return r;
  }, py::arg("dataset"), py::arg("config") = py::none(), py::arg("jobs") = 1,
     py::arg("out_dir") = py::none());

  m.def("evaluate_checkpoint", [](const std::filesystem::path& checkpoint, const Dataset& d) {
    const Checkpoint ck = load_checkpoint(checkpoint);
    return eval_dict(evaluate(ck.model, d.samples));
  }, py::arg("checkpoint"), py::arg("dataset"));

  m.def("render_report", [](const std::filesystem::path& dir) { return render_text_report(dir); },
        py::arg("run_dir"));
}
