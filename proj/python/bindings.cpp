#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "avu/bundle.hpp"
#include "avu/config.hpp"
#include "avu/errors.hpp"
#include "avu/gradsuite.hpp"
#include "avu/parallel.hpp"
#include "avu/synth.hpp"
#include "avu/trainer.hpp"
#include "avu/vocab.hpp"

namespace py = pybind11;
using namespace avu;

namespace {

// Copies `values` into a new array of the given shape.
template <typename T, typename U>
py::array_t<T> to_array(const std::vector<U>& values, std::vector<py::ssize_t> shape) {
  py::array_t<T> out(shape);
  T* dst = out.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) dst[i] = static_cast<T>(values[i]);
  return out;
}

Task task_arg(const std::string& name) {
  const auto t = parse_task(name);
  if (!t) throw ConfigError("unknown task '" + name + "'");
  return *t;
}

RunConfig run_config(const std::string& text) {
  RunConfig rc;
  if (!text.empty()) {
    try {
      rc = run_config_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(e.what());
    }
  }
  rc.sync();
  return rc;
}

TaskPools group(const std::vector<FeatureBundle>& bundles) {
  TaskPools pools;
  for (const auto& b : bundles) pools[task_index(b.task)].push_back(b);
  return pools;
}

py::dict labels_dict(const FeatureBundle& b) {
  py::dict d;
  d["labeled"] = b.labels.labeled;
  d["prompt_template"] = b.labels.prompt_template;
  const auto t = static_cast<py::ssize_t>(b.segments);
  if (const auto* l = std::get_if<AveLabels>(&b.labels.payload)) {
    d["classes"] = to_array<std::uint8_t>(l->classes, {t});
  } else if (const auto* l = std::get_if<AvvpLabels>(&b.labels.payload)) {
    const auto k = static_cast<py::ssize_t>(l->num_classes);
    d["audio"] = to_array<std::uint8_t>(l->audio, {t, k});
    d["visual"] = to_array<std::uint8_t>(l->visual, {t, k});
  } else if (const auto* l = std::get_if<SslLabels>(&b.labels.payload)) {
    d["bins"] = to_array<std::int32_t>(l->bins, {t});
  } else if (const auto* l = std::get_if<AvsLabels>(&b.labels.payload)) {
    d["masks"] = to_array<std::uint8_t>(l->masks, {t, b.height, b.width});
  } else if (const auto* l = std::get_if<AvqaLabels>(&b.labels.payload)) {
    d["answer"] = l->answer;
  }
  return d;
}

py::dict prediction_dict(const Prediction& p, const Model& m) {
  const auto& c = m.config();
  const auto t = static_cast<py::ssize_t>(c.segments);
  const auto patches = static_cast<py::ssize_t>(c.patches);
  py::dict d;
  d["task"] = std::string(task_name(p.task));
  d["program"] = program_to_text(p.program, m.vocab());
  d["tokens"] = p.program.tokens;
  if (!p.heatmap.empty()) d["heatmap"] = to_array<double>(p.heatmap, {t, patches});
  if (!p.masks.empty())
    d["masks"] = to_array<std::uint8_t>(
        p.masks, {t, static_cast<py::ssize_t>(c.height), static_cast<py::ssize_t>(c.width)});
  d["prompt_temporal"] = to_array<double>(p.prompt_temporal, {2, t});
  d["prompt_spatial"] = to_array<double>(p.prompt_spatial, {t, patches + 1});
  d["guide_weights"] = to_array<double>(p.guide_weights, {t, patches});
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "audio-visual unified model core";

  static py::exception<Error> base(m, "AvuError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(base, (e.kind() + ": " + e.what()).c_str());
    }
  });

  m.def("set_max_workers", &set_max_workers, py::arg("n"));
  m.def("max_workers", &max_workers);
  m.attr("TASKS") = py::make_tuple("AVE", "AVVP", "SSL", "AVS", "AVQA");

  py::class_<FeatureBundle>(m, "Bundle")
      .def_property_readonly("task", [](const FeatureBundle& b) { return std::string(task_name(b.task)); })
      .def_readonly("segments", &FeatureBundle::segments)
      .def_readonly("patches", &FeatureBundle::patches)
      .def_readonly("audio_dim", &FeatureBundle::audio_dim)
      .def_readonly("visual_dim", &FeatureBundle::visual_dim)
      .def_readonly("prompt_dim", &FeatureBundle::prompt_dim)
      .def_readonly("height", &FeatureBundle::height)
      .def_readonly("width", &FeatureBundle::width)
      .def_property_readonly("audio", [](const FeatureBundle& b) {
        return to_array<float>(b.audio, {b.segments, b.audio_dim});
      })
      .def_property_readonly("frame", [](const FeatureBundle& b) {
        return to_array<float>(b.frame, {b.segments, b.visual_dim});
      })
      .def_property_readonly("patch", [](const FeatureBundle& b) {
        return to_array<float>(b.patch, {b.segments, b.patches, b.visual_dim});
      })
      .def_property_readonly("labels", &labels_dict)
      .def("encode", [](const FeatureBundle& b) {
        const auto bytes = encode_bundle(b);
        return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
      })
      .def_static("decode", [](const py::bytes& data) {
        const std::string s = data;
        return decode_bundle(std::vector<std::uint8_t>(s.begin(), s.end()));
      })
      .def_static("read", [](const std::string& path) { return read_bundle_file(path); })
      .def("write", [](const FeatureBundle& b, const std::string& path) { write_bundle_file(b, path); })
      .def("__repr__", [](const FeatureBundle& b) {
        return "<Bundle " + std::string(task_name(b.task)) + " T=" + std::to_string(b.segments) +
               " M=" + std::to_string(b.patches) + ">";
      });

  m.def(
      "synth",
      [](const std::string& config, std::size_t n, const std::string& task, std::uint64_t stream) {
        return synth_generate(run_config(config).scene, n, task_arg(task), stream);
      },
      py::arg("config"), py::arg("n"), py::arg("task"), py::arg("stream"));

  py::class_<Model>(m, "Model")
      .def(py::init([](const std::string& config) { return Model(run_config(config).model); }),
           py::arg("config") = "")
      .def_static("load", [](const std::string& path) { return load_checkpoint(path); })
      .def("save", [](const Model& model, const std::string& path) { save_checkpoint(model, path); })
      .def_property_readonly("config", [](const Model& model) { return to_json(model.config()).dump(); })
      .def_property_readonly("num_parameters", [](const Model& model) {
        std::size_t n = 0;
        for (const auto& e : model.params().entries()) n += e.tensor.numel();
        return n;
      })
      .def("check", &Model::check_bundle)
      .def("loss", [](const Model& model, const FeatureBundle& b) {
        NoGradGuard guard;
        return model.loss(b).item();
      })
      .def("predict", [](const Model& model, const FeatureBundle& b) {
        Prediction p;
        {
          py::gil_scoped_release release;
          p = model.predict(b);
        }
        return prediction_dict(p, model);
      });

  m.def(
      "train",
      [](Model& model, const std::vector<FeatureBundle>& bundles, const std::string& config) {
        const TaskPools pools = group(bundles);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(model, pools, run_config(config).train);
        }
        py::list out;
        for (const auto& rec : r.curve)
          out.append(py::make_tuple(rec.iteration, std::string(task_name(rec.task)), rec.loss, rec.lr));
        return out;
      },
      py::arg("model"), py::arg("bundles"), py::arg("config") = "");

  m.def(
      "evaluate",
      [](const Model& model, const std::vector<FeatureBundle>& bundles) {
        const TaskPools pools = group(bundles);
        py::gil_scoped_release release;
        return evaluate(model, pools).values;
      },
      py::arg("model"), py::arg("bundles"));

  m.def(
      "gradient_suite",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& r : gradient_suite(seed)) {
          py::dict d;
          d["module"] = r.module;
          d["passed"] = r.passed;
          d["elements"] = r.compare.elements;
          d["max_rel"] = r.compare.max_rel;
          d["max_abs"] = r.compare.max_abs;
          out.append(d);
        }
        return out;
      },
      py::arg("seed"));
}
