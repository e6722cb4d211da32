#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ctxdit/eval.hpp"
#include "ctxdit/image_io.hpp"
#include "ctxdit/train.hpp"
#include "ctxdit/verify.hpp"

namespace py = pybind11;
using namespace ctxdit;
using nlohmann::json;

namespace {

using Array = py::array_t<Scalar, py::array::c_style | py::array::forcecast>;

py::object to_py(const json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

json from_py(const py::object& o) {
  if (o.is_none()) return json::object();
  return json::parse(py::str(py::module_::import("json").attr("dumps")(o)).cast<std::string>());
}

py::array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array a(shape);
  std::copy(t.data().begin(), t.data().end(), a.mutable_data());
  return std::move(a);
}

Tensor from_numpy(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<Scalar>(a.data(), a.data() + a.size()));
}

json prompt_json(const data::Prompt& p) { return {{"first", p.first}, {"later", p.later}}; }

data::Prompt prompt_from(const py::object& o) {
  auto j = from_py(o);
  try {
    return {j.at("first").get<std::vector<std::size_t>>(), j.at("later").get<std::vector<std::size_t>>()};
  } catch (const json::exception& e) {
    throw VocabError(std::string("prompt needs integer lists 'first' and 'later': ") + e.what());
  }
}

py::dict sample_dict(const data::Sample& s) {
  py::dict d;
  d["index"] = s.index;
  d["spec"] = s.spec.str();
  d["prompt"] = to_py(prompt_json(s.prompt));
  d["ref_image"] = to_numpy(s.ref_image);
  d["ref_mask"] = to_numpy(s.ref_mask);
  d["video"] = to_numpy(s.video);
  d["video_masks"] = to_numpy(s.video_masks);
  d["ref_illumination"] = s.ref_illum;
  d["video_illumination"] = s.scene.illumination;
  return d;
}

py::dict step_dict(const train::StepResult& r) {
  py::dict d;
  d["step"] = r.step;
  d["l_gen"] = r.loss.l_gen;
  d["l_ref"] = r.loss.l_ref;
  d["l_total"] = r.loss.l_total;
  d["lambda"] = r.loss.lambda;
  d["lr"] = r.lr;
  return d;
}

// A trainer that owns its dataset so Python can drop the original.
struct PyTrainer {
  std::shared_ptr<const data::Dataset> ds;
  train::Trainer trainer;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Reference-conditioned video diffusion on synthetic sprites";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<VocabError>(m, "VocabError", base.ptr());
  py::register_exception<FormatError>(m, "FormatError", base.ptr());
  py::register_exception<ExtractionError>(m, "ExtractionError", base.ptr());

  py::class_<data::Dataset, std::shared_ptr<data::Dataset>>(m, "Dataset")
      .def_static(
          "generate",
          [](const py::object& config) {
            auto cfg = data::gen_config_from_json(from_py(config));
            py::gil_scoped_release release;
            return std::make_shared<data::Dataset>(data::generate_dataset(cfg));
          },
          py::arg("config") = py::none(),
          "Generate a dataset from a config dict (size, frames, n_samples, seed, speed, ...).")
      .def_static(
          "read", [](const std::string& path) { return std::make_shared<data::Dataset>(data::read_dataset(path)); },
          py::arg("path"))
      .def(
          "write", [](const data::Dataset& ds, const std::string& path) { data::write_dataset(ds, path); },
          py::arg("path"))
      .def("__len__", [](const data::Dataset& ds) { return ds.samples.size(); })
      .def(
          "__getitem__",
          [](const data::Dataset& ds, std::size_t i) {
            if (i >= ds.samples.size()) throw py::index_error();
            return sample_dict(ds.samples[i]);
          },
          py::arg("index"))
      .def_property_readonly("config", [](const data::Dataset& ds) { return to_py(data::to_json(ds.config)); })
      .def_property_readonly("dropped", [](const data::Dataset& ds) { return ds.dropped.size(); });

  py::class_<model::Model>(m, "Model")
      .def_static(
          "load", [](const std::string& path) { return train::model_from_checkpoint(train::load_checkpoint(path)); },
          py::arg("path"), "Load the weights of a checkpoint.")
      .def_property_readonly("config", [](const model::Model& mo) { return to_py(model::to_json(mo.config())); })
      .def_property_readonly("parameter_count", &model::Model::parameter_count)
      .def(
          "generate",
          [](const model::Model& mo, const Array& ref_image, const py::object& prompt, std::size_t steps,
             std::uint64_t seed, const std::string& sampler, double guidance) {
            if (sampler != "ddim" && sampler != "ancestral") throw ConfigError("unknown sampler: " + sampler);
            auto ref = from_numpy(ref_image);
            auto p = prompt_from(prompt);
            eval::GenerateOptions opts{steps, sampler == "ancestral", guidance};
            Tensor video;
            {
              py::gil_scoped_release release;
              RngState rng(seed);
              video = eval::generate_video(mo, ref, p, opts, rng);
            }
            return to_numpy(video);
          },
          py::arg("ref_image"), py::arg("prompt"), py::arg("steps") = 20, py::arg("seed") = 0,
          py::arg("sampler") = "ddim", py::arg("guidance") = 1.0,
          "Sample a [F, H, W, 3] video for a [H, W, 3] reference image in [0, 1].");

  py::class_<PyTrainer>(m, "Trainer")
      .def(py::init([](const py::object& model_config, const py::object& train_config,
                       std::shared_ptr<data::Dataset> ds) {
             auto mc = model::model_config_from_json(from_py(model_config));
             auto tc = train::train_config_from_json(from_py(train_config));
             return std::make_unique<PyTrainer>(PyTrainer{ds, train::Trainer(mc, tc, *ds)});
           }),
           py::arg("model_config"), py::arg("train_config"), py::arg("dataset"))
      .def_static(
          "resume",
          [](const std::string& path, std::shared_ptr<data::Dataset> ds) {
            auto ck = train::load_checkpoint(path);
            return std::make_unique<PyTrainer>(PyTrainer{ds, train::Trainer::resume(ck, *ds)});
          },
          py::arg("path"), py::arg("dataset"))
      .def(
          "step",
          [](PyTrainer& t) {
            train::StepResult r;
            {
              py::gil_scoped_release release;
              r = t.trainer.step();
            }
            return step_dict(r);
          },
          "Run one optimizer step and return its losses.")
      .def(
          "run",
          [](PyTrainer& t, const py::object& on_step) {
            py::list out;
            while (t.trainer.current_step() < t.trainer.config().total_steps) {
              train::StepResult r;
              {
                py::gil_scoped_release release;
                r = t.trainer.step();
              }
              auto d = step_dict(r);
              if (!on_step.is_none()) on_step(d);
              out.append(d);
            }
            return out;
          },
          py::arg("on_step") = py::none(), "Train to total_steps; returns the per-step losses.")
      .def(
          "save", [](const PyTrainer& t, const std::string& path) { train::save_checkpoint(t.trainer.checkpoint(), path); },
          py::arg("path"))
      .def_property_readonly("current_step", [](const PyTrainer& t) { return t.trainer.current_step(); })
      .def_property_readonly("model", [](const PyTrainer& t) { return t.trainer.model().clone(); })
      .def_property_readonly("config", [](const PyTrainer& t) { return to_py(train::to_json(t.trainer.config())); });

  m.def(
      "evaluate",
      [](const std::string& checkpoint, const data::Dataset& ds, const py::object& config) {
        auto ec = eval::eval_config_from_json(from_py(config));
        auto ck = train::load_checkpoint(checkpoint);
        eval::MetricReport r;
        {
          py::gil_scoped_release release;
          r = eval::evaluate(ck, ds, ec);
        }
        return to_py(eval::to_json(r));
      },
      py::arg("checkpoint"), py::arg("dataset"), py::arg("config") = py::none(),
      "Evaluate a checkpoint on a dataset; returns the metric report as a dict.");

  m.def(
      "temporal_consistency", [](const Array& video) { return eval::temporal_consistency(from_numpy(video)).value; },
      py::arg("video"), "Mean cosine similarity of consecutive frames.");
  m.def(
      "extract_attributes", [](const Array& image) { return eval::extract_attributes(from_numpy(image)).str(); },
      py::arg("image"), "Shape, colors and accessory read back from a rendered frame.");
  m.def(
      "parse_prompt", [](const std::string& text) { return to_py(prompt_json(data::parse_prompt(text))); },
      py::arg("text"), "Prompt ids from 'shape=square,body_color=red,...,motion=3,background=1,light=2'.");
  m.def(
      "read_ppm", [](const std::string& path) { return to_numpy(image_io::read_ppm(path)); }, py::arg("path"));
  m.def(
      "write_ppm", [](const std::string& path, const Array& image) { image_io::write_ppm(path, from_numpy(image)); },
      py::arg("path"), py::arg("image"));

  m.def(
      "verify",
      [](const std::string& filter, bool sabotage_ref_mask) {
        verify::VerifyOptions opts;
        opts.filter = filter;
        opts.sabotage_ref_mask = sabotage_ref_mask;
        std::vector<verify::CheckResult> results;
        {
          py::gil_scoped_release release;
          results = verify::run_all(opts);
        }
        return to_py(verify::to_json(results));
      },
      py::arg("filter") = "", py::arg("sabotage_ref_mask") = false, "Run the invariant catalog.");
  m.def("check_names", &verify::check_names);
}
