#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "emoalign/cli/run.hpp"
#include "emoalign/datagen/corpus.hpp"
#include "emoalign/datagen/templates.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/eval/eval.hpp"
#include "emoalign/eval/judge.hpp"
#include "emoalign/model/checkpoint.hpp"
#include "emoalign/model/model.hpp"
#include "emoalign/numerics/digest.hpp"

namespace py = pybind11;

namespace {

using namespace emoalign;

datagen::TemplateId template_by_name(const std::string& name) {
  for (auto id : {datagen::TemplateId::kContinuation, datagen::TemplateId::kEmotionContinuationData,
                  datagen::TemplateId::kEmotionContinuationTrain, datagen::TemplateId::kSer,
                  datagen::TemplateId::kJudgeQuality, datagen::TemplateId::kJudgeEmpathy,
                  datagen::TemplateId::kJudgeWinrate}) {
    if (datagen::template_file_name(id) == name) return id;
  }
  throw ConfigError("unknown template '" + name + "'");
}

std::optional<model::Emotion> emotion_arg(const std::optional<std::string>& name) {
  if (!name) return std::nullopt;
  auto e = model::emotion_from_name(*name);
  if (!e) throw ConfigError("unknown emotion '" + *name + "'");
  return e;
}

std::string emotion_str(const std::optional<model::Emotion>& e) {
  return e ? std::string(model::emotion_name(*e)) : std::string();
}

py::array_t<double> to_array(const numerics::Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  py::array_t<double> out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the emoalign speech-language alignment toolkit";
  m.attr("__version__") = cli::kToolVersion;

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<ContractError>(m, "ContractError", base.ptr());
  py::register_exception<DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<NumericError>(m, "NumericError", base.ptr());
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<BackendError>(m, "BackendError", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("sha256_hex", [](const std::string& text) { return numerics::sha256_hex(text); });

  m.def("template_names", [] {
    std::vector<std::string> out;
    for (auto id : {datagen::TemplateId::kContinuation, datagen::TemplateId::kEmotionContinuationData,
                    datagen::TemplateId::kEmotionContinuationTrain, datagen::TemplateId::kSer,
                    datagen::TemplateId::kJudgeQuality, datagen::TemplateId::kJudgeEmpathy,
                    datagen::TemplateId::kJudgeWinrate}) {
      out.push_back(datagen::template_file_name(id));
    }
    return out;
  });
  m.def("template_placeholders",
        [](const std::string& name) { return datagen::prompt_template(template_by_name(name)).placeholders(); });
  m.def(
      "render_template",
      [](const std::string& name, const std::map<std::string, std::string>& bindings) {
        return datagen::prompt_template(template_by_name(name)).render(bindings);
      },
      py::arg("name"), py::arg("bindings"));

  m.def(
      "parse_emotion_label", [](const std::string& text) { return emotion_str(eval::parse_emotion_label(text)); },
      "Label name found in the text, or an empty string.");
  m.def(
      "score_ser",
      [](const std::vector<std::string>& truth, const std::vector<std::optional<std::string>>& predicted) {
        std::vector<model::Emotion> t;
        for (const auto& s : truth) t.push_back(*emotion_arg(s));
        std::vector<std::optional<model::Emotion>> p;
        for (const auto& s : predicted) p.push_back(emotion_arg(s));
        return eval::to_json(eval::score_ser(t, p)).dump();
      },
      "SER report as a JSON string; None marks an unparseable prediction.");
  m.def("rubric_quality", &eval::rubric_quality, py::arg("instruction"), py::arg("response"));
  m.def("rubric_empathy", &eval::rubric_empathy, py::arg("emotion"), py::arg("response"));
  m.def("offline_judge", &eval::offline_heuristic_judge, py::arg("prompt"));

  m.def(
      "adapter_output_length",
      [](std::size_t length, int layers, int kernel, int stride, int padding) {
        model::AdapterConfig cfg;
        cfg.n_conv_layers = layers;
        cfg.kernel = kernel;
        cfg.stride = stride;
        cfg.padding = padding;
        return model::adapter_output_length(length, cfg);
      },
      py::arg("length"), py::arg("layers") = 3, py::arg("kernel") = 5, py::arg("stride") = 2, py::arg("padding") = 2);

  m.def(
      "load_checkpoint",
      [](const std::filesystem::path& path) {
        const auto ck = model::load_checkpoint(path);
        py::dict tensors;
        for (const auto& [name, t] : ck.params.entries()) tensors[py::str(name)] = to_array(t);
        return py::make_tuple(ck.metadata.dump(), tensors);
      },
      "(metadata JSON string, {name: ndarray}).");

  m.def(
      "read_corpus",
      [](const std::filesystem::path& dir, const std::string& name) {
        py::list out;
        for (const auto& s : datagen::read_corpus(dir, name)) {
          py::dict d;
          d["id"] = s.id;
          d["kind"] = datagen::corpus_kind_name(s.kind);
          d["tokens"] = s.tokens;
          d["emotion"] = s.emotion ? py::object(py::str(std::string(model::emotion_name(*s.emotion)))) : py::none();
          d["continuation"] = s.continuation;
          d["frames"] = to_array(s.speech.frames);
          out.append(d);
        }
        return out;
      },
      py::arg("dir"), py::arg("name"));

  m.def(
      "load_run_config", [](const std::filesystem::path& path) { return cli::to_json(cli::load_run_config(path)).dump(); },
      "Validated run config with defaults filled in, as a JSON string.");
  m.def(
      "config_hash", [](const std::filesystem::path& path) { return cli::config_hash(cli::load_run_config(path)); });
  m.def(
      "datagen",
      [](const std::filesystem::path& config, int workers) {
        py::gil_scoped_release release;
        const auto r = cli::cmd_datagen(cli::load_run_config(config), workers);
        return nlohmann::json{{"manifest", r.manifest.string()}, {"counts", r.counts}}.dump();
      },
      py::arg("config"), py::arg("workers") = 1);
  m.def(
      "train",
      [](const std::filesystem::path& config, int stage, std::optional<std::string> mode,
         std::optional<std::filesystem::path> init, int workers) {
        py::gil_scoped_release release;
        const auto r = cli::cmd_train(cli::load_run_config(config), {stage, mode, init}, workers);
        return nlohmann::json{{"checkpoint", r.checkpoint.string()},
                              {"loss_log", r.loss_log.string()},
                              {"manifest", r.manifest.string()},
                              {"steps", r.steps}}
            .dump();
      },
      py::arg("config"), py::arg("stage"), py::arg("mode") = py::none(), py::arg("init") = py::none(),
      py::arg("workers") = 1);
  m.def(
      "evaluate",
      [](const std::filesystem::path& config, const std::string& suite,
         const std::vector<std::filesystem::path>& checkpoints, int workers) {
        py::gil_scoped_release release;
        const auto r = cli::cmd_eval(cli::load_run_config(config), {suite, checkpoints}, workers);
        return nlohmann::json{{"report", r.report.string()}, {"manifest", r.manifest.string()}, {"result", r.result}}
            .dump();
      },
      py::arg("config"), py::arg("suite"), py::arg("checkpoints"), py::arg("workers") = 1);
  m.def(
      "report",
      [](const std::filesystem::path& run_dir) {
        py::gil_scoped_release release;
        return cli::cmd_report(run_dir).text;
      },
      py::arg("run_dir"));
}
