#include <fstream>

#include "emoalign/cli/run.hpp"
#include "emoalign/datagen/corpus.hpp"
#include "emoalign/datagen/teacher.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/eval/eval.hpp"
#include "emoalign/eval/suites.hpp"
#include "emoalign/model/checkpoint.hpp"
#include "emoalign/numerics/digest.hpp"

namespace emoalign::cli {

namespace {

using alignment::Stage;
using alignment::TrainMode;

const char* const kCorpusTag = "corpus.json";

std::string short_hash(const std::string& hex) { return hex.substr(0, 12); }

void record_corpus(RunManifest& m, const RunConfig& cfg, const std::string& name, bool as_input) {
  for (const char* ext : {".jsonl", ".frames"}) {
    const auto file = name + ext;
    const auto sum = file_sha256(cfg.paths.corpus_dir / file);
    (as_input ? m.inputs : m.artifacts)["corpus_dir/" + file] = sum;
  }
}

/// Reads a corpus after checking that it was generated for this world.
std::vector<datagen::Sample> load_corpus(const RunConfig& cfg, const std::string& name) {
  const auto tag_path = cfg.paths.corpus_dir / kCorpusTag;
  if (!fs::exists(tag_path)) {
    throw ContractError("no corpus in " + cfg.paths.corpus_dir.string() + "; run datagen first");
  }
  std::ifstream in(tag_path);
  const auto tag = nlohmann::json::parse(in);
  if (tag.value("world_hash", "") != world_hash(cfg)) {
    throw ContractError("corpus in " + cfg.paths.corpus_dir.string() +
                        " was generated for a different world config; rerun datagen");
  }
  return datagen::read_corpus(cfg.paths.corpus_dir, name);
}

std::vector<datagen::Sample> head(std::vector<datagen::Sample> samples, int limit) {
  if (limit > 0 && samples.size() > static_cast<std::size_t>(limit)) samples.resize(static_cast<std::size_t>(limit));
  return samples;
}

model::Checkpoint load_existing_checkpoint(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw ConfigError("checkpoint " + path.string() + " does not exist");
  return model::load_checkpoint(path);
}

model::ModelConfig checkpoint_model(const model::Checkpoint& ck, const RunConfig& cfg) {
  if (!ck.metadata.contains("model")) return cfg.model;
  return ck.metadata.at("model").get<model::ModelConfig>();
}

/// Writes bytes unless the file already holds exactly them; a file with other
/// content is never replaced.
void write_once(const fs::path& path, const std::vector<unsigned char>& bytes) {
  if (fs::exists(path)) {
    const auto existing = model::read_file_bytes(path);
    if (existing == bytes) return;
    throw IoError("refusing to overwrite " + path.string() + " with different content");
  }
  model::write_file_atomic(path, bytes);
}

}  // namespace

DatagenResult cmd_datagen(const RunConfig& cfg, int workers) {
  cfg.validate();
  RunLock lock(cfg.paths.run_dir);
  RunManifest manifest;
  manifest.command = "datagen";
  manifest.config_hash = config_hash(cfg);
  manifest.started_at = utc_now();

  const auto& w = cfg.world;
  const auto teacher = datagen::build_teacher(w, cfg.model.lm);
  const datagen::SpeechWorld speech(w);
  auto gen = [&](datagen::CorpusKind kind, int count, std::uint64_t stream) {
    return datagen::gen_corpus(kind, w, teacher, speech, static_cast<std::size_t>(count), stream, workers);
  };
  auto construct = [&](const std::vector<datagen::Sample>& s, bool emotion_aware) {
    return datagen::construct_all(s, teacher, emotion_aware, w.max_new, workers);
  };

  fs::create_directories(cfg.paths.corpus_dir);
  const auto ser_train = gen(datagen::CorpusKind::kSer, w.ser_size, 2);
  const auto ser_test = gen(datagen::CorpusKind::kSer, w.ser_heldout, 3);
  const std::vector<std::pair<std::string, std::vector<datagen::Sample>>> corpora = {
      {"asr_train", construct(gen(datagen::CorpusKind::kAsr, w.asr_size, 0), false)},
      {"asr_test", construct(gen(datagen::CorpusKind::kAsr, w.asr_heldout, 1), false)},
      {"ser_train", ser_train},
      {"ser_test", ser_test},
      {"ser_train_emo", construct(ser_train, true)},
      {"ser_train_plain", construct(ser_train, false)},
      {"ser_test_plain", construct(ser_test, false)},
  };

  DatagenResult result;
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [name, samples] : corpora) {
    datagen::write_corpus(cfg.paths.corpus_dir, name, samples);
    record_corpus(manifest, cfg, name, false);
    result.counts[name] = samples.size();
    counts[name] = samples.size();
  }
  const nlohmann::json tag = {{"world_hash", world_hash(cfg)}, {"counts", counts}};
  const auto text = tag.dump(2) + "\n";
  model::write_file_atomic(cfg.paths.corpus_dir / kCorpusTag, {text.begin(), text.end()});

  manifest.details = {{"counts", counts}, {"world_hash", world_hash(cfg)}};
  manifest.finished_at = utc_now();
  result.manifest = write_manifest(cfg.paths.run_dir, "datagen-" + short_hash(manifest.config_hash), manifest);
  return result;
}

TrainResult cmd_train(const RunConfig& cfg, const TrainRequest& req, int workers) {
  (void)workers;
  cfg.validate();
  if (req.stage != 1 && req.stage != 2) throw ConfigError("--stage must be 1 or 2");
  const Stage stage = req.stage == 1 ? Stage::kStage1 : Stage::kStage2;
  const TrainMode mode =
      alignment::mode_from_name(req.mode.value_or(stage == Stage::kStage1 ? "stage1_only" : cfg.mode));
  alignment::trainable_params(stage, mode);
  if (stage == Stage::kStage1 && req.init) throw ConfigError("stage 1 starts from a fresh student; drop --init");
  if (mode == TrainMode::kEmoNoPretrain && req.init) throw ConfigError("emo_no_pretrain starts without --init");
  if (stage == Stage::kStage2 && mode != TrainMode::kEmoNoPretrain && !req.init) {
    throw ConfigError("stage-2 mode " + alignment::mode_name(mode) + " needs --init with a stage-1 checkpoint");
  }
  std::optional<model::Checkpoint> init_ck;
  if (req.init) {
    init_ck = load_existing_checkpoint(*req.init);
    if (init_ck->metadata.value("stage", "") != "stage1") {
      throw ConfigError("--init " + req.init->string() + " is not a stage-1 checkpoint");
    }
    if (nlohmann::json(checkpoint_model(*init_ck, cfg)) != nlohmann::json(cfg.model)) {
      throw ConfigError("--init checkpoint was trained with a different model config");
    }
  }

  RunLock lock(cfg.paths.run_dir);
  RunManifest manifest;
  manifest.command = "train";
  manifest.config_hash = config_hash(cfg);
  manifest.started_at = utc_now();

  const auto teacher = datagen::build_teacher(cfg.world, cfg.model.lm);
  numerics::ParameterStore init =
      init_ck ? init_ck->params.clone() : model::init_model(cfg.model, cfg.init_seed(), &teacher.params);
  if (req.init) manifest.inputs["init"] = file_sha256(*req.init);

  std::string corpus;
  if (stage == Stage::kStage1) {
    corpus = "asr_train";
  } else if (mode == TrainMode::kBlspMultitask) {
    corpus = "ser_train_plain";
  } else if (mode == TrainMode::kBlspSer) {
    corpus = "ser_train";
  } else {
    corpus = "ser_train_emo";
  }
  const auto data = load_corpus(cfg, corpus);
  record_corpus(manifest, cfg, corpus, true);

  std::vector<std::string> log_lines;
  auto sink = [&](const alignment::LossReport& r) { log_lines.push_back(alignment::to_json(r).dump()); };
  const auto& sc = stage == Stage::kStage1 ? cfg.stage1 : cfg.stage2;
  const auto params = stage == Stage::kStage1 ? alignment::train_stage1(data, teacher, cfg.model, init, sc, sink)
                                              : alignment::train_stage2(data, cfg.model, mode, init, sc, sink);

  const auto init_checksum = init.checksum();
  const auto run_tag = short_hash(numerics::sha256_hex(manifest.config_hash + "|" + alignment::stage_name(stage) + "|" +
                                                       alignment::mode_name(mode) + "|" + init_checksum));
  TrainResult result;
  result.steps = log_lines.size();
  const auto stem = alignment::stage_name(stage) + "-" + alignment::mode_name(mode) + "-" + run_tag + "-step" +
                    std::to_string(result.steps);

  auto ck = alignment::make_checkpoint(params, cfg.model, stage, mode, sc);
  ck.metadata["config_hash"] = manifest.config_hash;
  ck.metadata["init_checksum"] = init_checksum;
  ck.metadata["steps"] = result.steps;
  fs::create_directories(cfg.paths.checkpoint_dir);
  result.checkpoint = cfg.paths.checkpoint_dir / (stem + ".ckpt");
  write_once(result.checkpoint, model::serialize_checkpoint(ck));

  fs::create_directories(cfg.paths.run_dir / "logs");
  result.loss_log = cfg.paths.run_dir / "logs" / (stem + ".jsonl");
  std::string log_text;
  for (const auto& line : log_lines) log_text += line + "\n";
  model::write_file_atomic(result.loss_log, {log_text.begin(), log_text.end()});

  manifest.artifacts["checkpoint_dir/" + result.checkpoint.filename().string()] = file_sha256(result.checkpoint);
  manifest.artifacts["run_dir/logs/" + result.loss_log.filename().string()] = file_sha256(result.loss_log);
  manifest.details = {{"stage", alignment::stage_name(stage)},
                      {"mode", alignment::mode_name(mode)},
                      {"steps", result.steps},
                      {"init_checksum", init_checksum},
                      {"trainable_checksum", ck.metadata.at("trainable_checksum")}};
  manifest.finished_at = utc_now();
  result.manifest = write_manifest(cfg.paths.run_dir, "train-" + stem, manifest);
  return result;
}

EvalResult cmd_eval(const RunConfig& cfg, const EvalRequest& req, int workers) {
  cfg.validate();
  const std::string& suite = req.suite;
  if (suite != "ser" && suite != "agreement" && suite != "response" && suite != "winrate") {
    throw ConfigError("unknown suite '" + suite + "' (ser, agreement, response, winrate)");
  }
  const std::size_t want = suite == "winrate" ? 2 : 1;
  if (req.checkpoints.size() != want) {
    throw ConfigError("suite " + suite + " takes " + std::to_string(want) + " checkpoint(s)");
  }
  std::vector<model::Checkpoint> cks;
  for (const auto& p : req.checkpoints) cks.push_back(load_existing_checkpoint(p));

  RunLock lock(cfg.paths.run_dir);
  RunManifest manifest;
  manifest.command = "eval";
  manifest.config_hash = config_hash(cfg);
  manifest.started_at = utc_now();

  const auto mc = checkpoint_model(cks[0], cfg);
  if (cks.size() == 2 && nlohmann::json(checkpoint_model(cks[1], cfg)) != nlohmann::json(mc)) {
    throw ConfigError("winrate checkpoints use different model configs");
  }
  nlohmann::json result;
  std::string corpus;
  if (suite == "ser") {
    corpus = "ser_test";
    const auto test = load_corpus(cfg, corpus);
    result = {{"ser", eval::to_json(eval::eval_ser(cks[0].params, mc, test, cfg.eval.ser_max_new, workers))},
              {"head_accuracy", eval::ser_head_accuracy(cks[0].params, mc, test, workers)}};
  } else if (suite == "agreement") {
    corpus = "asr_test";
    const auto test = load_corpus(cfg, corpus);
    const auto teacher = datagen::build_teacher(cfg.world, mc.lm);
    result = {{"agreement", eval::to_json(eval::eval_agreement(cks[0].params, mc, teacher, test, cfg.eval.max_new, workers))},
              {"continuation_ce", eval::continuation_cross_entropy(cks[0].params, mc, test, workers)}};
  } else if (suite == "response") {
    corpus = "ser_test";
    const auto test = head(load_corpus(cfg, corpus), cfg.eval.response_limit);
    auto backend = eval::make_backend(cfg.judge);
    result = eval::to_json(
        eval::eval_responses(cks[0].params, mc, test, *backend, cfg.judge.concurrency, cfg.eval.max_new, workers));
  } else {
    corpus = "ser_test_plain";
    const auto test = head(load_corpus(cfg, corpus), cfg.eval.winrate_limit);
    auto backend = eval::make_backend(cfg.judge);
    result = eval::to_json(eval::eval_winrate(cks[0].params, cks[1].params, mc, test, *backend, cfg.judge.concurrency,
                                              cfg.eval.max_new, workers));
  }
  record_corpus(manifest, cfg, corpus, true);

  std::string name = suite + "-" + req.checkpoints[0].stem().string();
  if (suite == "winrate") name += "-vs-" + req.checkpoints[1].stem().string();
  nlohmann::json ckpts = nlohmann::json::array();
  for (std::size_t i = 0; i < cks.size(); ++i) {
    const auto sum = file_sha256(req.checkpoints[i]);
    manifest.inputs["checkpoint_" + std::to_string(i)] = sum;
    ckpts.push_back({{"name", req.checkpoints[i].stem().string()},
                     {"sha256", sum},
                     {"stage", cks[i].metadata.value("stage", "")},
                     {"mode", cks[i].metadata.value("mode", "")}});
  }
  const nlohmann::json report = {{"schema_version", kSchemaVersion},
                                 {"suite", suite},
                                 {"config_hash", manifest.config_hash},
                                 {"checkpoints", ckpts},
                                 {"result", result}};
  fs::create_directories(cfg.paths.run_dir / "reports");
  EvalResult out;
  out.report = cfg.paths.run_dir / "reports" / (name + ".json");
  const auto text = report.dump(2) + "\n";
  model::write_file_atomic(out.report, {text.begin(), text.end()});
  out.result = result;
  manifest.artifacts["run_dir/reports/" + out.report.filename().string()] = file_sha256(out.report);
  manifest.details = {{"suite", suite}};
  manifest.finished_at = utc_now();
  out.manifest = write_manifest(cfg.paths.run_dir, "eval-" + name, manifest);
  return out;
}

}  // namespace emoalign::cli
