#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include "emoalign/cli/run.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/model/checkpoint.hpp"

namespace emoalign::cli {
namespace {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name) : path_(fs::temp_directory_path() / ("emoalign_cli_" + name)) {
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

nlohmann::json tiny_doc() {
  return nlohmann::json::parse(R"({
    "schema_version": 1, "seed": 7, "mode": "blsp_emo",
    "world": {"asr_size": 24, "asr_heldout": 6, "ser_size": 10, "ser_heldout": 5},
    "stage1": {"epochs": 1, "batch_size": 8}, "stage2": {"epochs": 1, "batch_size": 5},
    "eval": {"response_limit": 3, "winrate_limit": 3}
  })");
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::map<std::string, std::string> artifacts_of(const fs::path& manifest) {
  std::ifstream in(manifest);
  return nlohmann::json::parse(in).at("artifacts").get<std::map<std::string, std::string>>();
}

TEST(RunConfig, RequiresSeedAndSchemaVersion) {
  TempDir dir("cfg");
  auto doc = tiny_doc();
  doc.erase("seed");
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
  doc = tiny_doc();
  doc.erase("schema_version");
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
  doc = tiny_doc();
  doc["schema_version"] = 2;
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
  doc = tiny_doc();
  doc["world"]["seed"] = 3;
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
  doc = tiny_doc();
  doc["mode"] = "stage1_only";
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
  doc = tiny_doc();
  doc["model"] = {{"lm", {{"vocab_size", 48}}}};
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
  doc = tiny_doc();
  doc["stage1"]["batch_size"] = "eight";
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
}

TEST(RunConfig, ResolvesPathsAndDerivesSeeds) {
  TempDir dir("paths");
  const auto cfg = parse_run_config(tiny_doc(), dir.path());
  EXPECT_EQ(cfg.paths.run_dir, dir.path() / "run");
  EXPECT_EQ(cfg.world.seed, 7u);
  EXPECT_NE(cfg.stage1.seed, cfg.stage2.seed);
  auto doc = tiny_doc();
  doc["paths"] = {{"run_dir", (dir.path() / "missing_file" / "run").string()}};
  write_text(dir.path() / "missing_file", "x");
  EXPECT_THROW(parse_run_config(doc, dir.path()), ConfigError);
}

TEST(RunConfig, RoundTripsAndHashesWithoutPaths) {
  TempDir dir("hash");
  const auto a = parse_run_config(tiny_doc(), dir.path());
  const auto back = parse_run_config(to_json(a), dir.path());
  EXPECT_EQ(to_json(back), to_json(a));
  EXPECT_EQ(config_hash(back), config_hash(a));
  auto moved = tiny_doc();
  moved["paths"] = {{"run_dir", "elsewhere"}};
  EXPECT_EQ(config_hash(parse_run_config(moved, dir.path())), config_hash(a));
  auto reseeded = tiny_doc();
  reseeded["seed"] = 8;
  EXPECT_NE(config_hash(parse_run_config(reseeded, dir.path())), config_hash(a));
  EXPECT_NE(world_hash(parse_run_config(reseeded, dir.path())), world_hash(a));
}

TEST(Env, WorkerCount) {
  ::unsetenv("EMO_ALIGN_NUM_WORKERS");
  EXPECT_EQ(workers_from_env(), 1);
  ::setenv("EMO_ALIGN_NUM_WORKERS", "3", 1);
  EXPECT_EQ(workers_from_env(), 3);
  for (const char* bad : {"0", "-2", "two", "4x"}) {
    ::setenv("EMO_ALIGN_NUM_WORKERS", bad, 1);
    EXPECT_THROW(workers_from_env(), ConfigError) << bad;
  }
  ::unsetenv("EMO_ALIGN_NUM_WORKERS");
}

TEST(RunLock, ExcludesSecondHolderAndTakesOverStaleLocks) {
  TempDir dir("lock");
  {
    RunLock first(dir.path());
    EXPECT_THROW(RunLock second(dir.path()), IoError);
  }
  EXPECT_FALSE(fs::exists(dir.path() / ".lock"));
  write_text(dir.path() / ".lock", "999999999");
  EXPECT_NO_THROW(RunLock again(dir.path()));
}

TEST(Manifest, WrittenAtomicallyWithChecksums) {
  TempDir dir("manifest");
  RunManifest m;
  m.command = "datagen";
  m.config_hash = "abc";
  m.artifacts["corpus_dir/x.jsonl"] = "123";
  const auto path = write_manifest(dir.path(), "datagen-abc", m);
  EXPECT_EQ(path, dir.path() / "manifests" / "datagen-abc.json");
  EXPECT_FALSE(fs::exists(path.string() + ".tmp"));
  EXPECT_EQ(artifacts_of(path).at("corpus_dir/x.jsonl"), "123");
}

TEST(Report, EmptyRunDirIsAnError) {
  TempDir dir("empty");
  EXPECT_THROW(cmd_report(dir.path()), ContractError);
  EXPECT_THROW(cmd_report(dir.path() / "absent"), ContractError);
}

/// Runs the tiny pipeline once for the tests below.
struct Pipeline {
  TempDir dir{"pipeline"};
  RunConfig cfg;
  DatagenResult data;
  TrainResult s1;
  TrainResult s2;

  Pipeline() {
    cfg = parse_run_config(tiny_doc(), dir.path());
    data = cmd_datagen(cfg, 1);
    s1 = cmd_train(cfg, {1, std::nullopt, std::nullopt}, 1);
    s2 = cmd_train(cfg, {2, std::string("blsp_emo"), s1.checkpoint}, 1);
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

TEST(Pipeline, DatagenIsIdempotent) {
  auto& p = pipeline();
  EXPECT_EQ(p.data.counts.at("asr_train"), 24u);
  EXPECT_EQ(p.data.counts.at("ser_train_emo"), 10u);
  const auto again = cmd_datagen(p.cfg, 2);
  EXPECT_EQ(again.manifest, p.data.manifest);
  const auto a = artifacts_of(again.manifest);
  EXPECT_EQ(a.size(), 14u);
  for (const auto& [file, sum] : a) EXPECT_EQ(file_sha256(p.cfg.paths.corpus_dir / fs::path(file).filename()), sum);
}

TEST(Pipeline, TrainingIsReproducibleAndRecordsProvenance) {
  auto& p = pipeline();
  const auto again = cmd_train(p.cfg, {1, std::nullopt, std::nullopt}, 1);
  EXPECT_EQ(again.checkpoint, p.s1.checkpoint);
  std::ifstream in(p.s2.manifest);
  const auto m = nlohmann::json::parse(in);
  EXPECT_EQ(m.at("inputs").at("init"), file_sha256(p.s1.checkpoint));
  EXPECT_EQ(m.at("details").at("mode"), "blsp_emo");
  const auto ck = model::load_checkpoint(p.s2.checkpoint);
  EXPECT_EQ(ck.metadata.at("stage"), "stage2");
  EXPECT_EQ(ck.metadata.at("init_checksum"), model::load_checkpoint(p.s1.checkpoint).params.checksum());
  EXPECT_NE(p.s1.checkpoint.filename().string().find("-step3.ckpt"), std::string::npos);
}

TEST(Pipeline, CheckpointsAreNeverOverwritten) {
  auto& p = pipeline();
  const auto backup = model::read_file_bytes(p.s1.checkpoint);
  auto bytes = backup;
  bytes.back() ^= 1;
  model::write_file_atomic(p.s1.checkpoint, bytes);
  EXPECT_THROW(cmd_train(p.cfg, {1, std::nullopt, std::nullopt}, 1), IoError);
  model::write_file_atomic(p.s1.checkpoint, backup);
}

TEST(Pipeline, TrainRejectsInconsistentRequests) {
  auto& p = pipeline();
  EXPECT_THROW(cmd_train(p.cfg, {1, std::string("blsp_ser"), std::nullopt}, 1), ConfigError);
  EXPECT_THROW(cmd_train(p.cfg, {2, std::string("blsp_ser"), std::nullopt}, 1), ConfigError);
  EXPECT_THROW(cmd_train(p.cfg, {2, std::string("emo_no_pretrain"), p.s1.checkpoint}, 1), ConfigError);
  EXPECT_THROW(cmd_train(p.cfg, {2, std::string("blsp_emo"), p.s2.checkpoint}, 1), ConfigError);
  EXPECT_THROW(cmd_train(p.cfg, {2, std::string("blsp_emo"), p.dir.path() / "none.ckpt"}, 1), ConfigError);
  EXPECT_THROW(cmd_train(p.cfg, {3, std::nullopt, std::nullopt}, 1), ConfigError);
}

TEST(Pipeline, EmoNoPretrainNeedsNoInit) {
  auto& p = pipeline();
  const auto r = cmd_train(p.cfg, {2, std::string("emo_no_pretrain"), std::nullopt}, 1);
  EXPECT_EQ(model::load_checkpoint(r.checkpoint).metadata.at("mode"), "emo_no_pretrain");
}

TEST(Pipeline, EvalReportsAreDeterministic) {
  auto& p = pipeline();
  const auto a = cmd_eval(p.cfg, {"ser", {p.s2.checkpoint}}, 1);
  const auto bytes = model::read_file_bytes(a.report);
  const auto b = cmd_eval(p.cfg, {"ser", {p.s2.checkpoint}}, 2);
  EXPECT_EQ(model::read_file_bytes(b.report), bytes);
  EXPECT_EQ(a.result.at("ser").at("total"), 5);

  const auto r1 = cmd_eval(p.cfg, {"response", {p.s2.checkpoint}}, 1);
  const auto r2 = cmd_eval(p.cfg, {"response", {p.s2.checkpoint}}, 1);
  EXPECT_EQ(r1.result, r2.result);

  const auto w = cmd_eval(p.cfg, {"winrate", {p.s2.checkpoint, p.s2.checkpoint}}, 1);
  EXPECT_EQ(w.result.at("ties"), w.result.at("total"));

  EXPECT_THROW(cmd_eval(p.cfg, {"winrate", {p.s2.checkpoint}}, 1), ConfigError);
  EXPECT_THROW(cmd_eval(p.cfg, {"bleu", {p.s2.checkpoint}}, 1), ConfigError);
  EXPECT_THROW(cmd_eval(p.cfg, {"ser", {p.dir.path() / "none.ckpt"}}, 1), ConfigError);
}

TEST(Pipeline, ReportMarksMissingSuites) {
  auto& p = pipeline();
  cmd_eval(p.cfg, {"agreement", {p.s1.checkpoint}}, 1);
  cmd_eval(p.cfg, {"agreement", {p.s2.checkpoint}}, 1);
  const auto r = cmd_report(p.cfg.paths.run_dir);
  EXPECT_TRUE(fs::exists(r.summary));
  EXPECT_NE(r.text.find("stage1-stage1_only"), std::string::npos);
  EXPECT_NE(r.text.find("epoch means"), std::string::npos);
  EXPECT_NE(r.text.find("not evaluated"), std::string::npos);
  EXPECT_NE(r.text.find("| blsp_emo |"), std::string::npos);
  EXPECT_NE(r.text.find("| stage1_only |"), std::string::npos);
}

TEST(Pipeline, StaleCorpusIsRejected) {
  auto& p = pipeline();
  auto doc = tiny_doc();
  doc["seed"] = 8;
  doc["paths"] = {{"corpus_dir", p.cfg.paths.corpus_dir.string()}, {"run_dir", (p.dir.path() / "run8").string()}};
  const auto other = parse_run_config(doc, p.dir.path());
  EXPECT_THROW(cmd_train(other, {1, std::nullopt, std::nullopt}, 1), ContractError);
}

#ifdef EMOALIGN_CLI_PATH
int run_cli(const std::string& args, const fs::path& err) {
  const int status = std::system((std::string(EMOALIGN_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string()).c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Binary, ExitCodesAndErrorLines) {
  TempDir dir("binary");
  const auto err = dir.path() / "stderr.txt";
  EXPECT_EQ(run_cli("--version", err), 0);
  EXPECT_EQ(run_cli("train", err), 1);
  EXPECT_EQ(run_cli("frobnicate", err), 1);

  auto doc = tiny_doc();
  doc.erase("seed");
  write_text(dir.path() / "noseed.json", doc.dump());
  EXPECT_EQ(run_cli("datagen " + (dir.path() / "noseed.json").string(), err), 1);
  std::ifstream in(err);
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  EXPECT_EQ(j.at("error"), "ConfigError");
  EXPECT_EQ(j.at("exit_code"), 1);

  EXPECT_EQ(run_cli("report " + dir.path().string(), err), 2);
  write_text(dir.path() / "run.json", tiny_doc().dump());
  EXPECT_EQ(run_cli("train " + (dir.path() / "run.json").string() + " --stage 1", err), 2);
}
#endif

}  // namespace
}  // namespace emoalign::cli
