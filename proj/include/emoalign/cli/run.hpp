#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emoalign/alignment/alignment.hpp"
#include "emoalign/datagen/world.hpp"
#include "emoalign/eval/judge.hpp"
#include "emoalign/model/config.hpp"
#include "json.hpp"

namespace emoalign::cli {

namespace fs = std::filesystem;

inline constexpr int kSchemaVersion = 1;
inline constexpr const char* kToolVersion = "0.1.0";

struct RunPaths {
  fs::path corpus_dir = "corpus";
  fs::path checkpoint_dir = "checkpoints";
  fs::path run_dir = "run";
};

struct EvalConfig {
  int max_new = 32;
  int ser_max_new = 8;
  /// Samples used by the judge-backed suites; 0 uses the whole test set.
  int response_limit = 100;
  int winrate_limit = 100;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalConfig, max_new, ser_max_new, response_limit, winrate_limit)

/// One JSON document per run. `seed` is the only seed: it replaces the world
/// seed and derives the model initialization and both training shuffles, so
/// `world.seed` and `stageN.seed` are rejected in the document.
struct RunConfig {
  int schema_version = kSchemaVersion;
  std::uint64_t seed = 0;
  std::string mode = "blsp_emo";
  datagen::WorldConfig world;
  model::ModelConfig model;
  alignment::StageConfig stage1;
  /// Five epochs at desk scale.
  alignment::StageConfig stage2 = [] {
    alignment::StageConfig sc;
    sc.epochs = 5;
    return sc;
  }();
  EvalConfig eval;
  RunPaths paths;
  eval::JudgeBackendConfig judge;

  /// Throws ConfigError.
  void validate() const;
  std::uint64_t init_seed() const;
};

/// Parses and validates a document. Relative paths resolve against `base`.
RunConfig parse_run_config(const nlohmann::json& doc, const fs::path& base);
/// Throws ConfigError on unreadable or malformed files.
RunConfig load_run_config(const fs::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// SHA-256 of the canonical document without paths.
std::string config_hash(const RunConfig& cfg);
/// Hash of the world section alone; tags corpora.
std::string world_hash(const RunConfig& cfg);

/// Worker count from EMO_ALIGN_NUM_WORKERS, default 1. Throws ConfigError on
/// values that are not positive integers.
int workers_from_env();

std::string file_sha256(const fs::path& path);
std::string utc_now();

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::string tool_version = kToolVersion;
  std::string started_at;
  std::string finished_at;
  /// Checksums of consumed artifacts, keyed by role.
  std::map<std::string, std::string> inputs;
  /// Checksums of produced files, keyed by path relative to their root.
  std::map<std::string, std::string> artifacts;
  nlohmann::json details = nlohmann::json::object();
};

nlohmann::json to_json(const RunManifest& m);
/// Writes `<run_dir>/manifests/<name>.json` atomically.
fs::path write_manifest(const fs::path& run_dir, const std::string& name, const RunManifest& m);

/// Exclusive ownership of a run directory through `<run_dir>/.lock`. A lock
/// left by a process that no longer exists is taken over. Throws IoError when
/// another live process holds it.
class RunLock {
 public:
  explicit RunLock(const fs::path& run_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  fs::path path_;
};

struct DatagenResult {
  fs::path manifest;
  std::map<std::string, std::size_t> counts;
};

struct TrainRequest {
  int stage = 1;
  std::optional<std::string> mode;
  std::optional<fs::path> init;
};

struct TrainResult {
  fs::path checkpoint;
  fs::path loss_log;
  fs::path manifest;
  std::size_t steps = 0;
};

struct EvalRequest {
  std::string suite;
  std::vector<fs::path> checkpoints;
};

struct EvalResult {
  fs::path report;
  fs::path manifest;
  nlohmann::json result;
};

struct ReportResult {
  fs::path summary;
  std::string text;
};

/// Corpora in the corpus dir: asr_train and asr_test with plain
/// continuations, ser_train and ser_test, and the constructed ser_train_emo,
/// ser_train_plain and ser_test_plain.
DatagenResult cmd_datagen(const RunConfig& cfg, int workers);

/// Stage 1 uses mode stage1_only. Stage-2 modes need a stage-1 `init`,
/// except emo_no_pretrain, which must not have one. Checkpoint names are
/// `<stage>-<mode>-<hash>-step<N>.ckpt` and an existing file is never
/// replaced by different bytes.
TrainResult cmd_train(const RunConfig& cfg, const TrainRequest& req, int workers);

/// Suites ser, agreement and response take one checkpoint, winrate two.
EvalResult cmd_eval(const RunConfig& cfg, const EvalRequest& req, int workers);

/// Summarizes loss logs and reports of a run directory into summary.md.
ReportResult cmd_report(const fs::path& run_dir);

}  // namespace emoalign::cli
