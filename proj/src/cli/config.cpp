#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>

#include "emoalign/cli/run.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/model/checkpoint.hpp"
#include "emoalign/numerics/digest.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::cli {

namespace {

/// The document's section patched over `fallback`.
template <typename T>
T section(const nlohmann::json& doc, const char* key, const T& fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    nlohmann::json merged = fallback;
    merged.merge_patch(doc.at(key));
    return merged.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config section '") + key + "': " + e.what());
  }
}

/// A path must either exist as a directory or have an existing ancestor
/// directory under which it can be created.
void check_resolvable(const fs::path& p, const char* what) {
  if (p.empty()) throw ConfigError(std::string("paths.") + what + " is empty");
  fs::path cur = p;
  while (!cur.empty() && !fs::exists(cur)) {
    if (cur == cur.parent_path()) break;
    cur = cur.parent_path();
  }
  if (cur.empty() || !fs::is_directory(cur)) {
    throw ConfigError(std::string("paths.") + what + " '" + p.string() + "' is not under a directory");
  }
}

nlohmann::json hashed_document(const RunConfig& cfg) {
  auto doc = to_json(cfg);
  doc.erase("paths");
  return doc;
}

}  // namespace

void RunConfig::validate() const {
  if (schema_version != kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(schema_version) + ", expected " +
                      std::to_string(kSchemaVersion));
  }
  world.validate();
  model.validate();
  stage1.validate();
  stage2.validate();
  judge.validate();
  if (model.lm.vocab_size != world.vocab_size) throw ConfigError("model.lm.vocab_size must equal world.vocab_size");
  if (model.encoder.audio_dim != world.audio_dim) throw ConfigError("model.encoder.audio_dim must equal world.audio_dim");
  const auto m = alignment::mode_from_name(mode);
  if (m == alignment::TrainMode::kStage1Only) throw ConfigError("config mode must be a stage-2 mode");
  if (eval.max_new < 1 || eval.ser_max_new < 1 || eval.response_limit < 0 || eval.winrate_limit < 0) {
    throw ConfigError("eval: max_new >= 1 and non-negative limits required");
  }
  check_resolvable(paths.corpus_dir, "corpus_dir");
  check_resolvable(paths.checkpoint_dir, "checkpoint_dir");
  check_resolvable(paths.run_dir, "run_dir");
}

std::uint64_t RunConfig::init_seed() const { return numerics::derive_seed(seed, 100); }

RunConfig parse_run_config(const nlohmann::json& doc, const fs::path& base) {
  if (!doc.is_object()) throw ConfigError("config must be a JSON object");
  if (!doc.contains("schema_version")) throw ConfigError("config is missing schema_version");
  if (!doc.contains("seed")) throw ConfigError("config is missing the mandatory seed");
  if (doc.contains("world") && doc["world"].contains("seed")) throw ConfigError("world.seed is set by the run seed");
  for (const char* s : {"stage1", "stage2"}) {
    if (doc.contains(s) && doc[s].contains("seed")) throw ConfigError(std::string(s) + ".seed is derived from the run seed");
  }
  RunConfig cfg;
  const RunConfig defaults;
  try {
    cfg.schema_version = doc.at("schema_version").get<int>();
    cfg.seed = doc.at("seed").get<std::uint64_t>();
    if (doc.contains("mode")) cfg.mode = doc.at("mode").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.world = section(doc, "world", defaults.world);
  cfg.model = section(doc, "model", defaults.model);
  cfg.stage1 = section(doc, "stage1", defaults.stage1);
  cfg.stage2 = section(doc, "stage2", defaults.stage2);
  cfg.eval = section(doc, "eval", defaults.eval);
  cfg.judge = section(doc, "judge", defaults.judge);
  cfg.world.seed = cfg.seed;
  cfg.stage1.seed = numerics::derive_seed(cfg.seed, 1);
  cfg.stage2.seed = numerics::derive_seed(cfg.seed, 2);
  if (doc.contains("paths")) {
    const auto& p = doc["paths"];
    for (auto [key, field] : {std::pair{"corpus_dir", &cfg.paths.corpus_dir},
                              std::pair{"checkpoint_dir", &cfg.paths.checkpoint_dir},
                              std::pair{"run_dir", &cfg.paths.run_dir}}) {
      if (p.contains(key)) *field = p.at(key).get<std::string>();
    }
  }
  for (fs::path* p : {&cfg.paths.corpus_dir, &cfg.paths.checkpoint_dir, &cfg.paths.run_dir}) {
    if (p->is_relative()) *p = (base / *p).lexically_normal();
  }
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_run_config(doc, fs::absolute(path).parent_path());
}

nlohmann::json to_json(const RunConfig& cfg) {
  auto strip_seed = [](nlohmann::json j) {
    j.erase("seed");
    return j;
  };
  return {{"schema_version", cfg.schema_version},
          {"seed", cfg.seed},
          {"mode", cfg.mode},
          {"world", strip_seed(cfg.world)},
          {"model", cfg.model},
          {"stage1", strip_seed(cfg.stage1)},
          {"stage2", strip_seed(cfg.stage2)},
          {"eval", cfg.eval},
          {"paths",
           {{"corpus_dir", cfg.paths.corpus_dir.string()},
            {"checkpoint_dir", cfg.paths.checkpoint_dir.string()},
            {"run_dir", cfg.paths.run_dir.string()}}},
          {"judge", cfg.judge}};
}

std::string config_hash(const RunConfig& cfg) { return numerics::sha256_hex(hashed_document(cfg).dump()); }

std::string world_hash(const RunConfig& cfg) {
  return numerics::sha256_hex(nlohmann::json(cfg.world).dump());
}

int workers_from_env() {
  const char* raw = std::getenv("EMO_ALIGN_NUM_WORKERS");
  if (raw == nullptr || *raw == '\0') return 1;
  const std::string_view s(raw);
  int value = 0;
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || end != s.data() + s.size() || value < 1) {
    throw ConfigError("EMO_ALIGN_NUM_WORKERS must be a positive integer, got '" + std::string(s) + "'");
  }
  return value;
}

std::string file_sha256(const fs::path& path) {
  const auto bytes = model::read_file_bytes(path);
  return numerics::sha256_hex(std::span<const unsigned char>(bytes.data(), bytes.size()));
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

nlohmann::json to_json(const RunManifest& m) {
  return {{"schema_version", kSchemaVersion}, {"command", m.command},         {"config_hash", m.config_hash},
          {"tool_version", m.tool_version},   {"started_at", m.started_at},   {"finished_at", m.finished_at},
          {"inputs", m.inputs},               {"artifacts", m.artifacts},     {"details", m.details}};
}

fs::path write_manifest(const fs::path& run_dir, const std::string& name, const RunManifest& m) {
  const auto dir = run_dir / "manifests";
  fs::create_directories(dir);
  const auto path = dir / (name + ".json");
  const auto text = to_json(m).dump(2) + "\n";
  model::write_file_atomic(path, {text.begin(), text.end()});
  return path;
}

RunLock::RunLock(const fs::path& run_dir) : path_(run_dir / ".lock") {
  fs::create_directories(run_dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const auto pid = std::to_string(::getpid());
      const bool ok = ::write(fd, pid.data(), pid.size()) == static_cast<ssize_t>(pid.size());
      ::close(fd);
      if (!ok) throw IoError("cannot write lock file " + path_.string());
      return;
    }
    if (errno != EEXIST) throw IoError("cannot create lock file " + path_.string() + ": " + std::strerror(errno));
    std::ifstream in(path_);
    long holder = 0;
    in >> holder;
    if (holder > 0 && (::kill(static_cast<pid_t>(holder), 0) == 0 || errno == EPERM)) {
      throw IoError("run directory " + run_dir.string() + " is locked by process " + std::to_string(holder));
    }
    fs::remove(path_);
  }
  throw IoError("cannot acquire lock " + path_.string());
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

}  // namespace emoalign::cli
