#include "emoalign/datagen/corpus.hpp"

#include <cstring>
#include <fstream>

#include "emoalign/datagen/prompts.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/model/checkpoint.hpp"
#include "emoalign/model/generate.hpp"
#include "emoalign/numerics/parallel.hpp"
#include "emoalign/numerics/rng.hpp"
#include "json.hpp"

namespace emoalign::datagen {

namespace {

using model::Vocab;
using nlohmann::json;

constexpr int kMaxAttempts = 5;
constexpr char kFramesMagic[8] = {'E', 'M', 'O', 'F', 'R', 'A', 'M', 'E'};
constexpr std::uint32_t kFramesVersion = 1;

std::uint64_t sample_seed(const WorldConfig& cfg, CorpusKind kind, std::uint64_t stream, std::size_t i) {
  const std::uint64_t base = numerics::derive_seed(cfg.seed, 0xc0de0000ULL + stream * 2 + (kind == CorpusKind::kSer));
  return numerics::derive_seed(base, i);
}

Sample continue_with(const Sample& sample, const TeacherLM& teacher, const model::AssembledInput& prompt, int max_new) {
  Sample out = sample;
  out.continuation = teacher_continue(teacher, prompt, max_new);
  const std::uint64_t seed = numerics::derive_seed(sample.speech.meta.seed, 0xfa11bac);
  for (int attempt = 1; out.continuation.front() == Vocab::kEos; ++attempt) {
    if (attempt >= kMaxAttempts) {
      throw ContractError("teacher produced an empty continuation for " + sample.id + " after " +
                          std::to_string(kMaxAttempts) + " attempts");
    }
    model::GenerateOptions opt{model::GenerateOptions::Mode::kSampled,
                               numerics::derive_seed(seed, static_cast<std::uint64_t>(attempt)), 1.0, {}};
    out.continuation = model::generate(teacher.params, teacher.lm, {}, prompt.embeddings, prompt.mask,
                                       static_cast<std::size_t>(max_new - 1), opt);
    if (out.continuation.empty() || out.continuation.back() != Vocab::kEos) out.continuation.push_back(Vocab::kEos);
  }
  return out;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in, const std::string& what) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError(what + ": truncated");
  return v;
}

}  // namespace

std::string corpus_kind_name(CorpusKind kind) { return kind == CorpusKind::kAsr ? "asr" : "ser"; }

bool filter_short(const std::vector<int>& tokens) { return tokens.size() >= kMinTranscriptTokens; }

std::vector<Sample> gen_corpus(CorpusKind kind, const WorldConfig& cfg, const TeacherLM& teacher,
                               const SpeechWorld& world, std::size_t count, std::uint64_t stream, int workers) {
  cfg.validate();
  const Vocab& voc = teacher.vocab;
  std::vector<bool> allowed(static_cast<std::size_t>(voc.size()), false);
  for (int id = 0; id < voc.size(); ++id) allowed[static_cast<std::size_t>(id)] = voc.is_grid(id);
  numerics::NoGradGuard no_grad;
  const Tensor bos = model::embed_tokens(teacher.params, {Vocab::kBos});

  std::vector<Sample> out(count);
  numerics::parallel_for(count, workers, [&](std::size_t i) {
    numerics::NoGradGuard guard;
    const std::uint64_t seed = sample_seed(cfg, kind, stream, i);
    numerics::Rng rng(seed);
    const auto span = static_cast<std::uint64_t>(cfg.max_len - cfg.min_len + 1);
    const auto len = static_cast<std::size_t>(cfg.min_len) + rng.below(span);
    model::GenerateOptions opt{model::GenerateOptions::Mode::kSampled, rng.below(UINT64_MAX),
                               cfg.transcript_temperature, allowed};
    Sample s;
    s.id = corpus_kind_name(kind) + "-" + std::to_string(stream) + "-" + std::to_string(i);
    s.kind = kind;
    s.tokens = model::generate(teacher.params, teacher.lm, {}, bos, {model::Modality::kText}, len, opt);
    if (!filter_short(s.tokens)) throw ContractError("gen_corpus: transcript shorter than the minimum");
    Emotion rendered;
    if (kind == CorpusKind::kSer) {
      s.emotion = model::emotion_at(i % model::kNumEmotions);
      rendered = *s.emotion;
    } else {
      rendered = model::emotion_at(rng.below(model::kNumEmotions));
    }
    s.speech = world.render(s.tokens, rendered, numerics::derive_seed(seed, 0xa0d10));
    out[i] = std::move(s);
  });
  return out;
}

Sample construct_continuation(const Sample& sample, const TeacherLM& teacher, int max_new) {
  if (!filter_short(sample.tokens)) throw ContractError("construct_continuation: transcript too short");
  numerics::NoGradGuard no_grad;
  auto prompt = build_text_input(teacher.params, TemplateId::kContinuation, sample.tokens, std::nullopt);
  return continue_with(sample, teacher, prompt, max_new);
}

Sample construct_emotion_continuation(const Sample& sample, const TeacherLM& teacher, int max_new) {
  if (!sample.emotion) throw ContractError("construct_emotion_continuation: sample " + sample.id + " has no label");
  if (!filter_short(sample.tokens)) throw ContractError("construct_emotion_continuation: transcript too short");
  numerics::NoGradGuard no_grad;
  auto prompt = build_text_input(teacher.params, TemplateId::kEmotionContinuationData, sample.tokens, sample.emotion);
  return continue_with(sample, teacher, prompt, max_new);
}

std::vector<Sample> construct_all(const std::vector<Sample>& samples, const TeacherLM& teacher, bool emotion_aware,
                                  int max_new, int workers) {
  std::vector<Sample> out(samples.size());
  numerics::parallel_for(samples.size(), workers, [&](std::size_t i) {
    out[i] = emotion_aware ? construct_emotion_continuation(samples[i], teacher, max_new)
                           : construct_continuation(samples[i], teacher, max_new);
  });
  return out;
}

void write_corpus(const std::filesystem::path& dir, const std::string& name, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir);
  const std::string frames_name = name + ".frames";
  std::string lines;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    json rec = {{"id", s.id},
                {"kind", corpus_kind_name(s.kind)},
                {"tokens", s.tokens},
                {"speech_ref", {{"file", frames_name}, {"index", i}}}};
    if (s.emotion) rec["emotion"] = model::emotion_name(*s.emotion);
    if (!s.continuation.empty()) rec["continuation"] = s.continuation;
    lines += rec.dump() + "\n";
  }
  model::write_file_atomic(dir / (name + ".jsonl"), {lines.begin(), lines.end()});

  const auto tmp = dir / (frames_name + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    const std::uint32_t dim = samples.empty() ? 0 : static_cast<std::uint32_t>(samples.front().speech.frames.dim(1));
    out.write(kFramesMagic, sizeof(kFramesMagic));
    put(out, kFramesVersion);
    put(out, static_cast<std::uint32_t>(samples.size()));
    put(out, dim);
    std::uint64_t offset = 0;
    for (const auto& s : samples) {
      if (s.speech.frames.dim(1) != dim) throw DimensionError("write_corpus: mixed frame widths");
      put(out, offset);
      put(out, static_cast<std::uint32_t>(s.speech.length()));
      offset += s.speech.frames.numel();
    }
    for (const auto& s : samples) {
      for (Real v : s.speech.frames.data()) put(out, static_cast<float>(v));
    }
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / frames_name);
}

std::vector<Sample> read_corpus(const std::filesystem::path& dir, const std::string& name) {
  const auto frames_path = dir / (name + ".frames");
  std::ifstream fin(frames_path, std::ios::binary);
  if (!fin) throw IoError("cannot open " + frames_path.string());
  char magic[8];
  fin.read(magic, sizeof(magic));
  if (!fin || std::memcmp(magic, kFramesMagic, sizeof(magic)) != 0) throw IoError(frames_path.string() + ": bad magic");
  const std::string what = frames_path.string();
  if (get<std::uint32_t>(fin, what) != kFramesVersion) throw IoError(what + ": unsupported version");
  const auto count = get<std::uint32_t>(fin, what);
  const auto dim = get<std::uint32_t>(fin, what);
  std::vector<std::pair<std::uint64_t, std::uint32_t>> index(count);
  for (auto& [off, n] : index) {
    off = get<std::uint64_t>(fin, what);
    n = get<std::uint32_t>(fin, what);
  }
  std::vector<std::vector<Real>> frames(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    frames[i].resize(static_cast<std::size_t>(index[i].second) * dim);
    for (auto& v : frames[i]) v = get<float>(fin, what);
  }

  const auto jsonl = dir / (name + ".jsonl");
  std::ifstream in(jsonl);
  if (!in) throw IoError("cannot open " + jsonl.string());
  std::vector<Sample> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(jsonl.string() + ":" + std::to_string(lineno) + ": " + e.what(), line);
    }
    Sample s;
    s.id = rec.at("id").get<std::string>();
    const auto kind = rec.at("kind").get<std::string>();
    if (kind != "asr" && kind != "ser") throw ParseError("unknown corpus kind '" + kind + "'", line);
    s.kind = kind == "asr" ? CorpusKind::kAsr : CorpusKind::kSer;
    s.tokens = rec.at("tokens").get<std::vector<int>>();
    if (rec.contains("emotion")) {
      s.emotion = model::emotion_from_name(rec["emotion"].get<std::string>());
      if (!s.emotion) throw ParseError("unknown emotion label", line);
    }
    if (rec.contains("continuation")) s.continuation = rec["continuation"].get<std::vector<int>>();
    const auto idx = rec.at("speech_ref").at("index").get<std::size_t>();
    if (idx >= count) throw IoError(jsonl.string() + ": speech_ref index out of range");
    s.speech.frames = Tensor::from({index[idx].second, dim}, frames[idx]);
    s.speech.meta.tokens = s.tokens;
    s.speech.meta.emotion = s.emotion;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace emoalign::datagen
