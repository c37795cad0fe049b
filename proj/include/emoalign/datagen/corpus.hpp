#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "emoalign/datagen/teacher.hpp"
#include "emoalign/datagen/world.hpp"

namespace emoalign::datagen {

enum class CorpusKind { kAsr, kSer };

std::string corpus_kind_name(CorpusKind kind);

/// An ASR pair (s, x), an SER triple (s, x, e), or either extended with a
/// teacher continuation y.
struct Sample {
  std::string id;
  CorpusKind kind = CorpusKind::kAsr;
  std::vector<int> tokens;
  /// Label of SER samples.
  std::optional<Emotion> emotion;
  /// Ends with end-of-sequence when present.
  std::vector<int> continuation;
  model::SpeechFeatureSequence speech;
};

/// Minimum transcript length in tokens.
inline constexpr std::size_t kMinTranscriptTokens = 5;

bool filter_short(const std::vector<int>& tokens);

/// Transcripts are sampled from the teacher after BOS at the world's
/// transcript temperature, restricted to grid tokens. SER labels cycle through
/// the canonical order, so a corpus whose size is a multiple of 5 is exactly
/// balanced; ASR speech uses a random rendering emotion. Sample i depends only
/// on (world seed, stream, kind, i).
std::vector<Sample> gen_corpus(CorpusKind kind, const WorldConfig& cfg, const TeacherLM& teacher,
                               const SpeechWorld& world, std::size_t count, std::uint64_t stream, int workers = 1);

/// Greedy teacher continuation of the plain continuation prompt. When the
/// teacher ends immediately, retries with seeded sampling; throws
/// ContractError after 5 attempts.
Sample construct_continuation(const Sample& sample, const TeacherLM& teacher, int max_new = 32);

/// As construct_continuation, with the emotion-conditioned prompt. Requires an
/// SER sample.
Sample construct_emotion_continuation(const Sample& sample, const TeacherLM& teacher, int max_new = 32);

/// Applies a constructor to every sample in parallel, keeping order.
std::vector<Sample> construct_all(const std::vector<Sample>& samples, const TeacherLM& teacher, bool emotion_aware,
                                  int max_new, int workers = 1);

/// Writes `<name>.jsonl` and the `<name>.frames` sidecar into dir.
void write_corpus(const std::filesystem::path& dir, const std::string& name, const std::vector<Sample>& samples);
std::vector<Sample> read_corpus(const std::filesystem::path& dir, const std::string& name);

}  // namespace emoalign::datagen
