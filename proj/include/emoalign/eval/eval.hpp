#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "emoalign/datagen/corpus.hpp"
#include "emoalign/datagen/teacher.hpp"
#include "emoalign/model/config.hpp"
#include "emoalign/model/emotion.hpp"
#include "emoalign/model/vocab.hpp"
#include "emoalign/numerics/param_store.hpp"
#include "json.hpp"

namespace emoalign::eval {

using datagen::Sample;
using model::Emotion;
using model::kNumEmotions;
using model::ModelConfig;
using numerics::ParameterStore;
using numerics::Tensor;

/// Generative emotion recognition results. Unparseable answers count as
/// wrong and are excluded from every confusion row.
struct SerReport {
  std::size_t total = 0;
  std::size_t correct = 0;
  std::size_t unparseable = 0;
  double accuracy = 0.0;
  std::array<double, kNumEmotions> per_class{};
  /// confusion[truth][predicted].
  std::array<std::array<std::size_t, kNumEmotions>, kNumEmotions> confusion{};
  /// Samples per true class, including unparseable ones.
  std::array<std::size_t, kNumEmotions> class_totals{};
};

nlohmann::json to_json(const SerReport& r);

/// Earliest label name in the text wins; names at the same offset fall back to
/// canonical order. Matching is case-insensitive on whole words.
std::optional<Emotion> parse_emotion_label(std::string_view text);
std::optional<Emotion> parse_emotion_label(const std::vector<int>& ids, const model::Vocab& vocab);

SerReport score_ser(const std::vector<Emotion>& truth, const std::vector<std::optional<Emotion>>& predicted);

/// Greedy answers to the SER prompt on the speech path.
std::vector<std::vector<int>> ser_answers(const ParameterStore& params, const ModelConfig& cfg,
                                          const std::vector<Sample>& testset, int max_new = 8, int workers = 1);

/// Throws ContractError on an empty testset or unlabeled samples.
SerReport eval_ser(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Sample>& testset,
                   int max_new = 8, int workers = 1);

/// Accuracy of the classification head's argmax.
double ser_head_accuracy(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Sample>& testset,
                         int workers = 1);

struct AgreementReport {
  std::size_t total = 0;
  std::size_t matches = 0;
  double match_rate = 0.0;
  /// Mean over samples of the per-token KL on the teacher's continuation.
  double mean_kl = 0.0;
};

nlohmann::json to_json(const AgreementReport& r);

/// Greedy speech-path decode vs greedy teacher text-path decode of the plain
/// continuation prompt.
AgreementReport eval_agreement(const ParameterStore& params, const ModelConfig& cfg, const datagen::TeacherLM& teacher,
                               const std::vector<Sample>& testset, int max_new = 32, int workers = 1);

/// Mean over samples of the per-token cross-entropy of each sample's
/// continuation on the plain speech continuation prompt.
double continuation_cross_entropy(const ParameterStore& params, const ModelConfig& cfg,
                                  const std::vector<Sample>& testset, int workers = 1);

/// Greedy speech-path response to the emotion-aware continuation prompt.
std::vector<int> speech_response(const ParameterStore& params, const ModelConfig& cfg, const Sample& sample,
                                 int max_new = 32);

}  // namespace emoalign::eval
