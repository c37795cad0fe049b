#pragma once

#include <vector>

#include "emoalign/eval/eval.hpp"
#include "emoalign/eval/judge.hpp"

namespace emoalign::eval {

struct ResponseItem {
  std::string id;
  std::string instruction;
  std::string emotion;
  std::string response;
  JudgeVerdict quality;
  JudgeVerdict empathy;
};

struct ResponseReport {
  std::vector<ResponseItem> items;
  /// Means over parsed verdicts; nullopt when none parsed.
  std::optional<double> mean_quality;
  std::optional<double> mean_empathy;
  std::size_t parse_failures = 0;
};

nlohmann::json to_json(const ResponseReport& r);

/// Speech-path responses to the emotion-aware prompt for labeled samples,
/// each judged for quality and empathy. Judge calls run on at most
/// min(workers, backend concurrency) threads.
ResponseReport eval_responses(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Sample>& testset,
                              JudgeBackend& backend, int concurrency, int max_new = 32, int workers = 1);

struct WinrateReport {
  std::size_t total = 0;
  std::size_t wins = 0;
  std::size_t losses = 0;
  std::size_t ties = 0;
  std::size_t inconsistent = 0;
  std::size_t parse_failures = 0;
  std::vector<JudgeVerdict> verdicts;

  double win_rate() const { return total ? static_cast<double>(wins) / static_cast<double>(total) : 0.0; }
  double tie_rate() const { return total ? static_cast<double>(ties) / static_cast<double>(total) : 0.0; }
};

nlohmann::json to_json(const WinrateReport& r);

/// Builds one dialogue per sample: the two following samples (cyclically)
/// form the earlier turns, answered with their stored continuations, and the
/// sample itself is the last user turn.
std::vector<Dialogue> build_dialogues(const std::vector<Sample>& testset, const model::Vocab& vocab);

/// Pairwise comparison of two checkpoints' responses, A = params_a.
WinrateReport eval_winrate(const ParameterStore& params_a, const ParameterStore& params_b, const ModelConfig& cfg,
                           const std::vector<Sample>& testset, JudgeBackend& backend, int concurrency,
                           int max_new = 32, int workers = 1);

}  // namespace emoalign::eval
