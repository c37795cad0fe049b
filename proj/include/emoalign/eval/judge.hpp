#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "emoalign/model/emotion.hpp"
#include "json.hpp"

namespace emoalign::eval {

enum class JudgeKind { kQuality, kEmpathy, kWinrate };
enum class Choice { kA, kB, kTie };

std::string judge_kind_name(JudgeKind kind);
std::string choice_name(Choice c);

struct JudgeVerdict {
  JudgeKind kind = JudgeKind::kQuality;
  /// 0..10 for quality and empathy.
  std::optional<int> score;
  /// Winrate only; from the A side's point of view.
  std::optional<Choice> choice;
  /// One reply for scores, the AB and BA replies for winrate.
  std::vector<std::string> raw;
  /// Winrate only: both orders agreed.
  bool consistent = true;
  bool parse_failed = false;
};

nlohmann::json to_json(const JudgeVerdict& v);

/// Anything that turns a rendered judge prompt into a reply.
class JudgeBackend {
 public:
  virtual ~JudgeBackend() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

struct JudgeBackendConfig {
  std::string kind = "offline_heuristic";  // or "remote_chat"
  std::string endpoint;
  std::string model;
  std::string api_key_env = "EMO_ALIGN_JUDGE_API_KEY";
  double timeout_s = 30.0;
  int retries = 3;
  /// First retry delay; doubles on each further attempt.
  double backoff_s = 1.0;
  int concurrency = 4;

  void validate() const;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(JudgeBackendConfig, kind, endpoint, model, api_key_env, timeout_s, retries,
                                                backoff_s, concurrency)

/// Deterministic rubric standing in for a chat model. Recognizes the three
/// judge prompts and replies with a tagged score or choice.
///
/// quality: 0 for an empty response, else 2 + length band (3..20 words: 4,
/// otherwise 2) + round(4 * share of response words found in the
/// instruction).
///
/// empathy: 0 for an empty response, else 2 + 4 when the response names the
/// emotion or one of its cue words + 1 per distinct support phrase (max 4).
///
/// winrate: the response with the higher quality + empathy total against the
/// last user turn; A on equal totals.
///
/// Throws ContractError for any other prompt.
std::string offline_heuristic_judge(const std::string& prompt);

class OfflineJudge : public JudgeBackend {
 public:
  std::string complete(const std::string& prompt) override { return offline_heuristic_judge(prompt); }
};

std::unique_ptr<JudgeBackend> make_backend(const JudgeBackendConfig& cfg);

/// Integer between <score> and </score>; throws ParseError when missing,
/// malformed, or outside 0..10.
int parse_score(const std::string& reply);
/// A or B between <choice> and </choice>, allowing "Response A" style
/// wording; throws ParseError otherwise.
Choice parse_choice(const std::string& reply);

int rubric_quality(const std::string& instruction, const std::string& response);
int rubric_empathy(const std::string& emotion, const std::string& response);

/// Renders the quality or empathy prompt and parses the reply. Parse failures
/// yield a verdict without a score and parse_failed set.
JudgeVerdict judge_score(JudgeKind kind, const std::string& instruction, const std::string& emotion,
                         const std::string& response, JudgeBackend& backend);

/// Two user/assistant exchanges followed by the final user turn.
struct Dialogue {
  std::array<std::string, 3> user;
  std::array<std::string, 2> assistant;
};

/// Runs the AB and BA orders. A wins only when preferred in both, loses only
/// when B is preferred in both; anything else is a tie. A parse failure in
/// either call is a tie with parse_failed set.
JudgeVerdict judge_winrate(const Dialogue& history, const std::string& emotion, const std::string& response_a,
                           const std::string& response_b, JudgeBackend& backend);

std::string render_judge_prompt(JudgeKind kind, const std::string& instruction, const std::string& emotion,
                                const std::string& response);
std::string render_winrate_prompt(const Dialogue& history, const std::string& emotion, const std::string& response_a,
                                  const std::string& response_b);

}  // namespace emoalign::eval
