#include "emoalign/eval/judge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "emoalign/datagen/templates.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/eval/remote.hpp"

namespace emoalign::eval {

using datagen::TemplateId;

namespace {

const std::vector<std::string> kSupportPhrases = {"sorry", "comfort", "support", "understand", "listen",
                                                  "care",  "hug",     "gently",  "breathe",    "here for you",
                                                  "help"};

std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) != 0) {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

/// Whole-word phrase search over the normalized word sequence.
bool contains_phrase(const std::vector<std::string>& haystack, const std::string& phrase) {
  const auto needle = words(phrase);
  if (needle.empty() || needle.size() > haystack.size()) return false;
  return std::search(haystack.begin(), haystack.end(), needle.begin(), needle.end()) != haystack.end();
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// Text between the last open/close tag pair.
std::optional<std::string> tagged(const std::string& reply, const std::string& tag) {
  const std::string open = "<" + tag + ">", close = "</" + tag + ">";
  const auto end = reply.rfind(close);
  if (end == std::string::npos) return std::nullopt;
  const auto begin = reply.rfind(open, end);
  if (begin == std::string::npos) return std::nullopt;
  return trim(reply.substr(begin + open.size(), end - begin - open.size()));
}

std::string score_reply(const std::string& kind, int score) {
  return "Rubric " + kind + " assessment of the response. <score>" + std::to_string(score) + "</score>";
}

}  // namespace

std::string judge_kind_name(JudgeKind kind) {
  switch (kind) {
    case JudgeKind::kQuality:
      return "quality";
    case JudgeKind::kEmpathy:
      return "empathy";
    case JudgeKind::kWinrate:
      return "winrate";
  }
  return "unknown";
}

std::string choice_name(Choice c) {
  switch (c) {
    case Choice::kA:
      return "A";
    case Choice::kB:
      return "B";
    case Choice::kTie:
      return "tie";
  }
  return "unknown";
}

nlohmann::json to_json(const JudgeVerdict& v) {
  nlohmann::json j = {{"kind", judge_kind_name(v.kind)}, {"raw", v.raw}, {"parse_failed", v.parse_failed}};
  j["score"] = v.score ? nlohmann::json(*v.score) : nlohmann::json(nullptr);
  if (v.kind == JudgeKind::kWinrate) {
    j["choice"] = v.choice ? nlohmann::json(choice_name(*v.choice)) : nlohmann::json(nullptr);
    j["consistent"] = v.consistent;
  }
  return j;
}

void JudgeBackendConfig::validate() const {
  if (kind != "offline_heuristic" && kind != "remote_chat") throw ConfigError("unknown judge backend '" + kind + "'");
  if (kind == "remote_chat" && (endpoint.empty() || model.empty() || api_key_env.empty())) {
    throw ConfigError("remote_chat judge needs endpoint, model and api_key_env");
  }
  if (!(timeout_s > 0.0) || retries < 0 || backoff_s < 0.0 || concurrency < 1) {
    throw ConfigError("judge backend: timeout_s > 0, retries >= 0, backoff_s >= 0 and concurrency >= 1 required");
  }
}

std::unique_ptr<JudgeBackend> make_backend(const JudgeBackendConfig& cfg) {
  cfg.validate();
  if (cfg.kind == "remote_chat") return std::make_unique<RemoteChatJudge>(cfg);
  return std::make_unique<OfflineJudge>();
}

int rubric_quality(const std::string& instruction, const std::string& response) {
  const auto resp = words(response);
  if (resp.empty()) return 0;
  const auto instr = words(instruction);
  const std::set<std::string> vocab(instr.begin(), instr.end());
  const auto shared = std::count_if(resp.begin(), resp.end(), [&](const std::string& w) { return vocab.count(w) > 0; });
  const int band = resp.size() >= 3 && resp.size() <= 20 ? 4 : 2;
  const double share = static_cast<double>(shared) / static_cast<double>(resp.size());
  return std::min(10, 2 + band + static_cast<int>(std::lround(4.0 * share)));
}

int rubric_empathy(const std::string& emotion, const std::string& response) {
  const auto resp = words(response);
  if (resp.empty()) return 0;
  int score = 2;
  std::vector<std::string> cues = {emotion};
  if (auto e = model::emotion_from_name(trim(emotion))) cues = model::emotion_cue_words(*e);
  if (std::any_of(cues.begin(), cues.end(), [&](const std::string& c) { return contains_phrase(resp, c); })) score += 4;
  int support = 0;
  for (const auto& p : kSupportPhrases) support += contains_phrase(resp, p) ? 1 : 0;
  return std::min(10, score + std::min(support, 4));
}

std::string offline_heuristic_judge(const std::string& prompt) {
  for (TemplateId id : {TemplateId::kJudgeQuality, TemplateId::kJudgeEmpathy}) {
    if (auto f = datagen::prompt_template(id).match(prompt)) {
      const auto& v = *f;
      if (id == TemplateId::kJudgeQuality) return score_reply("quality", rubric_quality(v.at("{instruction}"), v.at("{response}")));
      return score_reply("empathy", rubric_empathy(v.at("{emotion}"), v.at("{response}")));
    }
  }
  if (auto f = datagen::prompt_template(TemplateId::kJudgeWinrate).match(prompt)) {
    const auto& v = *f;
    auto total = [&](const std::string& r) {
      return rubric_quality(v.at("{text_u3}"), r) + rubric_empathy(v.at("{emotion}"), r);
    };
    const bool a = total(v.at("{response_a}")) >= total(v.at("{response_b}"));
    const std::string pick = a ? "A" : "B";
    return "Response " + pick + " scores higher on the rubric. <choice>" + pick + "</choice>";
  }
  throw ContractError("offline judge: prompt matches no judge template");
}

int parse_score(const std::string& reply) {
  const auto body = tagged(reply, "score");
  if (!body) throw ParseError("judge reply has no <score> tag");
  if (body->empty() || body->size() > 2 ||
      !std::all_of(body->begin(), body->end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; })) {
    throw ParseError("judge score '" + *body + "' is not an integer");
  }
  const int score = std::stoi(*body);
  if (score > 10) throw ParseError("judge score " + *body + " outside 0..10");
  return score;
}

Choice parse_choice(const std::string& reply) {
  const auto body = tagged(reply, "choice");
  if (!body) throw ParseError("judge reply has no <choice> tag");
  auto w = words(*body);
  if (!w.empty() && (w.front() == "response" || w.front() == "assistant")) w.erase(w.begin());
  if (w.size() == 1 && w.front() == "a") return Choice::kA;
  if (w.size() == 1 && w.front() == "b") return Choice::kB;
  throw ParseError("judge choice '" + *body + "' is neither A nor B");
}

std::string render_judge_prompt(JudgeKind kind, const std::string& instruction, const std::string& emotion,
                                const std::string& response) {
  if (kind == JudgeKind::kWinrate) throw ContractError("render_judge_prompt: use render_winrate_prompt");
  const auto id = kind == JudgeKind::kQuality ? TemplateId::kJudgeQuality : TemplateId::kJudgeEmpathy;
  return datagen::prompt_template(id).render(
      {{"{instruction}", instruction}, {"{emotion}", emotion}, {"{response}", response}});
}

std::string render_winrate_prompt(const Dialogue& h, const std::string& emotion, const std::string& response_a,
                                  const std::string& response_b) {
  return datagen::prompt_template(TemplateId::kJudgeWinrate)
      .render({{"{text_u1}", h.user[0]},
               {"{text_a1}", h.assistant[0]},
               {"{text_u2}", h.user[1]},
               {"{text_a2}", h.assistant[1]},
               {"{text_u3}", h.user[2]},
               {"{emotion}", emotion},
               {"{response_a}", response_a},
               {"{response_b}", response_b}});
}

JudgeVerdict judge_score(JudgeKind kind, const std::string& instruction, const std::string& emotion,
                         const std::string& response, JudgeBackend& backend) {
  JudgeVerdict v;
  v.kind = kind;
  v.raw.push_back(backend.complete(render_judge_prompt(kind, instruction, emotion, response)));
  try {
    v.score = parse_score(v.raw.back());
  } catch (const ParseError&) {
    v.parse_failed = true;
  }
  return v;
}

JudgeVerdict judge_winrate(const Dialogue& history, const std::string& emotion, const std::string& response_a,
                           const std::string& response_b, JudgeBackend& backend) {
  if (response_a.empty() || response_b.empty()) throw ContractError("judge_winrate: responses must be non-empty");
  JudgeVerdict v;
  v.kind = JudgeKind::kWinrate;
  v.raw.push_back(backend.complete(render_winrate_prompt(history, emotion, response_a, response_b)));
  v.raw.push_back(backend.complete(render_winrate_prompt(history, emotion, response_b, response_a)));
  Choice ab, ba;
  try {
    ab = parse_choice(v.raw[0]);
    ba = parse_choice(v.raw[1]);
  } catch (const ParseError&) {
    v.parse_failed = true;
    v.consistent = false;
    v.choice = Choice::kTie;
    return v;
  }
  if (ab == Choice::kA && ba == Choice::kB) {
    v.choice = Choice::kA;
  } else if (ab == Choice::kB && ba == Choice::kA) {
    v.choice = Choice::kB;
  } else {
    v.choice = Choice::kTie;
    v.consistent = false;
  }
  return v;
}

}  // namespace emoalign::eval
