#include "emoalign/eval/suites.hpp"

#include "emoalign/errors.hpp"
#include "emoalign/numerics/parallel.hpp"

namespace emoalign::eval {

namespace {

std::vector<std::string> rendered_responses(const ParameterStore& params, const ModelConfig& cfg,
                                            const std::vector<Sample>& testset, int max_new, int workers) {
  const model::Vocab vocab(cfg.lm.vocab_size);
  std::vector<std::string> out(testset.size());
  numerics::parallel_for(testset.size(), workers,
                         [&](std::size_t i) { out[i] = vocab.render(speech_response(params, cfg, testset[i], max_new)); });
  return out;
}

void require_labels(const std::vector<Sample>& testset) {
  if (testset.empty()) throw ContractError("evaluation testset is empty");
  for (const auto& s : testset) {
    if (!s.emotion) throw ContractError("sample " + s.id + " has no emotion label");
  }
}

}  // namespace

nlohmann::json to_json(const ResponseReport& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& it : r.items) {
    items.push_back({{"id", it.id},
                     {"instruction", it.instruction},
                     {"emotion", it.emotion},
                     {"response", it.response},
                     {"quality", to_json(it.quality)},
                     {"empathy", to_json(it.empathy)}});
  }
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"mean_quality", opt(r.mean_quality)},
          {"mean_empathy", opt(r.mean_empathy)},
          {"parse_failures", r.parse_failures},
          {"items", items}};
}

ResponseReport eval_responses(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Sample>& testset,
                              JudgeBackend& backend, int concurrency, int max_new, int workers) {
  require_labels(testset);
  const model::Vocab vocab(cfg.lm.vocab_size);
  const auto responses = rendered_responses(params, cfg, testset, max_new, workers);
  ResponseReport r;
  r.items.resize(testset.size());
  numerics::parallel_for(testset.size(), concurrency, [&](std::size_t i) {
    auto& it = r.items[i];
    it.id = testset[i].id;
    it.instruction = vocab.render(testset[i].tokens);
    it.emotion = std::string(model::emotion_name(*testset[i].emotion));
    it.response = responses[i];
    it.quality = judge_score(JudgeKind::kQuality, it.instruction, it.emotion, it.response, backend);
    it.empathy = judge_score(JudgeKind::kEmpathy, it.instruction, it.emotion, it.response, backend);
  });
  double q = 0.0, e = 0.0;
  std::size_t nq = 0, ne = 0;
  for (const auto& it : r.items) {
    if (it.quality.score) {
      q += *it.quality.score;
      ++nq;
    }
    if (it.empathy.score) {
      e += *it.empathy.score;
      ++ne;
    }
    r.parse_failures += (it.quality.parse_failed ? 1 : 0) + (it.empathy.parse_failed ? 1 : 0);
  }
  if (nq) r.mean_quality = q / static_cast<double>(nq);
  if (ne) r.mean_empathy = e / static_cast<double>(ne);
  return r;
}

nlohmann::json to_json(const WinrateReport& r) {
  nlohmann::json verdicts = nlohmann::json::array();
  for (const auto& v : r.verdicts) verdicts.push_back(to_json(v));
  return {{"total", r.total},       {"wins", r.wins},         {"losses", r.losses},
          {"ties", r.ties},         {"inconsistent", r.inconsistent}, {"parse_failures", r.parse_failures},
          {"win_rate", r.win_rate()}, {"tie_rate", r.tie_rate()}, {"verdicts", verdicts}};
}

std::vector<Dialogue> build_dialogues(const std::vector<Sample>& testset, const model::Vocab& vocab) {
  std::vector<Dialogue> out;
  const std::size_t n = testset.size();
  for (std::size_t i = 0; i < n; ++i) {
    const Sample& a = testset[(i + 1) % n];
    const Sample& b = testset[(i + 2) % n];
    out.push_back({{vocab.render(a.tokens), vocab.render(b.tokens), vocab.render(testset[i].tokens)},
                   {vocab.render(a.continuation), vocab.render(b.continuation)}});
  }
  return out;
}

WinrateReport eval_winrate(const ParameterStore& params_a, const ParameterStore& params_b, const ModelConfig& cfg,
                           const std::vector<Sample>& testset, JudgeBackend& backend, int concurrency, int max_new,
                           int workers) {
  require_labels(testset);
  const model::Vocab vocab(cfg.lm.vocab_size);
  const auto dialogues = build_dialogues(testset, vocab);
  const auto ra = rendered_responses(params_a, cfg, testset, max_new, workers);
  const auto rb = rendered_responses(params_b, cfg, testset, max_new, workers);
  WinrateReport r;
  r.total = testset.size();
  r.verdicts.resize(testset.size());
  numerics::parallel_for(testset.size(), concurrency, [&](std::size_t i) {
    const std::string emotion(model::emotion_name(*testset[i].emotion));
    auto& v = r.verdicts[i];
    // An empty response loses without a judge call; two empty ones tie.
    if (ra[i].empty() || rb[i].empty()) {
      v.kind = JudgeKind::kWinrate;
      v.choice = ra[i].empty() == rb[i].empty() ? Choice::kTie : (ra[i].empty() ? Choice::kB : Choice::kA);
      return;
    }
    v = judge_winrate(dialogues[i], emotion, ra[i], rb[i], backend);
  });
  for (const auto& v : r.verdicts) {
    if (v.choice == Choice::kA) ++r.wins;
    if (v.choice == Choice::kB) ++r.losses;
    if (v.choice == Choice::kTie) ++r.ties;
    if (!v.consistent) ++r.inconsistent;
    if (v.parse_failed) ++r.parse_failures;
  }
  return r;
}

}  // namespace emoalign::eval
