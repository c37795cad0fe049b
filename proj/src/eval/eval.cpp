#include "emoalign/eval/eval.hpp"

#include <algorithm>
#include <cctype>

#include "emoalign/alignment/alignment.hpp"
#include "emoalign/datagen/prompts.hpp"
#include "emoalign/errors.hpp"
#include "emoalign/model/generate.hpp"
#include "emoalign/numerics/parallel.hpp"

namespace emoalign::eval {

using datagen::TemplateId;

namespace {

bool word_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_'; }

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

/// First whole-word occurrence of `word` in `text`.
std::size_t find_word(const std::string& text, const std::string& word) {
  std::size_t at = text.find(word);
  while (at != std::string::npos) {
    const bool left = at == 0 || !word_char(text[at - 1]);
    const std::size_t end = at + word.size();
    const bool right = end >= text.size() || !word_char(text[end]);
    if (left && right) return at;
    at = text.find(word, at + 1);
  }
  return std::string::npos;
}

void require_labels(const std::vector<Sample>& testset) {
  if (testset.empty()) throw ContractError("evaluation testset is empty");
  for (const auto& s : testset) {
    if (!s.emotion) throw ContractError("sample " + s.id + " has no emotion label");
  }
}

}  // namespace

nlohmann::json to_json(const SerReport& r) {
  nlohmann::json per_class = nlohmann::json::object(), confusion = nlohmann::json::object();
  for (Emotion e : model::kAllEmotions) {
    const auto i = model::emotion_index(e);
    const std::string name(model::emotion_name(e));
    per_class[name] = r.per_class[i];
    nlohmann::json row = nlohmann::json::object();
    for (Emotion p : model::kAllEmotions) row[std::string(model::emotion_name(p))] = r.confusion[i][model::emotion_index(p)];
    confusion[name] = row;
  }
  return {{"total", r.total},         {"correct", r.correct},         {"unparseable", r.unparseable},
          {"accuracy", r.accuracy},   {"per_class", per_class},       {"confusion", confusion}};
}

std::optional<Emotion> parse_emotion_label(std::string_view text) {
  const std::string t = lower(text);
  std::optional<Emotion> best;
  std::size_t best_at = std::string::npos;
  for (Emotion e : model::kAllEmotions) {
    const std::size_t at = find_word(t, std::string(model::emotion_name(e)));
    if (at < best_at) {
      best_at = at;
      best = e;
    }
  }
  return best;
}

std::optional<Emotion> parse_emotion_label(const std::vector<int>& ids, const model::Vocab& vocab) {
  return parse_emotion_label(vocab.render(ids));
}

SerReport score_ser(const std::vector<Emotion>& truth, const std::vector<std::optional<Emotion>>& predicted) {
  if (truth.size() != predicted.size()) throw DimensionError("score_ser: truth and prediction counts differ");
  SerReport r;
  r.total = truth.size();
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto t = model::emotion_index(truth[i]);
    ++r.class_totals[t];
    if (!predicted[i]) {
      ++r.unparseable;
      continue;
    }
    const auto p = model::emotion_index(*predicted[i]);
    ++r.confusion[t][p];
    if (p == t) ++r.correct;
  }
  r.accuracy = r.total ? static_cast<double>(r.correct) / static_cast<double>(r.total) : 0.0;
  for (std::size_t c = 0; c < kNumEmotions; ++c) {
    r.per_class[c] = r.class_totals[c] ? static_cast<double>(r.confusion[c][c]) / static_cast<double>(r.class_totals[c])
                                       : 0.0;
  }
  return r;
}

std::vector<std::vector<int>> ser_answers(const ParameterStore& params, const ModelConfig& cfg,
                                          const std::vector<Sample>& testset, int max_new, int workers) {
  std::vector<std::vector<int>> out(testset.size());
  numerics::parallel_for(testset.size(), workers, [&](std::size_t i) {
    numerics::NoGradGuard no_grad;
    const Tensor speech = alignment::speech_embeddings(params, cfg, testset[i]);
    auto in = datagen::build_speech_input(params, TemplateId::kSer, speech, std::nullopt);
    out[i] = model::generate(params, cfg.lm, cfg.lora, in.embeddings, in.mask, max_new, {});
  });
  return out;
}

SerReport eval_ser(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Sample>& testset, int max_new,
                   int workers) {
  require_labels(testset);
  const model::Vocab vocab(cfg.lm.vocab_size);
  const auto answers = ser_answers(params, cfg, testset, max_new, workers);
  std::vector<Emotion> truth;
  std::vector<std::optional<Emotion>> predicted;
  for (std::size_t i = 0; i < testset.size(); ++i) {
    truth.push_back(*testset[i].emotion);
    predicted.push_back(parse_emotion_label(answers[i], vocab));
  }
  return score_ser(truth, predicted);
}

double ser_head_accuracy(const ParameterStore& params, const ModelConfig& cfg, const std::vector<Sample>& testset,
                         int workers) {
  require_labels(testset);
  std::vector<char> hit(testset.size(), 0);
  numerics::parallel_for(testset.size(), workers, [&](std::size_t i) {
    numerics::NoGradGuard no_grad;
    const auto probs = model::classify_emotion(params, alignment::speech_embeddings(params, cfg, testset[i]));
    const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    hit[i] = best == model::emotion_index(*testset[i].emotion) ? 1 : 0;
  });
  return static_cast<double>(std::count(hit.begin(), hit.end(), 1)) / static_cast<double>(testset.size());
}

nlohmann::json to_json(const AgreementReport& r) {
  return {{"total", r.total}, {"matches", r.matches}, {"match_rate", r.match_rate}, {"mean_kl", r.mean_kl}};
}

AgreementReport eval_agreement(const ParameterStore& params, const ModelConfig& cfg, const datagen::TeacherLM& teacher,
                               const std::vector<Sample>& testset, int max_new, int workers) {
  if (testset.empty()) throw ContractError("evaluation testset is empty");
  std::vector<char> match(testset.size(), 0);
  std::vector<double> kl(testset.size(), 0.0);
  numerics::parallel_for(testset.size(), workers, [&](std::size_t i) {
    numerics::NoGradGuard no_grad;
    const Sample& s = testset[i];
    const Tensor speech = alignment::speech_embeddings(params, cfg, s);
    const auto text_prompt = datagen::build_text_input(teacher.params, TemplateId::kContinuation, s.tokens, std::nullopt);
    const auto reference = datagen::teacher_continue(teacher, text_prompt, max_new);
    auto in = datagen::build_speech_input(params, TemplateId::kContinuation, speech, std::nullopt);
    match[i] = model::generate(params, cfg.lm, cfg.lora, in.embeddings, in.mask, max_new, {}) == reference;
    const Tensor targets = alignment::teacher_targets(teacher, s.tokens, reference);
    kl[i] = alignment::semantic_loss(params, cfg, speech, reference, targets).kl();
  });
  AgreementReport r;
  r.total = testset.size();
  for (std::size_t i = 0; i < testset.size(); ++i) {
    r.matches += match[i] ? 1 : 0;
    r.mean_kl += kl[i];
  }
  r.match_rate = static_cast<double>(r.matches) / static_cast<double>(r.total);
  r.mean_kl /= static_cast<double>(r.total);
  return r;
}

double continuation_cross_entropy(const ParameterStore& params, const ModelConfig& cfg,
                                  const std::vector<Sample>& testset, int workers) {
  if (testset.empty()) throw ContractError("evaluation testset is empty");
  std::vector<double> ce(testset.size(), 0.0);
  numerics::parallel_for(testset.size(), workers, [&](std::size_t i) {
    numerics::NoGradGuard no_grad;
    const Tensor speech = alignment::speech_embeddings(params, cfg, testset[i]);
    ce[i] = alignment::continuation_loss(params, cfg, speech, testset[i].continuation).item();
  });
  double total = 0.0;
  for (double v : ce) total += v;
  return total / static_cast<double>(ce.size());
}

std::vector<int> speech_response(const ParameterStore& params, const ModelConfig& cfg, const Sample& sample,
                                 int max_new) {
  numerics::NoGradGuard no_grad;
  const Tensor speech = alignment::speech_embeddings(params, cfg, sample);
  auto in = datagen::build_speech_input(params, TemplateId::kEmotionContinuationTrain, speech, std::nullopt);
  return model::generate(params, cfg.lm, cfg.lora, in.embeddings, in.mask, max_new, {});
}

}  // namespace emoalign::eval
