#include "emoalign/datagen/templates.hpp"

#include <algorithm>
#include <cctype>

#include "emoalign/errors.hpp"
#include "emoalign/model/vocab.hpp"

namespace emoalign::datagen {

namespace detail {
const std::map<std::string, std::string>& embedded_templates();
}

namespace {

std::string load_embedded(const std::string& file) {
  const auto& all = detail::embedded_templates();
  auto it = all.find(file);
  if (it == all.end()) throw ConfigError("missing template '" + file + "'");
  std::string text = it->second;
  if (!text.empty() && text.back() == '\n') text.pop_back();
  return text;
}

std::vector<TemplatePiece> split(const std::string& text, const std::vector<std::string>& placeholders) {
  std::vector<TemplatePiece> pieces;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t best = std::string::npos;
    const std::string* which = nullptr;
    for (const auto& p : placeholders) {
      const std::size_t at = text.find(p, pos);
      if (at < best) {
        best = at;
        which = &p;
      }
    }
    if (which == nullptr) {
      pieces.push_back({false, text.substr(pos)});
      break;
    }
    if (best > pos) pieces.push_back({false, text.substr(pos, best - pos)});
    pieces.push_back({true, *which});
    pos = best + which->size();
  }
  return pieces;
}

struct Entry {
  TemplateId id;
  const char* file;
  std::vector<std::string> placeholders;
  std::optional<std::string> continuation;
};

const std::vector<Entry>& entries() {
  static const std::vector<Entry> kEntries = {
      {TemplateId::kContinuation, "continuation", {kTranscriptSlot}, std::nullopt},
      {TemplateId::kEmotionContinuationData, "emotion_continuation_data", {kEmotionSlot, kTranscriptSlot}, std::nullopt},
      {TemplateId::kEmotionContinuationTrain,
       "emotion_continuation_train",
       {kSpeechFeaturesSlot, kTextContinuationSlot},
       kTextContinuationSlot},
      {TemplateId::kSer, "ser", {kTranscriptOrSpeechSlot}, std::nullopt},
      {TemplateId::kJudgeQuality, "judge_quality", {"{instruction}", "{emotion}", "{response}"}, std::nullopt},
      {TemplateId::kJudgeEmpathy, "judge_empathy", {"{instruction}", "{emotion}", "{response}"}, std::nullopt},
      {TemplateId::kJudgeWinrate,
       "judge_winrate",
       {"{text_u1}", "{text_a1}", "{text_u2}", "{text_a2}", "{text_u3}", "{emotion}", "{response_a}", "{response_b}"},
       std::nullopt},
  };
  return kEntries;
}

const Entry& entry(TemplateId id) {
  for (const auto& e : entries()) {
    if (e.id == id) return e;
  }
  throw ContractError("unknown template id");
}

bool is_lm_template(TemplateId id) {
  return std::find(std::begin(kLmTemplates), std::end(kLmTemplates), id) != std::end(kLmTemplates);
}

}  // namespace

PromptTemplate::PromptTemplate(TemplateId id, std::string name, std::string text, std::vector<std::string> placeholders,
                               std::optional<std::string> continuation_placeholder)
    : id_(id),
      name_(std::move(name)),
      text_(std::move(text)),
      placeholders_(std::move(placeholders)),
      continuation_(std::move(continuation_placeholder)) {
  for (const auto& p : placeholders_) {
    const std::size_t first = text_.find(p);
    if (first == std::string::npos) throw ConfigError("template " + name_ + ": placeholder " + p + " not found");
    if (text_.find(p, first + 1) != std::string::npos) {
      throw ConfigError("template " + name_ + ": placeholder " + p + " appears twice");
    }
  }
  pieces_ = split(text_, placeholders_);
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
  for (const auto& [key, _] : bindings) {
    const bool known = std::find(placeholders_.begin(), placeholders_.end(), key) != placeholders_.end();
    if (!known && key != model::kContinuationSlot) {
      throw ContractError("template " + name_ + ": binding " + key + " matches no placeholder");
    }
  }
  std::string out;
  for (const auto& piece : pieces_) {
    if (!piece.is_slot) {
      out += piece.text;
      continue;
    }
    auto it = bindings.find(piece.text);
    if (it == bindings.end() && continuation_ && piece.text == *continuation_) {
      it = bindings.find(model::kContinuationSlot);
    }
    if (it == bindings.end()) throw ContractError("template " + name_ + ": placeholder " + piece.text + " is unbound");
    out += it->second;
  }
  if (!continuation_) {
    auto it = bindings.find(model::kContinuationSlot);
    if (it != bindings.end() && !it->second.empty()) {
      if (!out.empty() && !std::isspace(static_cast<unsigned char>(out.back()))) out += ' ';
      out += it->second;
    }
  }
  return out;
}

std::optional<std::map<std::string, std::string>> PromptTemplate::match(const std::string& text) const {
  std::map<std::string, std::string> values;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < pieces_.size(); ++i) {
    const auto& piece = pieces_[i];
    if (!piece.is_slot) {
      if (text.compare(pos, piece.text.size(), piece.text) != 0) return std::nullopt;
      pos += piece.text.size();
      continue;
    }
    std::size_t end = text.size();
    if (i + 1 < pieces_.size()) {
      end = text.find(pieces_[i + 1].text, pos);
      if (end == std::string::npos) return std::nullopt;
    }
    values[piece.text] = text.substr(pos, end - pos);
    pos = end;
  }
  if (pos != text.size()) return std::nullopt;
  return values;
}

const PromptTemplate& prompt_template(TemplateId id) {
  static const std::vector<PromptTemplate> kAll = [] {
    std::vector<PromptTemplate> all;
    for (const auto& e : entries()) all.emplace_back(e.id, e.file, load_embedded(e.file), e.placeholders, e.continuation);
    return all;
  }();
  for (const auto& t : kAll) {
    if (t.id() == id) return t;
  }
  throw ContractError("unknown template id");
}

std::string template_file_name(TemplateId id) { return std::string(entry(id).file) + ".txt"; }

std::vector<int> segment_tokens(TemplateId id) {
  if (!is_lm_template(id)) throw ContractError("template " + template_file_name(id) + " is not an LM prompt");
  int next = model::Vocab::kSegmentBase;
  for (TemplateId t : kLmTemplates) {
    std::vector<int> ids;
    for (const auto& piece : prompt_template(t).pieces()) {
      if (!piece.is_slot) ids.push_back(next++);
    }
    if (t == id) return ids;
  }
  throw ContractError("unreachable");
}

std::string content_slot(TemplateId id) {
  switch (id) {
    case TemplateId::kContinuation:
    case TemplateId::kEmotionContinuationData:
      return kTranscriptSlot;
    case TemplateId::kEmotionContinuationTrain:
      return kSpeechFeaturesSlot;
    case TemplateId::kSer:
      return kTranscriptOrSpeechSlot;
    default:
      throw ContractError("template " + template_file_name(id) + " is not an LM prompt");
  }
}

int query_segment(TemplateId id) {
  const auto ids = segment_tokens(id);
  const std::string slot = content_slot(id);
  std::size_t seg = 0;
  bool after = false;
  for (const auto& piece : prompt_template(id).pieces()) {
    if (piece.is_slot) {
      after = piece.text == slot;
      continue;
    }
    if (after) return ids[seg];
    ++seg;
  }
  throw ContractError("template " + template_file_name(id) + " has no literal after its content slot");
}

model::PromptLayout lm_layout(TemplateId id) {
  const auto ids = segment_tokens(id);
  const auto& tpl = prompt_template(id);
  model::PromptLayout layout;
  layout.items.push_back({model::LayoutItem::Kind::kToken, model::Vocab::kBos, {}});
  std::size_t seg = 0;
  for (const auto& piece : tpl.pieces()) {
    if (!piece.is_slot) {
      layout.items.push_back({model::LayoutItem::Kind::kToken, ids[seg++], {}});
    } else if (tpl.continuation_placeholder() && piece.text == *tpl.continuation_placeholder()) {
      layout.items.push_back({model::LayoutItem::Kind::kSlot, -1, model::kContinuationSlot});
    } else {
      layout.items.push_back({model::LayoutItem::Kind::kSlot, -1, piece.text});
    }
  }
  if (!tpl.continuation_placeholder()) {
    layout.items.push_back({model::LayoutItem::Kind::kSlot, -1, model::kContinuationSlot});
  }
  return layout;
}

std::string render_speech_marker(std::size_t positions) { return "<speech:" + std::to_string(positions) + ">"; }

}  // namespace emoalign::datagen
