#include "emoalign/model/vocab.hpp"

#include <array>

#include "emoalign/errors.hpp"

namespace emoalign::model {

namespace {

constexpr std::array<std::string_view, kNumEmotions> kNames = {"neutral", "happy", "sad", "angry", "surprise"};

// Grid lexicon, one row per grid row. No word contains a label name.
const std::array<std::vector<std::string>, Vocab::kRows> kLexicon = {{
    {"well", "then", "and", "so", "it", "was", "more", "also"},
    {"okay", "sure", "fine", "noted", "steady", "plain", "usual", "calm"},
    {"great", "glad", "wonderful", "yay", "fun", "bright", "cheer", "delight"},
    {"sorry", "sorrow", "comfort", "gently", "support", "hug", "care", "tears"},
    {"understand", "frustrating", "breathe", "fair", "listen", "upset", "annoying", "rage"},
    {"wow", "unexpected", "really", "amazing", "whoa", "sudden", "astonishing", "shock"},
}};

}  // namespace

std::string_view emotion_name(Emotion e) { return kNames[emotion_index(e)]; }

std::optional<Emotion> emotion_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kNumEmotions; ++i) {
    if (kNames[i] == name) return static_cast<Emotion>(i);
  }
  return std::nullopt;
}

Emotion emotion_at(std::size_t index) {
  if (index >= kNumEmotions) throw ContractError("emotion index " + std::to_string(index) + " out of range");
  return static_cast<Emotion>(index);
}

const std::vector<std::string>& emotion_cue_words(Emotion e) {
  static const auto table = [] {
    std::array<std::vector<std::string>, kNumEmotions> t;
    for (std::size_t i = 0; i < kNumEmotions; ++i) {
      t[i].emplace_back(kNames[i]);
      for (const auto& w : kLexicon[i + 1]) t[i].push_back(w);
    }
    return t;
  }();
  return table[emotion_index(e)];
}

Vocab::Vocab(int size) : size_(size), cols_((size - kContentBase) / kRows) {
  if (size < kMinSize) {
    throw ConfigError("vocabulary size " + std::to_string(size) + " below minimum " + std::to_string(kMinSize));
  }
}

std::optional<Emotion> Vocab::label_of(int id) const {
  if (!is_label(id)) return std::nullopt;
  return static_cast<Emotion>(id - kLabelBase);
}

int Vocab::grid_token(int row, int col) const {
  if (row < 0 || row >= kRows || col < 0 || col >= cols_) throw ContractError("grid cell out of range");
  return kContentBase + row * cols_ + col;
}

int Vocab::row_of(int id) const { return is_grid(id) ? (id - kContentBase) / cols_ : -1; }
int Vocab::col_of(int id) const { return is_grid(id) ? (id - kContentBase) % cols_ : -1; }

std::string Vocab::word(int id) const {
  if (id < 0 || id >= size_) throw ContractError("token id " + std::to_string(id) + " outside vocabulary");
  if (id == kEos) return "";
  if (id == kBos) return "<bos>";
  if (is_segment(id)) return "<seg:" + std::to_string(id - kSegmentBase) + ">";
  if (is_label(id)) return std::string(kNames[static_cast<std::size_t>(id - kLabelBase)]);
  if (!is_grid(id)) return "filler" + std::to_string(id);
  const int row = row_of(id), col = col_of(id);
  const auto& words = kLexicon[static_cast<std::size_t>(row)];
  if (col < static_cast<int>(words.size())) return words[static_cast<std::size_t>(col)];
  return words[static_cast<std::size_t>(col) % words.size()] + std::to_string(col / static_cast<int>(words.size()));
}

std::string Vocab::render(const std::vector<int>& ids) const {
  std::string out;
  for (int id : ids) {
    if (id == kEos) break;
    if (!out.empty()) out += ' ';
    out += word(id);
  }
  return out;
}

}  // namespace emoalign::model
