#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emoalign/model/assemble.hpp"

namespace emoalign::datagen {

enum class TemplateId {
  kContinuation,
  kEmotionContinuationData,
  kEmotionContinuationTrain,
  kSer,
  kJudgeQuality,
  kJudgeEmpathy,
  kJudgeWinrate,
};

inline constexpr TemplateId kLmTemplates[] = {TemplateId::kContinuation, TemplateId::kEmotionContinuationData,
                                              TemplateId::kEmotionContinuationTrain, TemplateId::kSer};

/// Placeholder spellings used by the LM-facing templates.
inline constexpr const char* kTranscriptSlot = "<transcript>";
inline constexpr const char* kEmotionSlot = "<emotion>";
inline constexpr const char* kSpeechFeaturesSlot = "<speech features>";
inline constexpr const char* kTranscriptOrSpeechSlot = "<transcript|speech>";
inline constexpr const char* kTextContinuationSlot = "<text continuation>";

struct TemplatePiece {
  bool is_slot = false;
  std::string text;  // literal text or placeholder spelling
};

/// A prompt listing with declared placeholders. Each placeholder occurs
/// exactly once in the text.
class PromptTemplate {
 public:
  PromptTemplate(TemplateId id, std::string name, std::string text, std::vector<std::string> placeholders,
                 std::optional<std::string> continuation_placeholder = std::nullopt);

  TemplateId id() const { return id_; }
  const std::string& name() const { return name_; }
  const std::string& text() const { return text_; }
  const std::vector<std::string>& placeholders() const { return placeholders_; }
  /// Placeholder holding the target continuation, when the listing has one.
  const std::optional<std::string>& continuation_placeholder() const { return continuation_; }
  const std::vector<TemplatePiece>& pieces() const { return pieces_; }

  /// Substitutes every placeholder. A binding for model::kContinuationSlot is
  /// appended after the text when the listing has no continuation
  /// placeholder, separated by one space unless the text ends in whitespace.
  std::string render(const std::map<std::string, std::string>& bindings) const;

  /// Inverse of render for listings without an appended continuation: the
  /// slot values of `text`, or nullopt when its literals do not line up. Each
  /// slot ends at the first occurrence of the following literal.
  std::optional<std::map<std::string, std::string>> match(const std::string& text) const;

 private:
  TemplateId id_;
  std::string name_;
  std::string text_;
  std::vector<std::string> placeholders_;
  std::optional<std::string> continuation_;
  std::vector<TemplatePiece> pieces_;
};

const PromptTemplate& prompt_template(TemplateId id);
std::string template_file_name(TemplateId id);

/// Segment token ids for the literal pieces of an LM template, in order.
std::vector<int> segment_tokens(TemplateId id);
/// Segment token that directly follows the transcript or speech slot.
int query_segment(TemplateId id);
/// The template's transcript or speech placeholder.
std::string content_slot(TemplateId id);

/// Token layout: BOS, then one token per literal piece, then the slots. A
/// continuation slot is always last.
model::PromptLayout lm_layout(TemplateId id);

/// How speech is spelled inside a rendered prompt.
std::string render_speech_marker(std::size_t positions);

}  // namespace emoalign::datagen
