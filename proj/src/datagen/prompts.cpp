#include "emoalign/datagen/prompts.hpp"

#include <algorithm>

#include "emoalign/errors.hpp"
#include "emoalign/model/vocab.hpp"

namespace emoalign::datagen {

namespace {

model::AssembledInput build(const numerics::ParameterStore& params, TemplateId id, model::SlotValue content,
                            std::optional<model::Emotion> emotion, const std::vector<int>& continuation) {
  const auto& tpl = prompt_template(id);
  std::map<std::string, model::SlotValue> bindings;
  bindings.emplace(content_slot(id), std::move(content));
  const auto& ph = tpl.placeholders();
  const bool wants_emotion = std::find(ph.begin(), ph.end(), kEmotionSlot) != ph.end();
  if (wants_emotion != emotion.has_value()) {
    throw ContractError("template " + tpl.name() + (wants_emotion ? " needs" : " takes no") + " emotion binding");
  }
  if (emotion) {
    const int label = model::Vocab::kLabelBase + static_cast<int>(model::emotion_index(*emotion));
    bindings.emplace(kEmotionSlot, model::SlotValue::text({label}));
  }
  bindings.emplace(model::kContinuationSlot, model::SlotValue::text(continuation));
  return model::assemble_input(params, lm_layout(id), bindings);
}

std::string render(TemplateId id, const model::Vocab& vocab, std::string content, std::optional<model::Emotion> emotion,
                   const std::vector<int>& continuation) {
  const auto& tpl = prompt_template(id);
  std::map<std::string, std::string> bindings = {{content_slot(id), std::move(content)}};
  if (emotion) bindings.emplace(kEmotionSlot, std::string(model::emotion_name(*emotion)));
  bindings.emplace(model::kContinuationSlot, vocab.render(continuation));
  return tpl.render(bindings);
}

}  // namespace

model::AssembledInput build_text_input(const numerics::ParameterStore& params, TemplateId id,
                                       const std::vector<int>& transcript, std::optional<model::Emotion> emotion,
                                       const std::vector<int>& continuation) {
  return build(params, id, model::SlotValue::text(transcript), emotion, continuation);
}

model::AssembledInput build_speech_input(const numerics::ParameterStore& params, TemplateId id,
                                         const numerics::Tensor& speech_embeds,
                                         std::optional<model::Emotion> emotion,
                                         const std::vector<int>& continuation) {
  return build(params, id, model::SlotValue::audio(speech_embeds), emotion, continuation);
}

std::string render_text_prompt(TemplateId id, const model::Vocab& vocab, const std::vector<int>& transcript,
                               std::optional<model::Emotion> emotion, const std::vector<int>& continuation) {
  return render(id, vocab, vocab.render(transcript), emotion, continuation);
}

std::string render_speech_prompt(TemplateId id, const model::Vocab& vocab, std::size_t speech_positions,
                                 std::optional<model::Emotion> emotion, const std::vector<int>& continuation) {
  return render(id, vocab, render_speech_marker(speech_positions), emotion, continuation);
}

}  // namespace emoalign::datagen
