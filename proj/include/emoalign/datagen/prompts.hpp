#pragma once

#include <optional>
#include <string>
#include <vector>

#include "emoalign/datagen/templates.hpp"
#include "emoalign/model/assemble.hpp"
#include "emoalign/model/vocab.hpp"

namespace emoalign::datagen {

/// LM input for a template with the transcript as text. `emotion` binds the
/// emotion placeholder and is required exactly when the template has one.
model::AssembledInput build_text_input(const numerics::ParameterStore& params, TemplateId id,
                                       const std::vector<int>& transcript, std::optional<model::Emotion> emotion,
                                       const std::vector<int>& continuation = {});

/// LM input for a template with adapter outputs in the transcript or speech
/// slot.
model::AssembledInput build_speech_input(const numerics::ParameterStore& params, TemplateId id,
                                         const numerics::Tensor& speech_embeds,
                                         std::optional<model::Emotion> emotion,
                                         const std::vector<int>& continuation = {});

/// Surface string of the prompt that build_text_input assembles: tokens
/// render as words, the emotion as its name, and the continuation follows the
/// listing text.
std::string render_text_prompt(TemplateId id, const model::Vocab& vocab, const std::vector<int>& transcript,
                               std::optional<model::Emotion> emotion, const std::vector<int>& continuation = {});

/// As render_text_prompt with the speech slot shown as render_speech_marker.
std::string render_speech_prompt(TemplateId id, const model::Vocab& vocab, std::size_t speech_positions,
                                 std::optional<model::Emotion> emotion, const std::vector<int>& continuation = {});

}  // namespace emoalign::datagen
