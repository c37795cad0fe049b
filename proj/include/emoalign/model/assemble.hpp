#pragma once

#include <map>
#include <string>
#include <vector>

#include "emoalign/model/model.hpp"

namespace emoalign::model {

/// Name of the slot that holds the target continuation; always last.
inline constexpr const char* kContinuationSlot = "continuation";

struct LayoutItem {
  enum class Kind { kToken, kSlot };
  Kind kind = Kind::kToken;
  int token = -1;
  std::string slot;
};

/// Token-level shape of a prompt: literal segment tokens and named slots.
struct PromptLayout {
  std::vector<LayoutItem> items;
};

/// Value bound to a slot: either text token ids or speech embeddings.
struct SlotValue {
  std::vector<int> tokens;
  Tensor speech;

  static SlotValue text(std::vector<int> ids) { return {std::move(ids), Tensor()}; }
  static SlotValue audio(Tensor embeds) { return {{}, std::move(embeds)}; }
  bool is_speech() const { return speech.defined(); }
};

struct AssembledInput {
  Tensor embeddings;         // [N, D]
  ModalityMask mask;         // N entries
  std::vector<int> ids;      // token id per position, -1 at speech rows
  std::size_t span_begin = 0;  // continuation positions [span_begin, span_end)
  std::size_t span_end = 0;

  std::size_t size() const { return mask.size(); }
  /// Targets of the continuation span, predicted by rows span_begin-1 ...
  std::vector<int> targets() const { return {ids.begin() + static_cast<std::ptrdiff_t>(span_begin), ids.begin() + static_cast<std::ptrdiff_t>(span_end)}; }
};

/// Builds LM input embeddings for a layout. Every slot must be bound exactly
/// once; the continuation slot must be text.
AssembledInput assemble_input(const ParameterStore& params, const PromptLayout& layout,
                              const std::map<std::string, SlotValue>& bindings);

}  // namespace emoalign::model
