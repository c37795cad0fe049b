#include "emoalign/model/assemble.hpp"

#include <set>

#include "emoalign/errors.hpp"
#include "emoalign/numerics/ops.hpp"

namespace emoalign::model {

namespace ops = numerics::ops;

AssembledInput assemble_input(const ParameterStore& params, const PromptLayout& layout,
                              const std::map<std::string, SlotValue>& bindings) {
  std::set<std::string> seen;
  for (const auto& item : layout.items) {
    if (item.kind != LayoutItem::Kind::kSlot) continue;
    if (!seen.insert(item.slot).second) throw ContractError("placeholder '" + item.slot + "' appears twice in layout");
    if (!bindings.count(item.slot)) throw ContractError("placeholder '" + item.slot + "' is unbound");
  }
  for (const auto& [name, _] : bindings) {
    if (!seen.count(name)) throw ContractError("binding '" + name + "' matches no placeholder");
  }
  if (!layout.items.empty()) {
    const auto& last = layout.items.back();
    if (seen.count(kContinuationSlot) &&
        (last.kind != LayoutItem::Kind::kSlot || last.slot != kContinuationSlot)) {
      throw ContractError("continuation placeholder must be last");
    }
  }

  AssembledInput out;
  std::vector<Tensor> parts;
  std::vector<int> run;
  auto flush = [&] {
    if (run.empty()) return;
    parts.push_back(embed_tokens(params, run));
    run.clear();
  };
  auto push_text = [&](int id) {
    run.push_back(id);
    out.ids.push_back(id);
    out.mask.push_back(Modality::kText);
  };

  for (const auto& item : layout.items) {
    if (item.kind == LayoutItem::Kind::kToken) {
      push_text(item.token);
      continue;
    }
    const SlotValue& value = bindings.at(item.slot);
    const bool is_cont = item.slot == kContinuationSlot;
    if (is_cont) {
      if (value.is_speech()) throw ContractError("continuation placeholder must be bound to text");
      out.span_begin = out.ids.size();
    }
    if (value.is_speech()) {
      if (value.speech.rank() != 2 || value.speech.dim(0) == 0) {
        throw ContractError("speech placeholder '" + item.slot + "' bound to empty embeddings");
      }
      flush();
      parts.push_back(value.speech);
      for (std::size_t i = 0; i < value.speech.dim(0); ++i) {
        out.ids.push_back(-1);
        out.mask.push_back(Modality::kSpeech);
      }
    } else {
      for (int id : value.tokens) push_text(id);
    }
    if (is_cont) out.span_end = out.ids.size();
  }
  flush();
  if (parts.empty()) throw ContractError("assemble_input: empty prompt");
  out.embeddings = parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
  if (!seen.count(kContinuationSlot)) out.span_begin = out.span_end = out.ids.size();
  return out;
}

}  // namespace emoalign::model
