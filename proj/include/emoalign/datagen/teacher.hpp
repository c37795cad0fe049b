#pragma once

#include <vector>

#include "emoalign/datagen/world.hpp"
#include "emoalign/model/assemble.hpp"
#include "emoalign/model/config.hpp"
#include "emoalign/model/vocab.hpp"
#include "emoalign/numerics/param_store.hpp"

namespace emoalign::datagen {

/// Hand-compiled decoder LM standing in for the instruction-following LLM.
///
/// Block 0 implements a fixed circuit: a previous-token head that copies the
/// last transcript token into a slot at the segment following it, a class
/// head that reads the prompt's emotion control token or segment defaults,
/// and a bag head that averages random token codes. The remaining blocks add
/// random texture. Greedy continuations therefore follow a rule: the first
/// token sits in the class row at column start_column(last transcript token),
/// and each following token advances along the row's column order until it
/// ends, then end-of-sequence.
struct TeacherLM {
  model::LmConfig lm;
  TeacherConfig cfg;
  model::Vocab vocab{model::Vocab::kMinSize};
  /// Entries under "lm.*".
  numerics::ParameterStore params;
  /// Column of the first continuation token, per token id (-1 off-grid).
  std::vector<int> start_column;
  /// Column visiting order per grid row.
  std::vector<std::vector<int>> row_order;

  /// Column that follows a grid token, or -1 when the chain ends.
  int next_column(int token) const;
};

/// Deterministic in the world seed. Throws ConfigError when the LM is too
/// narrow for the circuit.
TeacherLM build_teacher(const WorldConfig& world, const model::LmConfig& lm);

/// Greedy continuation of a text prompt, terminated with end-of-sequence
/// within max_new tokens.
std::vector<int> teacher_continue(const TeacherLM& teacher, const model::AssembledInput& prompt, int max_new);

}  // namespace emoalign::datagen
