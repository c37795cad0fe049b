#pragma once

#include <cstdint>
#include <vector>

#include "emoalign/model/model.hpp"

namespace emoalign::model {

struct GenerateOptions {
  enum class Mode { kGreedy, kSampled };
  Mode mode = Mode::kGreedy;
  std::uint64_t seed = 0;
  double temperature = 1.0;
  /// Tokens that may be emitted; empty allows all.
  std::vector<bool> allowed;
};

/// Appends up to max_new tokens to the prefix. Greedy ties resolve to the
/// lowest id. Stops after emitting end-of-sequence (which is included) or at
/// the position limit.
std::vector<int> generate(const ParameterStore& params, const LmConfig& cfg, const PLoRAConfig& lora,
                          const Tensor& prefix, const ModalityMask& mask, std::size_t max_new,
                          const GenerateOptions& options = {});

/// Index of the largest allowed entry of a row.
int argmax(std::span<const Real> row, const std::vector<bool>& allowed = {});

}  // namespace emoalign::model
