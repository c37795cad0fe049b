#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "emoalign/numerics/param_store.hpp"

namespace emoalign::numerics {

struct GradCheckOptions {
  double eps = 1e-5;
  /// Denominator floor, so near-zero gradients are compared absolutely.
  double floor = 1e-6;
  /// Elements probed per parameter, evenly strided; 0 probes all of them.
  std::size_t max_per_param = 0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of f with central differences over every
/// trainable entry of `point`. f must rebuild its graph from the store on
/// each call.
GradCheckResult gradient_check(const std::function<Tensor()>& f, ParameterStore& point,
                               const GradCheckOptions& options = {});

}  // namespace emoalign::numerics
