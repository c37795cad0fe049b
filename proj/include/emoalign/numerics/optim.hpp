#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "emoalign/numerics/param_store.hpp"
#include "json.hpp"

namespace emoalign::numerics {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AdamWConfig, lr, beta1, beta2, eps, weight_decay)

struct OptimizerState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::map<std::string, std::vector<Real>> m;
  std::map<std::string, std::vector<Real>> v;
};

/// One AdamW update over the trainable entries of `store`. Decay is applied
/// to the weights before the moment update. Throws ContractError if a
/// trainable entry has no gradient.
void adamw_step(ParameterStore& store, OptimizerState& state);

/// Scales trainable gradients so their global L2 norm is at most max_norm.
/// Returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

}  // namespace emoalign::numerics
