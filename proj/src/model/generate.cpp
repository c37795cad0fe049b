#include "emoalign/model/generate.hpp"

#include <cmath>
#include <limits>

#include "emoalign/errors.hpp"
#include "emoalign/model/vocab.hpp"
#include "emoalign/numerics/ops.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::model {

namespace ops = numerics::ops;

int argmax(std::span<const Real> row, const std::vector<bool>& allowed) {
  int best = -1;
  Real best_v = -std::numeric_limits<Real>::infinity();
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!allowed.empty() && !allowed[i]) continue;
    if (best < 0 || row[i] > best_v) {
      best = static_cast<int>(i);
      best_v = row[i];
    }
  }
  if (best < 0) throw ContractError("argmax: no allowed token");
  return best;
}

std::vector<int> generate(const ParameterStore& params, const LmConfig& cfg, const PLoRAConfig& lora,
                          const Tensor& prefix, const ModalityMask& mask, std::size_t max_new,
                          const GenerateOptions& options) {
  if (max_new < 1) throw ContractError("generate: max_new must be at least 1");
  if (options.mode == GenerateOptions::Mode::kSampled && !(options.temperature > 0.0)) {
    throw ContractError("generate: temperature must be positive");
  }
  if (!options.allowed.empty() && options.allowed.size() != static_cast<std::size_t>(cfg.vocab_size)) {
    throw DimensionError("generate: allowed mask does not match vocabulary");
  }
  numerics::NoGradGuard no_grad;
  numerics::Rng rng(options.seed);
  Tensor emb = prefix;
  ModalityMask m = mask;
  std::vector<int> out;
  const auto limit = static_cast<std::size_t>(cfg.max_positions);
  while (out.size() < max_new && m.size() <= limit) {
    Tensor logits = lm_forward(params, cfg, lora, emb, m);
    const auto v = static_cast<std::size_t>(cfg.vocab_size);
    auto row = logits.data().subspan((m.size() - 1) * v, v);
    int next;
    if (options.mode == GenerateOptions::Mode::kGreedy) {
      next = argmax(row, options.allowed);
    } else {
      const Real mx = row[static_cast<std::size_t>(argmax(row, options.allowed))];
      std::vector<double> w(v, 0.0);
      for (std::size_t i = 0; i < v; ++i) {
        if (options.allowed.empty() || options.allowed[i]) w[i] = std::exp((row[i] - mx) / options.temperature);
      }
      next = static_cast<int>(rng.categorical(w));
    }
    out.push_back(next);
    if (next == Vocab::kEos || m.size() == limit) break;
    emb = ops::concat_rows({emb, embed_tokens(params, {next})});
    m.push_back(Modality::kText);
  }
  return out;
}

}  // namespace emoalign::model
