#include "emoalign/numerics/optim.hpp"

#include <cmath>

#include "emoalign/errors.hpp"

namespace emoalign::numerics {

void adamw_step(ParameterStore& store, OptimizerState& state) {
  const auto& c = state.config;
  for (const auto& name : store.trainable()) {
    if (!store.get(name).has_grad()) throw ContractError("no gradient for trainable parameter '" + name + "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  for (const auto& name : store.trainable()) {
    Tensor& p = store.get(name);
    auto w = p.mutable_data();
    const auto g = p.grad();
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.size() != w.size()) m.assign(w.size(), 0.0);
    if (v.size() != w.size()) v.assign(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] -= c.lr * c.weight_decay * w[i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= c.lr * mhat / (std::sqrt(vhat) + c.eps);
    }
    check_finite(w, name.c_str());
  }
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& name : store.trainable()) {
    const Tensor& p = store.get(name);
    if (!p.has_grad()) continue;
    for (Real g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (const auto& name : store.trainable()) {
      Tensor& p = store.get(name);
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= s;
    }
  }
  return norm;
}

}  // namespace emoalign::numerics
