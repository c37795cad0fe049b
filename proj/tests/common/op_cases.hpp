#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "emoalign/numerics/ops.hpp"
#include "emoalign/numerics/param_store.hpp"
#include "emoalign/numerics/rng.hpp"

namespace emoalign::testing {

using numerics::ParameterStore;
using numerics::Real;
using numerics::Shape;
using numerics::Tensor;
namespace ops = numerics::ops;

/// One differentiable op wrapped as a scalar function of trainable inputs.
struct OpCase {
  std::string name;
  std::shared_ptr<ParameterStore> store;
  std::function<Tensor()> f;
};

inline Tensor random_tensor(numerics::Rng& rng, Shape shape, Real scale = 1.0, Real shift = 0.0) {
  std::vector<Real> v(numerics::shape_numel(shape));
  for (auto& x : v) x = shift + scale * rng.normal();
  return Tensor::from(std::move(shape), std::move(v));
}

/// Random values bounded away from zero, for kinks at the origin.
inline Tensor away_from_zero(numerics::Rng& rng, Shape shape) {
  std::vector<Real> v(numerics::shape_numel(shape));
  for (auto& x : v) {
    const Real mag = 0.2 + rng.uniform();
    x = rng.uniform() < 0.5 ? -mag : mag;
  }
  return Tensor::from(std::move(shape), std::move(v));
}

inline Tensor probe(const Tensor& out, const Tensor& weights) { return ops::sum(ops::mul(out, weights)); }

inline std::vector<OpCase> differentiable_op_cases(std::uint64_t seed = 7) {
  numerics::Rng rng(seed);
  std::vector<OpCase> cases;
  auto add_case = [&](const std::string& name, std::vector<std::pair<std::string, Tensor>> inputs,
                      std::function<Tensor(ParameterStore&)> body) {
    auto store = std::make_shared<ParameterStore>();
    for (auto& [n, t] : inputs) store->add(n, std::move(t));
    store->set_trainable([](const std::string&) { return true; });
    cases.push_back({name, store, [store, body] { return body(*store); }});
  };

  {
    auto w = random_tensor(rng, {3, 5});
    add_case("matmul", {{"a", random_tensor(rng, {3, 4})}, {"b", random_tensor(rng, {4, 5})}},
             [w](ParameterStore& s) { return probe(ops::matmul(s.get("a"), s.get("b")), w); });
  }
  {
    auto w = random_tensor(rng, {3, 5});
    add_case("linear",
             {{"x", random_tensor(rng, {3, 4})}, {"w", random_tensor(rng, {4, 5})}, {"b", random_tensor(rng, {5})}},
             [w](ParameterStore& s) { return probe(ops::linear(s.get("x"), s.get("w"), s.get("b")), w); });
  }
  for (const char* which : {"add", "sub", "mul"}) {
    auto w = random_tensor(rng, {2, 3});
    std::string op = which;
    add_case(op, {{"a", random_tensor(rng, {2, 3})}, {"b", random_tensor(rng, {2, 3})}},
             [w, op](ParameterStore& s) {
               const auto& a = s.get("a");
               const auto& b = s.get("b");
               return probe(op == "add" ? ops::add(a, b) : op == "sub" ? ops::sub(a, b) : ops::mul(a, b), w);
             });
  }
  {
    auto w = random_tensor(rng, {2, 3});
    add_case("scale", {{"a", random_tensor(rng, {2, 3})}},
             [w](ParameterStore& s) { return probe(ops::scale(s.get("a"), -1.7), w); });
  }
  {
    auto w = random_tensor(rng, {2, 3});
    add_case("add_scalar", {{"a", random_tensor(rng, {2, 3})}},
             [w](ParameterStore& s) { return probe(ops::add_scalar(s.get("a"), 0.3), w); });
  }
  {
    auto w = random_tensor(rng, {4, 3});
    add_case("add_row", {{"a", random_tensor(rng, {4, 3})}, {"b", random_tensor(rng, {3})}},
             [w](ParameterStore& s) { return probe(ops::add_row(s.get("a"), s.get("b")), w); });
  }
  {
    auto w = random_tensor(rng, {3, 4});
    add_case("gelu", {{"x", random_tensor(rng, {3, 4}, 1.5)}},
             [w](ParameterStore& s) { return probe(ops::gelu(s.get("x")), w); });
  }
  {
    auto w = random_tensor(rng, {3, 4});
    add_case("relu", {{"x", away_from_zero(rng, {3, 4})}},
             [w](ParameterStore& s) { return probe(ops::relu(s.get("x")), w); });
  }
  {
    auto w = random_tensor(rng, {3, 6});
    add_case("layer_norm",
             {{"x", random_tensor(rng, {3, 6}, 2.0, 0.5)},
              {"g", random_tensor(rng, {6}, 0.3, 1.0)},
              {"b", random_tensor(rng, {6}, 0.3)}},
             [w](ParameterStore& s) { return probe(ops::layer_norm(s.get("x"), s.get("g"), s.get("b")), w); });
  }
  for (bool causal : {true, false}) {
    auto w = random_tensor(rng, {5, 8});
    add_case(causal ? "attention_causal" : "attention_bidirectional",
             {{"q", random_tensor(rng, {5, 8})}, {"k", random_tensor(rng, {5, 8})}, {"v", random_tensor(rng, {5, 8})}},
             [w, causal](ParameterStore& s) {
               return probe(ops::attention(s.get("q"), s.get("k"), s.get("v"), 2, causal), w);
             });
  }
  {
    auto w = random_tensor(rng, {3, 5});
    add_case("log_softmax", {{"x", random_tensor(rng, {3, 5}, 2.0)}},
             [w](ParameterStore& s) { return probe(ops::log_softmax(s.get("x")), w); });
  }
  {
    auto w = random_tensor(rng, {3, 5});
    add_case("softmax", {{"x", random_tensor(rng, {3, 5}, 2.0)}},
             [w](ParameterStore& s) { return probe(ops::softmax(s.get("x")), w); });
  }
  {
    auto w = random_tensor(rng, {4, 3});
    add_case("embedding", {{"table", random_tensor(rng, {6, 3})}},
             [w](ParameterStore& s) { return probe(ops::embedding(s.get("table"), {2, 0, 2, 5}), w); });
  }
  {
    auto w = random_tensor(rng, {5, 3});
    add_case("concat_rows", {{"a", random_tensor(rng, {2, 3})}, {"b", random_tensor(rng, {3, 3})}},
             [w](ParameterStore& s) { return probe(ops::concat_rows({s.get("a"), s.get("b")}), w); });
  }
  {
    auto w = random_tensor(rng, {2, 3});
    add_case("slice_rows", {{"a", random_tensor(rng, {5, 3})}},
             [w](ParameterStore& s) { return probe(ops::slice_rows(s.get("a"), 1, 3), w); });
  }
  {
    auto w = random_tensor(rng, {4, 2});
    add_case("transpose", {{"a", random_tensor(rng, {2, 4})}},
             [w](ParameterStore& s) { return probe(ops::transpose(s.get("a")), w); });
  }
  {
    auto w = random_tensor(rng, {4, 4});
    add_case("conv1d_k5_s2_p2",
             {{"x", random_tensor(rng, {3, 7})}, {"w", random_tensor(rng, {4, 3, 5})}, {"b", random_tensor(rng, {4})}},
             [w](ParameterStore& s) { return probe(ops::conv1d(s.get("x"), s.get("w"), s.get("b"), 2, 2), w); });
  }
  {
    auto w = random_tensor(rng, {2, 6});
    add_case("conv1d_k3_s1_p1",
             {{"x", random_tensor(rng, {3, 6})}, {"w", random_tensor(rng, {2, 3, 3})}, {"b", random_tensor(rng, {2})}},
             [w](ParameterStore& s) { return probe(ops::conv1d(s.get("x"), s.get("w"), s.get("b"), 1, 1), w); });
  }
  {
    auto w = random_tensor(rng, {1, 4});
    add_case("mean_rows", {{"x", random_tensor(rng, {3, 4})}},
             [w](ParameterStore& s) { return probe(ops::mean_rows(s.get("x")), w); });
  }
  {
    auto w = random_tensor(rng, {4, 3});
    add_case("masked_add", {{"base", random_tensor(rng, {4, 3})}, {"delta", random_tensor(rng, {4, 3})}},
             [w](ParameterStore& s) {
               return probe(ops::masked_add(s.get("base"), s.get("delta"), {false, true, true, false}), w);
             });
  }
  {
    auto p = ops::softmax(random_tensor(rng, {3, 4}));
    add_case("soft_cross_entropy", {{"x", random_tensor(rng, {3, 4})}},
             [p](ParameterStore& s) { return ops::soft_cross_entropy(p, ops::log_softmax(s.get("x"))); });
  }
  {
    auto p = ops::softmax(random_tensor(rng, {3, 4}));
    add_case("kl_divergence", {{"x", random_tensor(rng, {3, 4})}},
             [p](ParameterStore& s) { return ops::kl_divergence(p, ops::log_softmax(s.get("x"))); });
  }
  add_case("nll", {{"x", random_tensor(rng, {3, 4})}},
           [](ParameterStore& s) { return ops::nll(ops::log_softmax(s.get("x")), {3, 0, 1}); });
  {
    auto w = random_tensor(rng, {2, 2});
    add_case("sum", {{"x", random_tensor(rng, {2, 2})}},
             [w](ParameterStore& s) { return ops::sum(ops::mul(ops::mul(s.get("x"), s.get("x")), w)); });
  }
  add_case("weighted_sum", {{"a", random_tensor(rng, {1})}, {"b", random_tensor(rng, {1})}},
           [](ParameterStore& s) {
             return ops::weighted_sum({ops::mul(s.get("a"), s.get("a")), ops::mul(s.get("a"), s.get("b"))},
                                      {0.7, -1.3});
           });
  return cases;
}

}  // namespace emoalign::testing
