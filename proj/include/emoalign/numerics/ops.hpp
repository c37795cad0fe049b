#pragma once

#include <cstddef>
#include <vector>

#include "emoalign/numerics/tensor.hpp"

/// Differentiable operations. Matrices are row-major [rows, cols]; sequence
/// tensors are [positions, features] unless noted.
namespace emoalign::numerics::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
/// x[M,K] * w[K,N] + bias[N]; bias may be undefined.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, Real c);
/// Adds row vector b[N] (or [1,N]) to every row of a[M,N].
Tensor add_row(const Tensor& a, const Tensor& b);
Tensor gelu(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Real eps = 1e-5);

/// Multi-head scaled dot-product attention over already projected q, k, v
/// of shape [N, H*Dh].
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, std::size_t heads, bool causal);

Tensor log_softmax(const Tensor& logits);
Tensor softmax(const Tensor& logits);

/// Rows of table[V, D] selected by ids.
Tensor embedding(const Tensor& table, const std::vector<int>& ids);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor transpose(const Tensor& x);

/// input[C_in, L], weight[C_out, C_in, K], bias[C_out] -> [C_out, L'] with
/// L' = (L + 2*padding - K) / stride + 1.
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);
std::size_t conv1d_out_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding);

/// [L, D] -> [1, D].
Tensor mean_rows(const Tensor& x);

/// Row i of the result is base_i + delta_i where select[i] is set, and base_i
/// itself otherwise. Unselected rows are copied, never added to.
Tensor masked_add(const Tensor& base, const Tensor& delta, const std::vector<bool>& select);

/// Mean over rows of -sum_v p(v) log q(v). teacher_probs is treated as a
/// constant.
Tensor soft_cross_entropy(const Tensor& teacher_probs, const Tensor& student_log_probs);
/// Mean over rows of the teacher entropy.
Real mean_entropy(const Tensor& probs);
/// soft_cross_entropy minus the teacher entropy.
Tensor kl_divergence(const Tensor& teacher_probs, const Tensor& student_log_probs);

/// Mean over rows of -log_probs[i, targets[i]].
Tensor nll(const Tensor& log_probs, const std::vector<int>& targets);

Tensor sum(const Tensor& x);
/// sum_i weights[i] * terms[i] over scalar tensors.
Tensor weighted_sum(const std::vector<Tensor>& terms, const std::vector<Real>& weights);
Tensor add_scalar(const Tensor& x, Real c);

}  // namespace emoalign::numerics::ops
