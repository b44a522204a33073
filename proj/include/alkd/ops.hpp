#pragma once

#include <cstdint>
#include <span>

#include "alkd/rng.hpp"
#include "alkd/tensor.hpp"

// Differentiable primitives. Every op takes the tape it records onto; ops on
// inputs that do not require gradients record nothing.
namespace alkd::ops {

/// Constant from the tanh approximation of GELU.
inline constexpr double kGeluCubic = 0.044715;

// Linear algebra
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);     // [m,k]·[k,n]
Tensor matmul_bt(Tape& tape, const Tensor& a, const Tensor& b);  // [m,k]·[n,k]ᵀ
Tensor bmm(Tape& tape, const Tensor& a, const Tensor& b);        // [g,m,k]·[g,k,n]
Tensor bmm_bt(Tape& tape, const Tensor& a, const Tensor& b);     // [g,m,k]·[g,n,k]ᵀ

// Elementwise
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor add_bias(Tape& tape, const Tensor& x, const Tensor& bias);  // bias broadcast over last axis
Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor gelu(Tape& tape, const Tensor& x);
Tensor dropout(Tape& tape, const Tensor& x, double rate, Rng& rng);

// Reductions
Tensor sum(Tape& tape, const Tensor& x);
Tensor mean(Tape& tape, const Tensor& x);

// Normalization / probabilities
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);
Tensor log_softmax(Tape& tape, const Tensor& x);

/// Softmax over the last axis of attention scores [batch*heads, L, L].
/// Keys with key_valid[b*L + j] == 0 receive probability exactly 0
/// (equivalent to a -inf additive logit).
Tensor masked_softmax(Tape& tape, const Tensor& scores, std::span<const std::uint8_t> key_valid, std::size_t heads);

/// Mean of -logp[i, targets[i]] over rows with mask[i] != 0. logp is [n, V].
Tensor masked_nll(Tape& tape, const Tensor& logp, std::span<const std::int32_t> targets,
                  std::span<const std::uint8_t> mask);

// Indexing / layout
Tensor embedding(Tape& tape, const Tensor& table, std::span<const std::int32_t> ids);  // -> [n, d]
Tensor gather_rows(Tape& tape, const Tensor& x, std::span<const std::size_t> rows);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);
Tensor swap_axes_12(Tape& tape, const Tensor& x);  // [a,b,c,d] -> [a,c,b,d]

}  // namespace alkd::ops
