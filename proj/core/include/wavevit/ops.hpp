#pragma once

#include <optional>
#include <span>
#include <vector>

#include "wavevit/autograd.hpp"

// Differentiable operations over Var<T>.
//
// Layouts: spatial maps are (batch, channels, height, width). Token maps are
// (batch, 1, tokens, channels), so "rows" are tokens and the last axis holds
// channels. Multi-head tensors are (batch, heads, tokens, head_dim). Vectors
// (biases, norm affine terms) are (1, 1, 1, len).

namespace wavevit {

/// GELU tanh-approximation constants: 0.5·x·(1 + tanh(√(2/π)·(x + 0.044715·x³))).
inline constexpr double kGeluSqrt2OverPi = 0.7978845608028654;
inline constexpr double kGeluCubic = 0.044715;

/// Batched matrix product over the trailing two axes. `b` may have batch or
/// head extent 1, in which case it is shared across that axis. With
/// `transpose_b`, b is read as (.., cols2, cols) and the product is a·bᵀ.
template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b, bool transpose_b = false);

/// x·W + b over the last axis. W is (1, 1, in, out); bias is (1, 1, 1, out).
template <typename T>
Var<T> linear(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias = std::nullopt);

template <typename T>
Var<T> softmax_lastdim(const Var<T>& x);

/// Cross-correlation with zero padding. weight is (out_c, in_c, k, k).
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const std::optional<Var<T>>& bias,
              std::size_t stride, std::size_t padding);

/// Normalizes over the last axis (channels in token layout).
template <typename T>
Var<T> layer_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, double eps = 1e-5);

template <typename T>
Var<T> gelu(const Var<T>& x);
template <typename T>
Var<T> relu(const Var<T>& x);
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& x, double factor);

/// Scalar (1,1,1,1) sum of all elements.
template <typename T>
Var<T> sum(const Var<T>& x);
/// Scalar Σ x·w for a constant weight tensor of the same shape.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor4<T>& weights);
/// Mean over the row axis: (n, c, r, d) -> (n, c, 1, d).
template <typename T>
Var<T> mean_rows(const Var<T>& x);

template <typename T>
Var<T> avg_pool2d(const Var<T>& x, std::size_t kernel, std::size_t stride);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape4 shape);
/// (n, C, H, W) -> (n, 1, H·W, C).
template <typename T>
Var<T> to_tokens(const Var<T>& x);
/// (n, 1, H·W, C) -> (n, C, H, W).
template <typename T>
Var<T> from_tokens(const Var<T>& x, std::size_t height, std::size_t width);

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);
template <typename T>
std::vector<Var<T>> split(const Var<T>& x, std::span<const std::size_t> sizes, std::size_t axis);

/// (n, 1, r, heads·d) -> (n, heads, r, d); head j owns columns [j·d, (j+1)·d).
template <typename T>
Var<T> split_heads(const Var<T>& x, std::size_t heads);
/// Inverse of split_heads.
template <typename T>
Var<T> merge_heads(const Var<T>& x);

/// Mean softmax cross-entropy. logits are (n, 1, 1, K); one label per row.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, std::span<const int> labels);

}  // namespace wavevit
