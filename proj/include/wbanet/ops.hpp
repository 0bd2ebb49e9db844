#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wbanet/tensor.hpp"

namespace wbanet {

/// C = A·B for A (m,k), B (k,n).
Tensor matmul(const Tensor& a, const Tensor& b);
/// Transpose of a rank-2 tensor.
Tensor transpose(const Tensor& a);

enum class EwOp { kAdd, kMul };

/// Elementwise op with broadcasting. Operands are right-aligned; on every axis
/// the extents must agree or one of them must be 1. Gradients are summed over
/// broadcast axes.
Tensor ew(EwOp op, const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor broadcast_to(const Tensor& a, const Shape& shape);

/// Affine map over the last axis: X[..., c_in]·W[c_in, c_out] (+ b[c_out]).
/// A 1x1 convolution over an (H, W, C) map is exactly this op.
Tensor linear(const Tensor& x, const Tensor& w, const std::optional<Tensor>& b = std::nullopt);

enum class Activation { kGelu, kSigmoid };

Tensor activation(Activation kind, const Tensor& x);
/// tanh approximation: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715x^3))).
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

/// Row-wise softmax of a rank-2 tensor (max-subtracted).
Tensor softmax_rows(const Tensor& x);

/// Per-channel spatial mean: (H, W, C) -> (1, 1, C).
Tensor global_avg_pool(const Tensor& x);

Tensor concat(std::int64_t axis, const std::vector<Tensor>& parts);
/// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t begin, std::int64_t end);
Tensor reshape(const Tensor& x, const Shape& shape);

/// Sum of all entries, shape (1).
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Mean negative log-likelihood of integer class labels under row-wise softmax
/// of `logits` (n, k). Shape (1).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

}  // namespace wbanet
