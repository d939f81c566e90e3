#pragma once

#include <span>
#include <vector>

#include "avu/tensor.hpp"

// Differentiable primitives. Shape rules are checked eagerly; a violation
// throws ShapeError naming the primitive and the offending shapes.
namespace avu::ops {

// [..., n, k] x [k, m] -> [..., n, m], or batched [B..., n, k] x [B..., k, m].
Tensor matmul(const Tensor& a, const Tensor& b);

// Elementwise with right-aligned numpy-style broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double factor);

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
// Half-open range [begin, end) along `axis`.
Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
             std::size_t end);
Tensor reshape(const Tensor& a, Shape shape);
// Swaps the last two axes.
Tensor transpose(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
// Numerically stabilised; entries equal to -inf receive probability 0.
Tensor softmax_lastdim(const Tensor& a);

// Mean over one axis; the axis is removed from the result.
Tensor mean_axis(const Tensor& a, std::size_t axis);
Tensor sum(const Tensor& a);

// Mean token cross-entropy. logits [N, V], one target per row. Logits may
// contain -inf (excluded vocabulary entries) as long as the target is finite.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets);
// Mean binary cross-entropy on logits; targets in [0, 1], same numel.
Tensor binary_cross_entropy(const Tensor& logits,
                            std::span<const double> targets);

// table [V, C], ids in [0, V) -> [ids.size(), C].
Tensor embed_lookup(const Tensor& table, std::span<const int> ids);

// Normalises over the last axis, then applies per-channel gamma and beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

// x [B, Cin, H, W], weight [Cout, Cin, k, k] (k odd), bias [Cout];
// stride 1 with zero "same" padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias);
// Nearest-neighbour x2 on the last two axes.
Tensor upsample_nearest2x(const Tensor& x);

// Plain affine map on the last axis: x [..., in] * w [in, out] + b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

}  // namespace avu::ops
