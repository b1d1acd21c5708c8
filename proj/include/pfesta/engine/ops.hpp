#pragma once

#include <cstddef>
#include <vector>

#include "pfesta/engine/graph.hpp"

// Differentiable operations recorded on a BasicGraph. All inputs must belong to
// the same graph. Shape violations raise DimensionError naming both shapes.
namespace pfesta::ops {

template <typename T>
using V = BasicVar<T>;

// [m x k] * [k x n]
template <typename T>
V<T> matmul(V<T> a, V<T> b);

// Elementwise; `b` may also be a rank-1 tensor matching the last dim of `a`,
// in which case it is broadcast over rows.
template <typename T>
V<T> add(V<T> a, V<T> b);
template <typename T>
V<T> sub(V<T> a, V<T> b);
template <typename T>
V<T> mul(V<T> a, V<T> b);

template <typename T>
V<T> scale(V<T> a, T factor);

template <typename T>
V<T> softmax(V<T> x, std::size_t axis);

// Normalizes over the last dimension; eps must be >= 0.
template <typename T>
V<T> layer_norm(V<T> x, V<T> gamma, V<T> beta, T eps);

template <typename T>
V<T> gelu(V<T> x);
template <typename T>
V<T> relu(V<T> x);
template <typename T>
V<T> sigmoid(V<T> x);

template <typename T>
V<T> reshape(V<T> x, Shape shape);
template <typename T>
V<T> transpose(V<T> x);  // rank 2

template <typename T>
V<T> sum(V<T> x);  // -> [1]
template <typename T>
V<T> mean(V<T> x);  // -> [1]
template <typename T>
V<T> mean_rows(V<T> x);  // [n x d] -> [d]

template <typename T>
V<T> slice_rows(V<T> x, std::size_t begin, std::size_t end);
template <typename T>
V<T> slice_cols(V<T> x, std::size_t begin, std::size_t end);
template <typename T>
V<T> concat_rows(const std::vector<V<T>>& parts);
template <typename T>
V<T> concat_cols(const std::vector<V<T>>& parts);

// out[i] = x[index[i]] (row gather on a rank-2 tensor).
template <typename T>
V<T> gather_rows(V<T> x, const std::vector<std::size_t>& index);

// x [C x H x W], weight [O x C x k x k], bias [O] -> [O x H' x W'].
template <typename T>
V<T> conv2d(V<T> x, V<T> weight, V<T> bias, std::size_t stride, std::size_t pad);

// x [C x H x W] -> [C x H*f x W*f]
template <typename T>
V<T> upsample_nearest(V<T> x, std::size_t factor);

// Mean binary cross-entropy on logits. Targets are constants in [0,1].
template <typename T>
V<T> bce_with_logits(V<T> logits, const BasicTensor<T>& targets);

// 1 - (2*sum(p*t) + smooth) / (sum(p) + sum(t) + smooth), p = sigmoid(logits).
template <typename T>
V<T> dice_loss(V<T> logits, const BasicTensor<T>& targets, T smooth = T{1});

// Mean binary focal loss with focusing parameter gamma.
template <typename T>
V<T> focal_loss(V<T> logits, const BasicTensor<T>& targets, T gamma = T{2});

}  // namespace pfesta::ops
