#pragma once

#include <cstddef>
#include <span>

#include "vfd/numerics/tensor.hpp"

// Differentiable primitives. Each op evaluates eagerly and, when the tape is
// recording and some input requires a gradient, records its backward step.
namespace vfd::num {

// [m x k] . [k x n] -> [m x n]
Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
// [m x k] . [n x k]^T -> [m x n]
Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& a);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
// Adds a length-n vector to every row of an [m x n] matrix.
Tensor add_row(Tape& tape, const Tensor& a, const Tensor& row);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor log(Tape& tape, const Tensor& a);
Tensor gelu(Tape& tape, const Tensor& a);

Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);
// Mean of same-shaped scalars; fixed left-to-right summation order.
Tensor mean_of(Tape& tape, std::span<const Tensor> scalars);

// Row-wise softmax with per-row max subtraction.
Tensor softmax_rows(Tape& tape, const Tensor& x);
// -log softmax(logits)[target] in log-sum-exp form; logits is a vector.
Tensor cross_entropy(Tape& tape, const Tensor& logits, std::size_t target);

inline constexpr double kLayerNormEpsilon = 1e-5;
Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double epsilon = kLayerNormEpsilon);

Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(Tape& tape, const Tensor& x, std::size_t begin, std::size_t count);
Tensor concat_rows(Tape& tape, std::span<const Tensor> parts);
Tensor concat_cols(Tape& tape, std::span<const Tensor> parts);
// Concatenates scalars and vectors into one vector.
Tensor concat(Tape& tape, std::span<const Tensor> parts);
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

// Cuts a [C x H x W] image into non-overlapping patch_h x patch_w patches in
// raster order; row f holds patch f flattened as (channel, row, col).
Tensor patchify(Tape& tape, const Tensor& image, std::size_t patch_h, std::size_t patch_w);

}  // namespace vfd::num
