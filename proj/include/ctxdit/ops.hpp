#pragma once

#include <cstdint>
#include <vector>

#include "ctxdit/tensor.hpp"

namespace ctxdit {

// Elementwise, right-aligned broadcasting (a dim broadcasts when it is 1 or absent).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws NumericError when any divisor element is exactly zero.
Tensor div(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, Scalar b);
Tensor scale(const Tensor& a, Scalar s);
Tensor div(const Tensor& a, Scalar b);
Tensor neg(const Tensor& a);

Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
/// Throws NumericError for non-positive inputs.
Tensor log(const Tensor& a);
Tensor tanh(const Tensor& a);
/// tanh approximation of GELU.
Tensor gelu(const Tensor& a);
Tensor silu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Mean squared difference, a scalar.
Tensor mse(const Tensor& a, const Tensor& b);

/// a[..., m, k] x b[..., k, n]; leading batch dims broadcast.
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two dims.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);

/// Softmax over the last dim. -inf entries get weight exactly 0; a row that is
/// entirely -inf raises MaskError.
Tensor softmax_lastdim(const Tensor& x);
/// Per-row normalization over the last dim, no affine.
Tensor layernorm(const Tensor& x, Scalar eps = Scalar(1e-5));
Tensor layernorm(const Tensor& x, const Tensor& gain, const Tensor& bias, Scalar eps = Scalar(1e-5));

/// Rows [begin, end) along dim 0.
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
/// Columns [begin, end) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
/// [1, k] -> [n, k].
Tensor repeat_rows(const Tensor& a, std::size_t n);

/// [n, heads*hd] -> [heads, n, hd].
Tensor split_heads(const Tensor& x, std::size_t heads);
/// [heads, n, hd] -> [n, heads*hd].
Tensor merge_heads(const Tensor& x);

/// Sets entries of x[..., nq, nk] to -inf where `allowed[q*nk+k]` is 0. The
/// result may hold -inf and is only meant to feed softmax_lastdim.
Tensor mask_fill(const Tensor& x, const std::vector<std::uint8_t>& allowed, std::size_t nq, std::size_t nk);

/// Rows of `table` selected by `ids`.
Tensor embedding(const Tensor& table, const std::vector<std::size_t>& ids);

/// Patch extraction for convolution: x[H, W, C] -> [oh*ow, k*k*C], zero padding.
Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t stride, std::size_t pad);

}  // namespace ctxdit
