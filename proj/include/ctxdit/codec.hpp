#pragma once

#include <vector>

#include "ctxdit/tensor.hpp"

namespace ctxdit::codec {

/// Orthonormal DCT-II matrix D[u][x] of size p x p; coefficients are D X D^T.
const std::vector<double>& dct_matrix(std::size_t p);

/// Latent width of one token: channels * p * p.
inline std::size_t latent_dim(std::size_t channels, std::size_t p) { return channels * p * p; }

/// Tokens per frame for an H x W image.
std::size_t tokens_per_frame(std::size_t H, std::size_t W, std::size_t p);

/// x[H, W, C] or x[F, H, W, C] -> [F * (H/p) * (W/p), C * p * p]. Tokens run
/// frame-major, then patch row, then patch column; each token holds the
/// per-channel p x p DCT coefficients in (channel, u, v) order.
/// Indivisible spatial dims are a ShapeError.
Tensor encode_latent(const Tensor& x, std::size_t p);

/// Exact inverse of encode_latent; `shape` is the pixel shape ([H, W, C] or
/// [F, H, W, C]).
Tensor decode_latent(const Tensor& z, const Shape& shape, std::size_t p);

/// [0, 1] pixels to the model's [-1, 1] range and back.
Tensor to_model_range(const Tensor& pixels);
Tensor from_model_range(const Tensor& x);

}  // namespace ctxdit::codec
