#pragma once

#include "ctxdit/sprites.hpp"
#include "ctxdit/tensor.hpp"

namespace ctxdit::eval {

/// Estimates the SpriteSpec shown in a frame[H, W, 3] with values in [0, 1].
///
/// The subject is the mask region (coverage >= 0.5) when `subject_mask` is
/// defined, otherwise the largest 8-connected component of saturated pixels.
/// Colors are read from illumination-free chromaticity, the accessory from
/// where its pixels sit relative to the body, and the shape from template
/// overlap. Throws ExtractionError when no subject is found.
sprites::SpriteSpec extract_attributes(const Tensor& frame, const Tensor& subject_mask = Tensor());

}  // namespace ctxdit::eval
