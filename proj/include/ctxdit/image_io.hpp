#pragma once

#include <filesystem>
#include <string>

#include "ctxdit/tensor.hpp"

namespace ctxdit::image_io {

/// Binary PPM (P6, maxval 255) of an image[H, W, 3] in [0, 1]; values are
/// clamped and rounded to 8 bits.
std::string encode_ppm(const Tensor& image);
/// Inverse of encode_ppm up to quantization; accepts maxval up to 65535 and
/// header comments. Throws FormatError on malformed input.
Tensor decode_ppm(const std::string& bytes);

void write_ppm(const std::filesystem::path& path, const Tensor& image);
Tensor read_ppm(const std::filesystem::path& path);

}  // namespace ctxdit::image_io
