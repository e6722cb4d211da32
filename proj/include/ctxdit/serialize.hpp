#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "ctxdit/tensor.hpp"

namespace ctxdit {

// Binary layout: rank (u32 LE), dims (u32 LE each), then the values as
// little-endian IEEE floats of width sizeof(Scalar).
void write_tensor(std::ostream& os, const Tensor& t);
/// Throws FormatError on truncated or malformed input.
Tensor read_tensor(std::istream& is);

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace ctxdit
