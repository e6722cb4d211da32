#include "ctxdit/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "ctxdit/serialize.hpp"

namespace ctxdit::image_io {

std::string encode_ppm(const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw ShapeError("encode_ppm: expected [H, W, 3], got " + shape_str(image.shape()));
  std::string out = "P6\n" + std::to_string(image.dim(1)) + " " + std::to_string(image.dim(0)) + "\n255\n";
  out.reserve(out.size() + image.numel());
  for (auto v : image.data()) {
    double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255))));
  }
  return out;
}

namespace {

std::size_t header_field(const std::string& b, std::size_t& pos) {
  while (pos < b.size()) {
    if (b[pos] == '#') {
      while (pos < b.size() && b[pos] != '\n') ++pos;
    } else if (std::isspace(static_cast<unsigned char>(b[pos]))) {
      ++pos;
    } else {
      break;
    }
  }
  std::size_t start = pos, v = 0;
  while (pos < b.size() && std::isdigit(static_cast<unsigned char>(b[pos]))) {
    v = v * 10 + static_cast<std::size_t>(b[pos] - '0');
    if (v > (1u << 24)) throw FormatError("ppm: header value too large");
    ++pos;
  }
  if (pos == start) throw FormatError("ppm: malformed header");
  return v;
}

}  // namespace

Tensor decode_ppm(const std::string& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("ppm: not a binary P6 file");
  std::size_t pos = 2;
  auto W = header_field(bytes, pos), H = header_field(bytes, pos), maxval = header_field(bytes, pos);
  if (W == 0 || H == 0 || maxval == 0 || maxval > 65535) throw FormatError("ppm: bad dimensions or maxval");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
    throw FormatError("ppm: malformed header");
  ++pos;
  const std::size_t bpp = maxval > 255 ? 2 : 1, n = H * W * 3;
  if (bytes.size() - pos != n * bpp) throw FormatError("ppm: pixel data size does not match the header");
  std::vector<Scalar> d(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t v = static_cast<unsigned char>(bytes[pos + i * bpp]);
    if (bpp == 2) v = v * 256 + static_cast<unsigned char>(bytes[pos + i * 2 + 1]);
    if (v > maxval) throw FormatError("ppm: sample exceeds maxval");
    d[i] = static_cast<Scalar>(static_cast<double>(v) / static_cast<double>(maxval));
  }
  return Tensor({H, W, 3}, std::move(d));
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) { write_file(path.string(), encode_ppm(image)); }

Tensor read_ppm(const std::filesystem::path& path) {
  try {
    return decode_ppm(read_file(path.string()));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace ctxdit::image_io
