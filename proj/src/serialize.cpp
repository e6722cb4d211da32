#include "ctxdit/serialize.hpp"

#include <bit>
#include <fstream>
#include <iterator>
#include <sstream>

namespace ctxdit {

namespace {

template <class U>
void put_le(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(buf, sizeof(U));
}

template <class U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError("unexpected end of tensor stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

using ScalarBits = std::conditional_t<sizeof(Scalar) == 8, std::uint64_t, std::uint32_t>;

constexpr std::uint32_t kMaxRank = 8;

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { put_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { put_le(os, v); }
std::uint32_t read_u32(std::istream& is) { return get_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return get_le<std::uint64_t>(is); }

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) write_u32(os, static_cast<std::uint32_t>(d));
  for (auto v : t.data()) put_le(os, std::bit_cast<ScalarBits>(v));
}

Tensor read_tensor(std::istream& is) {
  auto rank = read_u32(is);
  if (rank == 0 || rank > kMaxRank) throw FormatError("tensor rank " + std::to_string(rank) + " out of range");
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = read_u32(is);
    if (d == 0 || d > (1u << 28)) throw FormatError("tensor dim out of range");
    n *= d;
    if (n > (std::size_t{1} << 32)) throw FormatError("tensor too large");
  }
  std::vector<Scalar> data(n);
  for (auto& v : data) v = std::bit_cast<Scalar>(get_le<ScalarBits>(is));
  return Tensor(std::move(shape), std::move(data));
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for " + path);
}

}  // namespace ctxdit
