#include "ctxdit/rng.hpp"

#include <cmath>
#include <numbers>

namespace ctxdit {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t RngState::next_u64() {
  std::uint64_t key = mix64(seed_ ^ 0x5851f42d4c957f2dULL);
  return mix64(key + 0x9e3779b97f4a7c15ULL * position_++);
}

double RngState::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

std::uint64_t RngState::uniform_int(std::uint64_t n) {
  if (n == 0) return 0;
  return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
}

double RngState::normal() {
  double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
  double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

RngState RngState::fork(std::uint64_t stream) const {
  return RngState(mix64(seed_ ^ mix64(stream + 0x632be59bd9b4e019ULL)), 0);
}

Tensor randn(RngState& rng, Shape shape) {
  std::vector<Scalar> d(shape_numel(shape));
  for (auto& v : d) v = static_cast<Scalar>(rng.normal());
  return Tensor(std::move(shape), std::move(d));
}

Tensor rand_uniform(RngState& rng, Shape shape, Scalar lo, Scalar hi) {
  std::vector<Scalar> d(shape_numel(shape));
  for (auto& v : d) v = lo + (hi - lo) * static_cast<Scalar>(rng.uniform());
  return Tensor(std::move(shape), std::move(d));
}

}  // namespace ctxdit
