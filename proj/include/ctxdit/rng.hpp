#pragma once

#include <cstdint>

#include "ctxdit/tensor.hpp"

namespace ctxdit {

/// Counter-based generator: draw number `position` of stream `seed` is a pure
/// hash of the pair, so (seed, position) fully determines every later draw.
class RngState {
 public:
  explicit RngState(std::uint64_t seed = 0, std::uint64_t position = 0) : seed_(seed), position_(position) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t position() const { return position_; }

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n);
  /// Standard normal (Box-Muller, two counter draws per value).
  double normal();

  /// Independent child stream keyed by `stream`.
  RngState fork(std::uint64_t stream) const;

  bool operator==(const RngState&) const = default;

 private:
  std::uint64_t seed_;
  std::uint64_t position_;
};

std::uint64_t mix64(std::uint64_t x);

Tensor randn(RngState& rng, Shape shape);
Tensor rand_uniform(RngState& rng, Shape shape, Scalar lo, Scalar hi);

}  // namespace ctxdit
