#pragma once

#include <cmath>
#include <vector>

#include "ctxdit/ops.hpp"
#include "ctxdit/rng.hpp"
#include "ctxdit/tensor.hpp"

namespace ctxdit::testing {

inline Tensor random_leaf(RngState& rng, Shape shape, double scale = 1.0) {
  auto t = randn(rng, std::move(shape));
  std::vector<Scalar> d(t.data().begin(), t.data().end());
  for (auto& v : d) v *= static_cast<Scalar>(scale);
  return Tensor(t.shape(), std::move(d), true);
}

inline double max_abs_diff(std::span<const Scalar> a, std::span<const Scalar> b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a[i] - b[i])));
  return m;
}

inline bool bit_equal(std::span<const Scalar> a, std::span<const Scalar> b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

/// Random linear read-out so vector-valued ops can be gradient-checked as scalars.
inline Tensor weighted_sum(const Tensor& y, std::uint64_t seed) {
  RngState rng(seed);
  return sum(mul(y, randn(rng, y.shape())));
}

}  // namespace ctxdit::testing
