#pragma once

#include <cstdint>
#include <vector>

#include "ctxdit/tensor.hpp"

namespace ctxdit::rope {

/// Rotary embedding over factorized (frame, y, x) positions with a temporal
/// gap of `beta` frames between reference (g=0) and generated (g=1) tokens.
struct RopeConfig {
  std::size_t head_dim = 8;
  std::size_t temporal_dims = 4;
  std::size_t y_dims = 2;
  std::size_t x_dims = 2;
  double theta_base = 10000.0;
  int beta = 4;
  /// Also rotate V (off by default; see README).
  bool rotate_values = false;

  /// Default split (head_dim/2, head_dim/4, head_dim/4), rounded to even sizes.
  static RopeConfig for_head_dim(std::size_t head_dim, int beta = 4);
  /// Throws ConfigError.
  void validate() const;
};

struct TokenPosition {
  int frame_index = 0;
  int y = 0;
  int x = 0;
  /// 0 for reference tokens, 1 for generated-video tokens.
  int group = 0;

  bool operator==(const TokenPosition&) const = default;
};

int effective_temporal_index(const TokenPosition& pos, const RopeConfig& cfg);

/// angle_k = index * theta_base^(-2k / n_dims), k in [0, n_dims/2).
std::vector<double> rotation_angles(double index, std::size_t n_dims, double theta_base);

/// Per-token cos/sin of every rotation pair; shared by all heads.
class RotaryTable {
 public:
  RotaryTable(const std::vector<TokenPosition>& positions, const RopeConfig& cfg);

  std::size_t tokens() const { return tokens_; }
  std::size_t pairs() const { return pairs_; }
  const std::vector<Scalar>& cos() const { return cos_; }
  const std::vector<Scalar>& sin() const { return sin_; }

 private:
  std::size_t tokens_;
  std::size_t pairs_;
  std::vector<Scalar> cos_;
  std::vector<Scalar> sin_;
};

/// Rotates adjacent pairs (2j, 2j+1) inside each axis segment of the head dim:
/// temporal dims by the effective temporal index, then y dims, then x dims.
/// Accepts [tokens, heads, head_dim] or [heads, tokens, head_dim] via `heads_first`.
Tensor apply_rotary(const Tensor& qk, const std::vector<TokenPosition>& positions, const RopeConfig& cfg);
Tensor apply_rotary(const Tensor& qk, const RotaryTable& table, bool heads_first = false);

}  // namespace ctxdit::rope
