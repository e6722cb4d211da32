#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ctxdit/rng.hpp"
#include "ctxdit/rope.hpp"
#include "ctxdit/tensor.hpp"

namespace ctxdit::attn {

struct MultiHeadConfig {
  std::size_t model_dim = 8;
  std::size_t n_heads = 2;

  std::size_t head_dim() const { return model_dim / n_heads; }
  void validate() const;
};

/// Row-vector convention: y = x · W + b with W of shape [in, out].
struct AttentionParams {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;

  std::vector<NamedTensor> named(const std::string& prefix) const;
};

/// Projections ~ N(0, std²), biases zero. `zero_output` zeroes Wo so the
/// residual branch starts as an exact no-op.
AttentionParams init_attention_params(const MultiHeadConfig& cfg, RngState& rng, double std = 0.02,
                                      bool zero_output = false);

/// Dense allow/block matrix over (query, key).
struct AttentionMask {
  std::size_t n_q = 0;
  std::size_t n_k = 0;
  std::vector<std::uint8_t> allowed;

  bool allows(std::size_t q, std::size_t k) const { return allowed[q * n_k + k] != 0; }
  std::size_t blocked_count() const;
  /// Throws MaskError if some query row blocks every key.
  void validate() const;
};

/// Reference tokens occupy [0, n_ref), video tokens [n_ref, n_ref + n_vid).
struct TokenSplit {
  std::size_t n_ref = 0;
  std::size_t n_vid = 0;

  std::size_t total() const { return n_ref + n_vid; }
  /// Throws ConfigError when either segment is empty.
  void validate() const;
};

/// Blocks reference queries from video keys; everything else is allowed.
AttentionMask build_ref_video_mask(const TokenSplit& split);

/// Rotary tables for the query and key sides of one attention call.
struct Rotary {
  rope::RotaryTable q;
  rope::RotaryTable k;
  bool rotate_values = false;

  static Rotary make(const std::vector<rope::TokenPosition>& q_positions,
                     const std::vector<rope::TokenPosition>& k_positions, const rope::RopeConfig& cfg);
};

/// Scaled dot-product attention with per-head scale 1/sqrt(head_dim), blocked
/// entries at -inf before softmax, output projected by Wo. No residual.
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                            const MultiHeadConfig& cfg, const AttentionMask* mask = nullptr,
                            const Rotary* rotary = nullptr);

/// Softmax weights [heads, n_q, n_k] of the same computation.
Tensor attention_weights(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                         const MultiHeadConfig& cfg, const AttentionMask* mask = nullptr,
                         const Rotary* rotary = nullptr);

// The block-level ops below read attention inputs from `h` (typically a
// normalized copy of `x`) and add the branch output onto the residual `x`.

/// x + attn(h) with the reference/video mask (unless `use_mask` is false) and
/// rotary applied to Q and K.
Tensor masked_self_attention(const Tensor& x, const Tensor& h, const TokenSplit& split, const AttentionParams& p,
                             const MultiHeadConfig& cfg, const Rotary* rotary, bool use_mask = true);
Tensor masked_self_attention(const Tensor& x, const TokenSplit& split, const AttentionParams& p,
                             const MultiHeadConfig& cfg, const Rotary* rotary, bool use_mask = true);

/// x + attn(Q = h, K = V = memory), unmasked. Empty memory is a ConfigError.
Tensor cross_attention(const Tensor& x, const Tensor& h, const Tensor& memory, const AttentionParams& p,
                       const MultiHeadConfig& cfg);
Tensor cross_attention(const Tensor& x, const Tensor& memory, const AttentionParams& p,
                       const MultiHeadConfig& cfg);

/// Video rows become vid + attn(Q = h_vid, K = V = h_ref); reference rows are
/// copied through unchanged. `rotary`, when given, must pair video query
/// positions with reference key positions.
Tensor emphasize_attention(const Tensor& x, const Tensor& h, const TokenSplit& split, const AttentionParams& p,
                           const MultiHeadConfig& cfg, const Rotary* rotary = nullptr);
Tensor emphasize_attention(const Tensor& x, const TokenSplit& split, const AttentionParams& p,
                           const MultiHeadConfig& cfg, const Rotary* rotary = nullptr);

}  // namespace ctxdit::attn
