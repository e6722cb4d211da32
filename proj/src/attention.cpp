#include "ctxdit/attention.hpp"

#include <cmath>

#include "ctxdit/ops.hpp"

namespace ctxdit::attn {

void MultiHeadConfig::validate() const {
  if (model_dim == 0 || n_heads == 0 || model_dim % n_heads != 0)
    throw ConfigError("attention: model_dim " + std::to_string(model_dim) + " not divisible by n_heads " +
                      std::to_string(n_heads));
}

std::vector<NamedTensor> AttentionParams::named(const std::string& prefix) const {
  return {{prefix + ".wq", wq}, {prefix + ".bq", bq}, {prefix + ".wk", wk}, {prefix + ".bk", bk},
          {prefix + ".wv", wv}, {prefix + ".bv", bv}, {prefix + ".wo", wo}, {prefix + ".bo", bo}};
}

AttentionParams init_attention_params(const MultiHeadConfig& cfg, RngState& rng, double std, bool zero_output) {
  cfg.validate();
  std::size_t d = cfg.model_dim;
  auto mat = [&](bool zero) {
    Tensor t = zero ? Tensor::zeros({d, d}) : scale(randn(rng, {d, d}), static_cast<Scalar>(std));
    return t.set_requires_grad(true);
  };
  auto vec = [&] { return Tensor::zeros({d}, true); };
  AttentionParams p;
  p.wq = mat(false);
  p.bq = vec();
  p.wk = mat(false);
  p.bk = vec();
  p.wv = mat(false);
  p.bv = vec();
  p.wo = mat(zero_output);
  p.bo = vec();
  return p;
}

std::size_t AttentionMask::blocked_count() const {
  std::size_t n = 0;
  for (auto a : allowed) n += a ? 0 : 1;
  return n;
}

void AttentionMask::validate() const {
  if (allowed.size() != n_q * n_k) throw MaskError("attention mask has inconsistent size");
  for (std::size_t q = 0; q < n_q; ++q) {
    bool any = false;
    for (std::size_t k = 0; k < n_k && !any; ++k) any = allows(q, k);
    if (!any) throw MaskError("attention mask blocks every key for query " + std::to_string(q));
  }
}

void TokenSplit::validate() const {
  if (n_ref == 0 || n_vid == 0)
    throw ConfigError("token split needs non-empty reference and video segments (got " + std::to_string(n_ref) +
                      ", " + std::to_string(n_vid) + ")");
}

AttentionMask build_ref_video_mask(const TokenSplit& split) {
  split.validate();
  std::size_t n = split.total();
  AttentionMask m{n, n, std::vector<std::uint8_t>(n * n, 1)};
  for (std::size_t q = 0; q < split.n_ref; ++q)
    for (std::size_t k = split.n_ref; k < n; ++k) m.allowed[q * n + k] = 0;
  return m;
}

Rotary Rotary::make(const std::vector<rope::TokenPosition>& q_positions,
                    const std::vector<rope::TokenPosition>& k_positions, const rope::RopeConfig& cfg) {
  return Rotary{rope::RotaryTable(q_positions, cfg), rope::RotaryTable(k_positions, cfg), cfg.rotate_values};
}

namespace {

struct Projected {
  Tensor q, k, v;  // [heads, n, hd]
};

Projected project(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p, const MultiHeadConfig& cfg,
                  const Rotary* rotary) {
  cfg.validate();
  if (q_in.rank() != 2 || kv_in.rank() != 2 || q_in.dim(1) != cfg.model_dim || kv_in.dim(1) != cfg.model_dim)
    throw ShapeError("attention: inputs must be [tokens, " + std::to_string(cfg.model_dim) + "], got " +
                     shape_str(q_in.shape()) + " and " + shape_str(kv_in.shape()));
  std::size_t h = cfg.n_heads;
  Projected out;
  out.q = split_heads(add(matmul(q_in, p.wq), p.bq), h);
  out.k = split_heads(add(matmul(kv_in, p.wk), p.bk), h);
  out.v = split_heads(add(matmul(kv_in, p.wv), p.bv), h);
  if (rotary) {
    out.q = rope::apply_rotary(out.q, rotary->q, true);
    out.k = rope::apply_rotary(out.k, rotary->k, true);
    if (rotary->rotate_values) out.v = rope::apply_rotary(out.v, rotary->k, true);
  }
  return out;
}

Tensor weights_from(const Projected& pr, const MultiHeadConfig& cfg, const AttentionMask* mask) {
  auto s = scale(matmul(pr.q, transpose(pr.k)), Scalar(1) / std::sqrt(static_cast<Scalar>(cfg.head_dim())));
  if (mask) {
    if (mask->n_q != s.dim(1) || mask->n_k != s.dim(2))
      throw ShapeError("attention: mask shape does not match (queries, keys)");
    mask->validate();
    s = mask_fill(s, mask->allowed, mask->n_q, mask->n_k);
  }
  return softmax_lastdim(s);
}

}  // namespace

Tensor attention_weights(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                         const MultiHeadConfig& cfg, const AttentionMask* mask, const Rotary* rotary) {
  return weights_from(project(q_in, kv_in, p, cfg, rotary), cfg, mask);
}

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionParams& p,
                            const MultiHeadConfig& cfg, const AttentionMask* mask, const Rotary* rotary) {
  auto pr = project(q_in, kv_in, p, cfg, rotary);
  auto w = weights_from(pr, cfg, mask);
  return add(matmul(merge_heads(matmul(w, pr.v)), p.wo), p.bo);
}

Tensor masked_self_attention(const Tensor& x, const Tensor& h, const TokenSplit& split, const AttentionParams& p,
                             const MultiHeadConfig& cfg, const Rotary* rotary, bool use_mask) {
  split.validate();
  if (x.dim(0) != split.total()) throw ShapeError("masked_self_attention: token count does not match split");
  if (use_mask) {
    auto mask = build_ref_video_mask(split);
    return add(x, multi_head_attention(h, h, p, cfg, &mask, rotary));
  }
  return add(x, multi_head_attention(h, h, p, cfg, nullptr, rotary));
}

Tensor masked_self_attention(const Tensor& x, const TokenSplit& split, const AttentionParams& p,
                             const MultiHeadConfig& cfg, const Rotary* rotary, bool use_mask) {
  return masked_self_attention(x, x, split, p, cfg, rotary, use_mask);
}

Tensor cross_attention(const Tensor& x, const Tensor& h, const Tensor& memory, const AttentionParams& p,
                       const MultiHeadConfig& cfg) {
  if (!memory.defined() || memory.numel() == 0) throw ConfigError("cross_attention: empty memory");
  return add(x, multi_head_attention(h, memory, p, cfg));
}

Tensor cross_attention(const Tensor& x, const Tensor& memory, const AttentionParams& p, const MultiHeadConfig& cfg) {
  return cross_attention(x, x, memory, p, cfg);
}

Tensor emphasize_attention(const Tensor& x, const Tensor& h, const TokenSplit& split, const AttentionParams& p,
                           const MultiHeadConfig& cfg, const Rotary* rotary) {
  split.validate();
  if (x.dim(0) != split.total()) throw ShapeError("emphasize_attention: token count does not match split");
  std::size_t n = split.total();
  auto ref = slice_rows(x, 0, split.n_ref);
  auto vid = slice_rows(x, split.n_ref, n);
  auto h_ref = slice_rows(h, 0, split.n_ref);
  auto h_vid = slice_rows(h, split.n_ref, n);
  auto updated = add(vid, multi_head_attention(h_vid, h_ref, p, cfg, nullptr, rotary));
  return concat_rows({ref, updated});
}

Tensor emphasize_attention(const Tensor& x, const TokenSplit& split, const AttentionParams& p,
                           const MultiHeadConfig& cfg, const Rotary* rotary) {
  return emphasize_attention(x, x, split, p, cfg, rotary);
}

}  // namespace ctxdit::attn
