#include "ctxdit/model.hpp"

#include <cmath>
#include <optional>

#include "ctxdit/codec.hpp"
#include "ctxdit/ops.hpp"

namespace ctxdit::model {

using nlohmann::json;

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model config: " + msg); };
  if (patch == 0 || height % patch || width % patch)
    fail("image " + std::to_string(height) + "x" + std::to_string(width) + " not divisible by patch " +
         std::to_string(patch));
  if (frames == 0) fail("frames must be positive");
  if (channels != 3) fail("channels must be 3");
  if (depth == 0 || ffn_mult == 0 || sem_c1 == 0 || sem_c2 == 0) fail("sizes must be positive");
  if (model_dim % 2) fail("model_dim must be even");
  attention_config().validate();
  if (height % 8 || width % 8) fail("semantic encoder needs image sides divisible by 8");
  if (semantic_grid == 0 || (height / 8) % semantic_grid || (width / 8) % semantic_grid)
    fail("semantic_grid must divide the encoder output grid");
  if (beta < 0) fail("beta must be non-negative");
  if (timesteps < 2) fail("timesteps must be at least 2");
  rope_config().validate();
}

rope::RopeConfig ModelConfig::rope_config() const {
  auto r = rope::RopeConfig::for_head_dim(model_dim / n_heads, beta);
  r.theta_base = theta_base;
  r.rotate_values = rotate_values;
  return r;
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.height = c.width = 8;
  c.patch = 4;
  c.frames = 2;
  c.model_dim = 8;
  c.n_heads = 2;
  c.depth = 2;
  c.sem_c1 = c.sem_c2 = 2;
  c.semantic_grid = 1;
  c.timesteps = 100;
  return c;
}

json to_json(const ModelConfig& c) {
  return {{"height", c.height},
          {"width", c.width},
          {"frames", c.frames},
          {"patch", c.patch},
          {"channels", c.channels},
          {"model_dim", c.model_dim},
          {"n_heads", c.n_heads},
          {"depth", c.depth},
          {"ffn_mult", c.ffn_mult},
          {"sem_c1", c.sem_c1},
          {"sem_c2", c.sem_c2},
          {"semantic_grid", c.semantic_grid},
          {"beta", c.beta},
          {"theta_base", c.theta_base},
          {"rotate_values", c.rotate_values},
          {"emphasize_rope", c.emphasize_rope},
          {"use_ref_mask", c.use_ref_mask},
          {"use_emphasize", c.use_emphasize},
          {"use_first_prompt", c.use_first_prompt},
          {"ref_skip", c.ref_skip},
          {"noise_skip", c.noise_skip},
          {"schedule", diffusion::to_string(c.schedule)},
          {"timesteps", c.timesteps}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  try {
    c.height = j.value("height", c.height);
    c.width = j.value("width", c.width);
    c.frames = j.value("frames", c.frames);
    c.patch = j.value("patch", c.patch);
    c.channels = j.value("channels", c.channels);
    c.model_dim = j.value("model_dim", c.model_dim);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.depth = j.value("depth", c.depth);
    c.ffn_mult = j.value("ffn_mult", c.ffn_mult);
    c.sem_c1 = j.value("sem_c1", c.sem_c1);
    c.sem_c2 = j.value("sem_c2", c.sem_c2);
    c.semantic_grid = j.value("semantic_grid", c.semantic_grid);
    c.beta = j.value("beta", c.beta);
    c.theta_base = j.value("theta_base", c.theta_base);
    c.rotate_values = j.value("rotate_values", c.rotate_values);
    c.emphasize_rope = j.value("emphasize_rope", c.emphasize_rope);
    c.use_ref_mask = j.value("use_ref_mask", c.use_ref_mask);
    c.use_emphasize = j.value("use_emphasize", c.use_emphasize);
    c.use_first_prompt = j.value("use_first_prompt", c.use_first_prompt);
    c.ref_skip = j.value("ref_skip", c.ref_skip);
    c.noise_skip = j.value("noise_skip", c.noise_skip);
    if (j.contains("schedule")) c.schedule = diffusion::parse_schedule_kind(j.at("schedule").get<std::string>());
    c.timesteps = j.value("timesteps", c.timesteps);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config: ") + e.what());
  }
  return c;
}

std::string AblationFlags::name() const {
  std::string s;
  auto add = [&](bool on, const char* n) {
    if (!on) return;
    if (!s.empty()) s += "+";
    s += n;
  };
  add(no_aug_prompt, "no_aug_prompt");
  add(no_recon_loss, "no_recon_loss");
  add(no_attn_mod, "no_attn_mod");
  add(no_gap_rope, "no_gap_rope");
  return s.empty() ? "full" : s;
}

AblationFlags parse_ablation_flags(const std::string& name) {
  AblationFlags f;
  if (name == "full") return f;
  std::size_t start = 0;
  while (start <= name.size()) {
    auto end = name.find('+', start);
    if (end == std::string::npos) end = name.size();
    auto part = name.substr(start, end - start);
    if (part == "no_aug_prompt")
      f.no_aug_prompt = true;
    else if (part == "no_recon_loss")
      f.no_recon_loss = true;
    else if (part == "no_attn_mod")
      f.no_attn_mod = true;
    else if (part == "no_gap_rope")
      f.no_gap_rope = true;
    else
      throw ConfigError("unknown ablation flag: '" + part + "'");
    start = end + 1;
  }
  return f;
}

ModelConfig apply_ablations(ModelConfig cfg, const AblationFlags& flags) {
  if (flags.no_gap_rope) cfg.beta = 0;
  if (flags.no_attn_mod) {
    cfg.use_ref_mask = false;
    cfg.use_emphasize = false;
  }
  if (flags.no_aug_prompt) cfg.use_first_prompt = false;
  return cfg;
}

std::size_t prompt_vocab_size() {
  std::size_t n = 0;
  for (std::size_t i = 0; i < data::kNumPromptFields; ++i) n += data::prompt_field_size(static_cast<data::PromptField>(i));
  return n;
}

std::size_t prompt_row(data::PromptField f, std::size_t id) {
  if (id >= data::prompt_field_size(f))
    throw VocabError(std::string("prompt id ") + std::to_string(id) + " out of range for field " +
                     data::prompt_field_name(f));
  std::size_t off = 0;
  for (int i = 0; i < static_cast<int>(f); ++i) off += data::prompt_field_size(static_cast<data::PromptField>(i));
  return off + id;
}

namespace {

std::size_t n_modulated(const ModelConfig& c) { return c.use_emphasize ? 4 : 3; }

template <class P, class F>
void visit(P& p, F&& fn) {
  fn("in.w", p.in_w);
  fn("in.b", p.in_b);
  fn("time.w1", p.t_w1);
  fn("time.b1", p.t_b1);
  fn("time.w2", p.t_w2);
  fn("time.b2", p.t_b2);
  fn("prompt.table", p.prompt_table);
  fn("prompt.null", p.null_cond);
  fn("semantic.conv1.w", p.conv1_w);
  fn("semantic.conv1.b", p.conv1_b);
  fn("semantic.conv2.w", p.conv2_w);
  fn("semantic.conv2.b", p.conv2_b);
  fn("semantic.conv3.w", p.conv3_w);
  fn("semantic.conv3.b", p.conv3_b);
  for (std::size_t i = 0; i < p.blocks.size(); ++i) {
    auto& b = p.blocks[i];
    std::string pre = "blocks." + std::to_string(i) + ".";
    auto attn = [&](const std::string& name, auto& a) {
      fn(pre + name + ".wq", a.wq);
      fn(pre + name + ".bq", a.bq);
      fn(pre + name + ".wk", a.wk);
      fn(pre + name + ".bk", a.bk);
      fn(pre + name + ".wv", a.wv);
      fn(pre + name + ".bv", a.bv);
      fn(pre + name + ".wo", a.wo);
      fn(pre + name + ".bo", a.bo);
    };
    attn("self", b.self_attn);
    attn("cross", b.cross_attn);
    if (b.emph_attn.wq.defined()) attn("emphasize", b.emph_attn);
    fn(pre + "ffn.w1", b.ff_w1);
    fn(pre + "ffn.b1", b.ff_b1);
    fn(pre + "ffn.w2", b.ff_w2);
    fn(pre + "ffn.b2", b.ff_b2);
    fn(pre + "mod.w", b.mod_w);
    fn(pre + "mod.b", b.mod_b);
  }
  fn("head_ref.w", p.head_ref_w);
  fn("head_ref.b", p.head_ref_b);
  fn("head_vid.w", p.head_vid_w);
  fn("head_vid.b", p.head_vid_b);
  if (p.skip_w.defined()) {
    fn("noise_skip.w", p.skip_w);
    fn("noise_skip.b", p.skip_b);
  }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add(matmul(x, w), b); }

}  // namespace

std::vector<NamedTensor> ModelParams::named() const {
  std::vector<NamedTensor> out;
  visit(*this, [&](const std::string& name, const Tensor& t) { out.push_back({name, t}); });
  return out;
}

Model::Model(ModelConfig cfg, RngState& rng, InitOptions init) : cfg_(std::move(cfg)) {
  cfg_.validate();
  const std::size_t d = cfg_.model_dim, L = cfg_.latent_dim(), f = cfg_.ffn_mult * d;
  auto weight = [&](std::size_t in, std::size_t out, bool zero = false) {
    Tensor t = zero ? Tensor::zeros({in, out})
                    : scale(randn(rng, {in, out}), static_cast<Scalar>(1.0 / std::sqrt(static_cast<double>(in))));
    return t.set_requires_grad(true);
  };
  auto bias = [](std::size_t n) { return Tensor::zeros({n}, true); };
  auto& p = params_;
  p.in_w = weight(L, d);
  p.in_b = bias(d);
  p.t_w1 = weight(d, d);
  p.t_b1 = bias(d);
  p.t_w2 = weight(d, d);
  p.t_b2 = bias(d);
  p.prompt_table = randn(rng, {prompt_vocab_size(), d}).set_requires_grad(true);
  p.null_cond = randn(rng, {1, d}).set_requires_grad(true);
  p.conv1_w = weight(16 * cfg_.channels, cfg_.sem_c1);
  p.conv1_b = bias(cfg_.sem_c1);
  p.conv2_w = weight(16 * cfg_.sem_c1, cfg_.sem_c2);
  p.conv2_b = bias(cfg_.sem_c2);
  p.conv3_w = weight(16 * cfg_.sem_c2, d);
  p.conv3_b = bias(d);
  const auto acfg = cfg_.attention_config();
  const double astd = 1.0 / std::sqrt(static_cast<double>(d));
  const std::size_t mod = 2 * d * n_modulated(cfg_);
  for (std::size_t i = 0; i < cfg_.depth; ++i) {
    BlockParams b;
    b.self_attn = attn::init_attention_params(acfg, rng, astd, init.zero_residual);
    b.cross_attn = attn::init_attention_params(acfg, rng, astd, init.zero_residual);
    if (cfg_.use_emphasize) b.emph_attn = attn::init_attention_params(acfg, rng, astd, init.zero_residual);
    b.ff_w1 = weight(d, f);
    b.ff_b1 = bias(f);
    b.ff_w2 = weight(f, d, init.zero_residual);
    b.ff_b2 = bias(d);
    b.mod_w = weight(d, mod, init.zero_modulation);
    b.mod_b = bias(mod);
    p.blocks.push_back(std::move(b));
  }
  p.head_ref_w = weight(d, L, init.zero_heads);
  p.head_ref_b = bias(L);
  p.head_vid_w = weight(d, L, init.zero_heads);
  p.head_vid_b = bias(L);
  if (cfg_.noise_skip) {
    p.skip_w = weight(d, L, init.zero_heads);
    p.skip_b = bias(L);
  }
}

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : named_parameters()) n += p.tensor.numel();
  return n;
}

Model Model::clone() const {
  Model m;
  m.cfg_ = cfg_;
  m.params_ = params_;
  visit(m.params_, [](const std::string&, Tensor& t) { t = t.clone(); });
  return m;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t d = c.model_dim, L = c.latent_dim(), f = c.ffn_mult * d, V = prompt_vocab_size();
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t mod = 2 * d * n_modulated(c);
  std::size_t global = (L * d + d) + 2 * (d * d + d) + V * d + d;
  global += (16 * c.channels * c.sem_c1 + c.sem_c1) + (16 * c.sem_c1 * c.sem_c2 + c.sem_c2) + (16 * c.sem_c2 * d + d);
  global += 2 * (d * L + L);
  if (c.noise_skip) global += d * L + L;
  std::size_t block = (c.use_emphasize ? 3 : 2) * attn + (d * f + f + f * d + d) + (d * mod + mod);
  return global + c.depth * block;
}

Tensor Conditioning::memory() const {
  std::vector<Tensor> parts;
  if (first.defined()) parts.push_back(first);
  parts.push_back(later);
  parts.push_back(semantic);
  return concat_rows(parts);
}

Tensor semantic_tokens(const Model& m, const Tensor& ref_image) {
  const auto& c = m.config();
  if (ref_image.shape() != Shape{c.height, c.width, c.channels})
    throw ShapeError("semantic encoder: expected image " + shape_str({c.height, c.width, c.channels}) + ", got " +
                     shape_str(ref_image.shape()));
  const auto& p = m.params();
  auto conv = [](const Tensor& x, const Tensor& w, const Tensor& b, bool act) {
    std::size_t oh = x.dim(0) / 2, ow = x.dim(1) / 2;
    auto y = linear(im2col(x, 4, 2, 1), w, b);
    if (act) y = silu(y);
    return reshape(y, {oh, ow, w.dim(1)});
  };
  auto h = conv(codec::to_model_range(ref_image), p.conv1_w, p.conv1_b, true);
  h = conv(h, p.conv2_w, p.conv2_b, true);
  h = conv(h, p.conv3_w, p.conv3_b, false);
  // Average pool [gh, gw, d] to [grid^2, d] through a constant pooling matrix.
  const std::size_t gh = h.dim(0), gw = h.dim(1), g = c.semantic_grid, ch = gh / g, cw = gw / g;
  std::vector<Scalar> pool(g * g * gh * gw, 0);
  const Scalar w = static_cast<Scalar>(1.0 / static_cast<double>(ch * cw));
  for (std::size_t y = 0; y < gh; ++y)
    for (std::size_t x = 0; x < gw; ++x) pool[((y / ch) * g + x / cw) * gh * gw + y * gw + x] = w;
  return matmul(Tensor({g * g, gh * gw}, std::move(pool)), reshape(h, {gh * gw, c.model_dim}));
}

Conditioning encode_conditioning(const Model& m, const data::Prompt& prompt, const Tensor& ref_image) {
  const auto& fields_first = data::first_prompt_fields();
  const auto& fields_later = data::later_prompt_fields();
  if (prompt.first.size() != fields_first.size() || prompt.later.size() != fields_later.size())
    throw VocabError("prompt has the wrong number of fields");
  std::vector<std::size_t> first_rows, later_rows;
  for (std::size_t i = 0; i < fields_first.size(); ++i) first_rows.push_back(prompt_row(fields_first[i], prompt.first[i]));
  for (std::size_t i = 0; i < fields_later.size(); ++i) later_rows.push_back(prompt_row(fields_later[i], prompt.later[i]));
  Conditioning c;
  if (m.config().use_first_prompt) c.first = embedding(m.params().prompt_table, first_rows);
  c.later = embedding(m.params().prompt_table, later_rows);
  c.semantic = semantic_tokens(m, ref_image);
  return c;
}

Tensor null_memory(const Model& m) { return m.params().null_cond; }

Tensor timestep_features(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  std::vector<Scalar> v(dim, 0);
  for (std::size_t i = 0; i < half; ++i) {
    double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    v[i] = static_cast<Scalar>(std::cos(t * freq));
    v[half + i] = static_cast<Scalar>(std::sin(t * freq));
  }
  return Tensor({1, dim}, std::move(v));
}

std::vector<rope::TokenPosition> token_positions(const ModelConfig& cfg) {
  const int gh = static_cast<int>(cfg.height / cfg.patch), gw = static_cast<int>(cfg.width / cfg.patch);
  std::vector<rope::TokenPosition> pos;
  pos.reserve(cfg.n_ref_tokens() + cfg.n_vid_tokens());
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < gw; ++x) pos.push_back({0, y, x, 0});
  for (int f = 0; f < static_cast<int>(cfg.frames); ++f)
    for (int y = 0; y < gh; ++y)
      for (int x = 0; x < gw; ++x) pos.push_back({f + 1, y, x, 1});
  return pos;
}

namespace {

struct BlockContext {
  attn::TokenSplit split;
  attn::Rotary self_rotary;
  std::optional<attn::Rotary> emph_rotary;

  explicit BlockContext(const ModelConfig& c)
      : split{c.n_ref_tokens(), c.n_vid_tokens()},
        self_rotary(attn::Rotary::make(token_positions(c), token_positions(c), c.rope_config())) {
    if (c.emphasize_rope) {
      auto pos = token_positions(c);
      std::vector<rope::TokenPosition> ref(pos.begin(), pos.begin() + static_cast<std::ptrdiff_t>(split.n_ref));
      std::vector<rope::TokenPosition> vid(pos.begin() + static_cast<std::ptrdiff_t>(split.n_ref), pos.end());
      emph_rotary = attn::Rotary::make(vid, ref, c.rope_config());
    }
  }
};

Tensor run_block(const Model& m, std::size_t i, const BlockContext& ctx, const Tensor& x_in, const Tensor& memory,
                 const Tensor& mod_ref, const Tensor& mod_vid) {
  const auto& c = m.config();
  const auto& b = m.params().blocks.at(i);
  const auto acfg = c.attention_config();
  const std::size_t d = c.model_dim;
  auto mr = linear(mod_ref, b.mod_w, b.mod_b);
  auto mv = linear(mod_vid, b.mod_w, b.mod_b);
  // Pre-norm with per-group shift and scale: LN(x) * (1 + scale) + shift.
  auto modulate = [&](const Tensor& x, std::size_t k) {
    auto rows = [&](std::size_t begin) {
      return concat_rows({repeat_rows(slice_cols(mr, begin, begin + d), ctx.split.n_ref),
                          repeat_rows(slice_cols(mv, begin, begin + d), ctx.split.n_vid)});
    };
    return add(mul(layernorm(x), add(rows((2 * k + 1) * d), Scalar(1))), rows(2 * k * d));
  };
  std::size_t k = 0;
  auto x = attn::masked_self_attention(x_in, modulate(x_in, k++), ctx.split, b.self_attn, acfg, &ctx.self_rotary,
                                       c.use_ref_mask);
  x = attn::cross_attention(x, modulate(x, k++), memory, b.cross_attn, acfg);
  if (c.use_emphasize)
    x = attn::emphasize_attention(x, modulate(x, k++), ctx.split, b.emph_attn, acfg,
                                  ctx.emph_rotary ? &*ctx.emph_rotary : nullptr);
  auto h = modulate(x, k);
  return add(x, linear(gelu(linear(h, b.ff_w1, b.ff_b1)), b.ff_w2, b.ff_b2));
}

std::pair<Tensor, Tensor> group_embeddings(const Model& m, std::size_t t) {
  const auto& p = m.params();
  const std::size_t d = m.config().model_dim;
  auto embed = [&](double tv) {
    return silu(linear(silu(linear(timestep_features(tv, d), p.t_w1, p.t_b1)), p.t_w2, p.t_b2));
  };
  return {embed(0.0), embed(static_cast<double>(t))};
}

}  // namespace

Tensor block_forward(const Model& m, std::size_t block, const Tensor& x, const Tensor& memory, const Tensor& mod_ref,
                     const Tensor& mod_vid) {
  BlockContext ctx(m.config());
  return run_block(m, block, ctx, x, memory, mod_ref, mod_vid);
}

ModelOutput forward(const Model& m, const Tensor& ref_latent, const Tensor& z_t, std::size_t t, const Tensor& memory) {
  const auto& c = m.config();
  const auto& p = m.params();
  const Shape ref_shape{c.n_ref_tokens(), c.latent_dim()}, vid_shape{c.n_vid_tokens(), c.latent_dim()};
  if (ref_latent.shape() != ref_shape || z_t.shape() != vid_shape)
    throw ShapeError("model forward: expected ref " + shape_str(ref_shape) + " and video " + shape_str(vid_shape) +
                     ", got " + shape_str(ref_latent.shape()) + " and " + shape_str(z_t.shape()));
  if (t >= c.timesteps) throw RangeError("model forward: timestep " + std::to_string(t) + " out of range");
  if (memory.rank() != 2 || memory.dim(1) != c.model_dim) throw ShapeError("model forward: memory must be [n, d]");

  BlockContext ctx(c);
  auto [mod_ref, mod_vid] = group_embeddings(m, t);
  auto x = linear(concat_rows({ref_latent, z_t}), p.in_w, p.in_b);
  for (std::size_t i = 0; i < c.depth; ++i) x = run_block(m, i, ctx, x, memory, mod_ref, mod_vid);
  auto h = layernorm(x);
  ModelOutput out;
  out.ref_recon = linear(slice_rows(h, 0, ctx.split.n_ref), p.head_ref_w, p.head_ref_b);
  if (c.ref_skip) out.ref_recon = add(ref_latent, out.ref_recon);
  out.eps_pred = linear(slice_rows(h, ctx.split.n_ref, ctx.split.total()), p.head_vid_w, p.head_vid_b);
  if (c.noise_skip) out.eps_pred = add(out.eps_pred, mul(z_t, linear(mod_vid, p.skip_w, p.skip_b)));
  return out;
}

diffusion::Denoiser make_denoiser(const Model& m, const Tensor& memory, double guidance_scale) {
  return [&m, memory, guidance_scale](const Tensor& ref, const Tensor& z, std::size_t t) {
    auto cond = forward(m, ref, z, t, memory).eps_pred;
    if (guidance_scale == 1.0) return cond;
    auto uncond = forward(m, ref, z, t, null_memory(m)).eps_pred;
    return add(uncond, scale(sub(cond, uncond), static_cast<Scalar>(guidance_scale)));
  };
}

Tensor encode_pixels(const ModelConfig& cfg, const Tensor& pixels) {
  return codec::encode_latent(codec::to_model_range(pixels), cfg.patch);
}

Tensor decode_video(const ModelConfig& cfg, const Tensor& latent) {
  return codec::from_model_range(
      codec::decode_latent(latent, {cfg.frames, cfg.height, cfg.width, cfg.channels}, cfg.patch));
}

Tensor decode_frame(const ModelConfig& cfg, const Tensor& latent) {
  return codec::from_model_range(codec::decode_latent(latent, {cfg.height, cfg.width, cfg.channels}, cfg.patch));
}

Tensor clip_to_data_range(const ModelConfig& cfg, const Tensor& latent) {
  const std::size_t tpf = cfg.tokens_per_frame();
  if (latent.rank() != 2 || latent.dim(1) != cfg.latent_dim() || latent.dim(0) % tpf != 0)
    throw ShapeError("clip_to_data_range: bad latent shape " + shape_str(latent.shape()));
  auto px = codec::decode_latent(latent.detach(), {latent.dim(0) / tpf, cfg.height, cfg.width, cfg.channels}, cfg.patch);
  std::vector<Scalar> d(px.data().begin(), px.data().end());
  for (auto& v : d) v = std::clamp<Scalar>(v, -1, 1);
  return codec::encode_latent(Tensor(px.shape(), std::move(d)), cfg.patch);
}

}  // namespace ctxdit::model
