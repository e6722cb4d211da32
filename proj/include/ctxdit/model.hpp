#pragma once

#include <functional>
#include <string>
#include <vector>

#include "ctxdit/attention.hpp"
#include "ctxdit/data.hpp"
#include "ctxdit/diffusion.hpp"
#include "ctxdit/rng.hpp"
#include "ctxdit/rope.hpp"
#include "ctxdit/tensor.hpp"
#include "json.hpp"

namespace ctxdit::model {

struct ModelConfig {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t frames = 8;
  std::size_t patch = 8;
  std::size_t channels = 3;
  std::size_t model_dim = 32;
  std::size_t n_heads = 4;
  std::size_t depth = 2;
  std::size_t ffn_mult = 4;

  // Semantic encoder: three stride-2 convs (3 -> c1 -> c2 -> model_dim),
  // average-pooled to semantic_grid x semantic_grid tokens.
  std::size_t sem_c1 = 8;
  std::size_t sem_c2 = 16;
  std::size_t semantic_grid = 2;

  int beta = 4;
  double theta_base = 10000.0;
  bool rotate_values = false;
  bool emphasize_rope = false;

  bool use_ref_mask = true;
  bool use_emphasize = true;
  bool use_first_prompt = true;
  /// ref_recon = ref_latent + head_ref(h) instead of head_ref(h).
  bool ref_skip = false;
  /// eps_pred = head_vid(h) + gate(t) * z_t, a per-coordinate timestep gate
  /// (zero at init) that carries the noisy input past the narrow trunk.
  bool noise_skip = true;

  diffusion::ScheduleKind schedule = diffusion::ScheduleKind::Cosine;
  std::size_t timesteps = 1000;

  bool operator==(const ModelConfig&) const = default;

  /// Throws ConfigError.
  void validate() const;
  std::size_t latent_dim() const { return channels * patch * patch; }
  std::size_t tokens_per_frame() const { return (height / patch) * (width / patch); }
  std::size_t n_ref_tokens() const { return tokens_per_frame(); }
  std::size_t n_vid_tokens() const { return frames * tokens_per_frame(); }
  std::size_t n_first_tokens() const { return use_first_prompt ? data::first_prompt_fields().size() : 0; }
  std::size_t n_later_tokens() const { return data::later_prompt_fields().size(); }
  std::size_t n_semantic_tokens() const { return semantic_grid * semantic_grid; }
  std::size_t memory_length() const { return n_first_tokens() + n_later_tokens() + n_semantic_tokens(); }
  rope::RopeConfig rope_config() const;
  attn::MultiHeadConfig attention_config() const { return {model_dim, n_heads}; }
  diffusion::NoiseSchedule make_schedule() const { return diffusion::make_schedule(schedule, timesteps); }
};

/// Smallest useful config (8x8, patch 4, two frames, width 8) for gradient
/// checks and self-tests; about 6k parameters.
ModelConfig tiny_model_config();

nlohmann::json to_json(const ModelConfig& c);
/// Missing keys keep their defaults; unknown keys are ignored.
ModelConfig model_config_from_json(const nlohmann::json& j);

/// The four ablation switches; each maps to one named model or loss change.
struct AblationFlags {
  bool no_aug_prompt = false;
  bool no_recon_loss = false;
  bool no_attn_mod = false;
  bool no_gap_rope = false;

  bool operator==(const AblationFlags&) const = default;
  std::string name() const;
};

/// Inverse of AblationFlags::name(); unknown names are a ConfigError.
AblationFlags parse_ablation_flags(const std::string& name);

/// no_gap_rope sets beta to 0, no_attn_mod drops both the reference mask and
/// the emphasize module, no_aug_prompt drops the first-frame prompt tokens.
/// no_recon_loss does not touch the model.
ModelConfig apply_ablations(ModelConfig cfg, const AblationFlags& flags);

/// Total number of prompt ids across all fields.
std::size_t prompt_vocab_size();
/// Row of `id` of field `f` in the shared prompt embedding table.
std::size_t prompt_row(data::PromptField f, std::size_t id);

struct BlockParams {
  attn::AttentionParams self_attn;
  attn::AttentionParams cross_attn;
  attn::AttentionParams emph_attn;  // undefined tensors when the module is off
  Tensor ff_w1, ff_b1, ff_w2, ff_b2;
  Tensor mod_w, mod_b;
};

struct ModelParams {
  Tensor in_w, in_b;
  Tensor t_w1, t_b1, t_w2, t_b2;
  Tensor prompt_table;
  Tensor null_cond;
  Tensor conv1_w, conv1_b, conv2_w, conv2_b, conv3_w, conv3_b;
  std::vector<BlockParams> blocks;
  Tensor head_ref_w, head_ref_b;
  Tensor head_vid_w, head_vid_b;
  Tensor skip_w, skip_b;  // undefined without noise_skip

  /// Every parameter in a fixed order with stable dotted names.
  std::vector<NamedTensor> named() const;
};

struct InitOptions {
  /// Zero the attention and feed-forward output projections.
  bool zero_residual = true;
  /// Zero both output heads.
  bool zero_heads = true;
  /// Zero the adaLN modulation, so every block starts with unit scale.
  bool zero_modulation = true;
};

class Model {
 public:
  Model(ModelConfig cfg, RngState& rng, InitOptions init = {});

  const ModelConfig& config() const { return cfg_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  std::vector<NamedTensor> named_parameters() const { return params_.named(); }
  std::size_t parameter_count() const;

  /// Deep copy with fresh leaves.
  Model clone() const;

 private:
  Model() = default;
  ModelConfig cfg_;
  ModelParams params_;
};

/// Closed-form parameter count of a model built from `cfg`.
std::size_t expected_parameter_count(const ModelConfig& cfg);

/// Cross-attention memory: first-frame prompt ++ later-frame prompt ++ semantic tokens.
struct Conditioning {
  Tensor first;     // [n_first, d], undefined without the first-frame prompt
  Tensor later;     // [n_later, d]
  Tensor semantic;  // [grid^2, d]

  Tensor memory() const;
};

/// Prompt ids must be in range (VocabError). `ref_image` is [H, W, 3] in [0, 1].
Conditioning encode_conditioning(const Model& m, const data::Prompt& prompt, const Tensor& ref_image);
/// Semantic tokens of a [H, W, 3] image in [0, 1].
Tensor semantic_tokens(const Model& m, const Tensor& ref_image);
/// Memory used for the unconditional branch of classifier-free guidance.
Tensor null_memory(const Model& m);

/// Sinusoidal features of timestep t, width `dim`.
Tensor timestep_features(double t, std::size_t dim);

/// Token positions: reference frame 0 with g=0, video frames 1..F with g=1.
std::vector<rope::TokenPosition> token_positions(const ModelConfig& cfg);

struct ModelOutput {
  Tensor ref_recon;  // [n_ref, latent]
  Tensor eps_pred;   // [n_vid, latent]
};

/// Concatenates clean reference tokens and noisy video tokens, runs the
/// blocks and splits the two heads.
ModelOutput forward(const Model& m, const Tensor& ref_latent, const Tensor& z_t, std::size_t t, const Tensor& memory);

/// One block on the token sequence `x`; `mod_ref` / `mod_vid` are the
/// per-group timestep embeddings [1, d] after SiLU.
Tensor block_forward(const Model& m, std::size_t block, const Tensor& x, const Tensor& memory, const Tensor& mod_ref,
                     const Tensor& mod_vid);

/// Denoiser closure for the samplers. A guidance scale other than 1 mixes in
/// the unconditional prediction.
diffusion::Denoiser make_denoiser(const Model& m, const Tensor& memory, double guidance_scale = 1.0);

/// Pixels [H, W, 3] or [F, H, W, 3] in [0, 1] to model-range latents, and back.
Tensor encode_pixels(const ModelConfig& cfg, const Tensor& pixels);
Tensor decode_video(const ModelConfig& cfg, const Tensor& latent);
Tensor decode_frame(const ModelConfig& cfg, const Tensor& latent);

/// Projects latent tokens (whole frames) onto the valid pixel range [-1, 1].
Tensor clip_to_data_range(const ModelConfig& cfg, const Tensor& latent);

}  // namespace ctxdit::model
