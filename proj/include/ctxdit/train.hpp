#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ctxdit/data.hpp"
#include "ctxdit/diffusion.hpp"
#include "ctxdit/model.hpp"
#include "ctxdit/rng.hpp"
#include "json.hpp"

namespace ctxdit::train {

struct TrainConfig {
  double lr = 1e-4;
  std::size_t warmup_steps = 100;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t batch_size = 8;
  std::size_t total_steps = 2000;
  /// Probability of replacing the conditioning memory by the null token.
  double cond_dropout = 0.0;
  model::AblationFlags flags;
  std::uint64_t seed = 0;

  bool operator==(const TrainConfig&) const = default;
  /// Throws ConfigError.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; unknown keys are ignored.
TrainConfig train_config_from_json(const nlohmann::json& j);

/// lr * min(step / warmup, 1) for step >= 1.
double learning_rate(const TrainConfig& cfg, std::size_t step);

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

AdamState init_adam_state(const std::vector<NamedTensor>& params);

/// Decoupled weight decay AdamW with bias correction, in place on the leaves.
/// A non-finite gradient raises NumericError naming the parameter.
void adamw_step(const std::vector<NamedTensor>& params, const std::vector<std::vector<Scalar>>& grads,
                AdamState& state, const TrainConfig& cfg, std::size_t step);

/// One training example in model space.
struct EncodedSample {
  Tensor ref_image;   // [H, W, 3] in [0, 1]
  Tensor ref_latent;  // [n_ref, latent]
  Tensor x0;          // [n_vid, latent]
  data::Prompt prompt;
};

EncodedSample encode_sample(const model::ModelConfig& cfg, const data::Sample& s);

/// Loss of one example with its own noise stream; differentiable.
Tensor sample_loss(const model::Model& m, const EncodedSample& ex, const diffusion::NoiseSchedule& sched,
                   const TrainConfig& cfg, RngState& rng, diffusion::LossTerms* terms = nullptr);

struct StepResult {
  std::size_t step = 0;
  diffusion::LossTerms loss;
  double lr = 0;
};

struct LogRecord {
  std::size_t step = 0;
  double l_gen = 0;
  double l_ref = 0;
  double l_total = 0;
  double lr = 0;
  double wall_time = 0;
};

void write_log_line(std::ostream& out, const LogRecord& r);
std::vector<LogRecord> read_log(std::istream& in);

struct Checkpoint {
  model::ModelConfig model_config;
  TrainConfig train_config;
  data::GenConfig data_config;
  std::size_t step = 0;
  RngState rng;
  std::vector<NamedTensor> params;
  AdamState adam;
};

/// FNV-1a over the canonical configs, ignoring total_steps so a run can be extended.
std::uint64_t config_hash(const model::ModelConfig& m, const TrainConfig& t, const data::GenConfig& d);

/// Container: magic, version, config hash, configs as JSON, step, RNG state,
/// tensor table (name, value, Adam m, Adam v), CRC32 footer.
std::string serialize_checkpoint(const Checkpoint& c);
/// Throws FormatError on bad magic, version, checksum or config hash.
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Model with the checkpoint's config and weights (FormatError on mismatch).
model::Model model_from_checkpoint(const Checkpoint& ckpt);

class Trainer {
 public:
  /// The model config is used after ablations from `tcfg.flags` are applied.
  Trainer(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const data::Dataset& ds);
  /// Resumes from `ckpt`. The dataset must match the checkpoint's data config
  /// and, when `expected` is given, the config hash must match (FormatError).
  static Trainer resume(const Checkpoint& ckpt, const data::Dataset& ds, const TrainConfig* expected = nullptr);

  StepResult step();
  /// Runs until `total_steps`, calling `on_step` after each step.
  void run(const std::function<void(const StepResult&)>& on_step = {});

  std::size_t current_step() const { return step_; }
  const model::Model& model() const { return model_; }
  const TrainConfig& config() const { return tcfg_; }
  const RngState& rng() const { return rng_; }
  Checkpoint checkpoint() const;

 private:
  Trainer(model::Model model, const TrainConfig& tcfg, const data::Dataset& ds);

  model::Model model_;
  TrainConfig tcfg_;
  data::GenConfig data_config_;
  diffusion::NoiseSchedule sched_;
  std::vector<EncodedSample> examples_;
  AdamState adam_;
  RngState rng_;
  std::size_t step_ = 0;
};

}  // namespace ctxdit::train
