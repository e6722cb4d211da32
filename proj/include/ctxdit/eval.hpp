#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ctxdit/data.hpp"
#include "ctxdit/extract.hpp"
#include "ctxdit/model.hpp"
#include "ctxdit/train.hpp"
#include "json.hpp"

namespace ctxdit::eval {

struct Consistency {
  double value = 0;
  /// Set when some frame had zero norm; its pairs count as similarity 0.
  bool degenerate = false;
};

/// Mean cosine similarity of consecutive flattened frames of video[F, ...].
/// F < 2 is a ShapeError.
Consistency temporal_consistency(const Tensor& video);

/// Mean squared error over pixels where mask >= 0.5. The mask has the image
/// shape or the image shape without its channel dim. NaN when it is empty.
double masked_mse(const Tensor& a, const Tensor& b, const Tensor& mask);

/// Produces a [F, H, W, 3] video in [0, 1] for a reference image and prompt.
using VideoGenerator =
    std::function<Tensor(const data::Sample& sample, const data::Prompt& prompt, RngState& rng)>;

struct EvalConfig {
  std::size_t sampler_steps = 20;
  double guidance_scale = 1.0;
  std::uint64_t seed = 0;
  /// Evaluate the first `max_samples` samples; zero means all.
  std::size_t max_samples = 0;
  bool cross_video = true;

  bool operator==(const EvalConfig&) const = default;
};

nlohmann::json to_json(const EvalConfig& c);
EvalConfig eval_config_from_json(const nlohmann::json& j);

struct SampleMetrics {
  std::size_t index = 0;
  std::size_t frames = 0;
  std::size_t identity_matches = 0;
  std::size_t extraction_failures = 0;
  double appearance_mse = 0;
  double temporal_consistency = 0;
  bool degenerate = false;
  /// Frames whose extracted attributes agree between two videos generated
  /// from the same reference under different later-frame prompts.
  std::size_t cross_agreements = 0;

  bool operator==(const SampleMetrics&) const = default;
};

struct MetricReport {
  std::string variant = "full";
  double temporal_consistency = 0;
  double identity_match_rate = 0;
  double appearance_mse = 0;
  double cross_video_rate = 0;
  std::size_t extraction_failures = 0;
  std::vector<SampleMetrics> samples;
  /// Configs and seeds the report was produced from.
  nlohmann::json provenance = nlohmann::json::object();

  bool operator==(const MetricReport&) const = default;
};

nlohmann::json to_json(const MetricReport& r);
/// Throws FormatError on missing or mistyped fields.
MetricReport metric_report_from_json(const nlohmann::json& j);

/// Later-frame prompt with a different motion and background than `p`.
data::Prompt alternate_prompt(const data::Prompt& p, RngState& rng);

/// Renders the ground-truth video of the prompt (the stored video when the
/// prompt is the sample's own).
VideoGenerator oracle_generator(const data::GenConfig& cfg);

struct GenerateOptions {
  std::size_t steps = 20;
  /// Ancestral sampling instead of deterministic DDIM.
  bool ancestral = false;
  double guidance_scale = 1.0;
};

/// Samples a video [F, H, W, 3] for a reference image [H, W, 3] in [0, 1].
/// Predicted x0 is projected onto the pixel range at every step; the decoded
/// output is not clamped.
Tensor generate_video(const model::Model& m, const Tensor& ref_image, const data::Prompt& prompt,
                      const GenerateOptions& opts, RngState& rng);

/// DDIM sampling from the model, decoded to pixels and clamped to [0, 1].
VideoGenerator model_generator(const model::Model& m, const EvalConfig& cfg);

/// Runs the generator over the dataset. Sample i uses RngState(seed).fork(i).
MetricReport evaluate(const VideoGenerator& gen, const data::Dataset& ds, const EvalConfig& cfg,
                      const std::string& variant = "full");
MetricReport evaluate(const train::Checkpoint& ckpt, const data::Dataset& ds, const EvalConfig& cfg);

struct VariantSummary {
  std::string variant;
  std::vector<std::uint64_t> seeds;
  std::vector<MetricReport> reports;
  double temporal_consistency = 0;
  double identity_match_rate = 0;
  double appearance_mse = 0;
  double cross_video_rate = 0;
};

struct AblationReport {
  std::vector<VariantSummary> variants;
  nlohmann::json provenance = nlohmann::json::object();
};

/// Metric names in report order.
const std::vector<std::string>& metric_names();
/// Seed-mean of the named metric.
double metric_value(const VariantSummary& v, const std::string& metric);

VariantSummary summarize(const std::string& variant, std::vector<std::uint64_t> seeds,
                         std::vector<MetricReport> reports);

struct AblationOptions {
  model::ModelConfig model;
  train::TrainConfig train;
  EvalConfig eval;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  /// Called after each run finishes training, for progress reporting.
  std::function<void(const std::string& variant, std::uint64_t seed)> on_run;
};

/// Trains one model per (flags, seed) on `train_set`, evaluates it on
/// `eval_set` and summarizes each flag set. The first entry is the baseline.
AblationReport ablation_suite(const std::vector<model::AblationFlags>& flags, const data::Dataset& train_set,
                              const data::Dataset& eval_set, const AblationOptions& opts);

nlohmann::json to_json(const AblationReport& r);
/// Columns variant, metric, mean, delta (vs. the first variant), n_seeds.
std::string to_csv(const AblationReport& r);
/// One row per metric for a single report.
std::string to_csv(const MetricReport& r);

void write_report(const MetricReport& r, const std::filesystem::path& dir);
MetricReport read_report(const std::filesystem::path& path);
void write_report(const AblationReport& r, const std::filesystem::path& dir);

}  // namespace ctxdit::eval
