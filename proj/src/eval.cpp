#include "ctxdit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "ctxdit/diffusion.hpp"
#include "ctxdit/parallel.hpp"
#include "ctxdit/serialize.hpp"

namespace ctxdit::eval {

using nlohmann::json;

Consistency temporal_consistency(const Tensor& video) {
  if (video.rank() < 2 || video.dim(0) < 2)
    throw ShapeError("temporal_consistency: need at least two frames, got " + shape_str(video.shape()));
  const std::size_t F = video.dim(0), n = video.numel() / F;
  const auto d = video.data();
  // Squared norms: sqrt(fl(s * s)) == s, so identical frames give exactly 1.
  std::vector<double> norm(F, 0);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t i = 0; i < n; ++i) norm[f] += static_cast<double>(d[f * n + i]) * d[f * n + i];
  Consistency c;
  double total = 0;
  for (std::size_t f = 0; f + 1 < F; ++f) {
    if (norm[f] == 0 || norm[f + 1] == 0) {
      c.degenerate = true;
      continue;
    }
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += static_cast<double>(d[f * n + i]) * d[(f + 1) * n + i];
    total += std::clamp(dot / std::sqrt(norm[f] * norm[f + 1]), -1.0, 1.0);
  }
  c.value = total / static_cast<double>(F - 1);
  return c;
}

double masked_mse(const Tensor& a, const Tensor& b, const Tensor& mask) {
  Shape pixel = a.shape();
  if (!pixel.empty()) pixel.pop_back();
  if (a.shape() != b.shape() || (mask.shape() != a.shape() && mask.shape() != pixel))
    throw ShapeError("masked_mse: incompatible shapes " + shape_str(a.shape()) + ", " + shape_str(b.shape()) +
                     ", mask " + shape_str(mask.shape()));
  const std::size_t C = mask.shape() == a.shape() ? 1 : a.shape().back();
  const auto da = a.data(), db = b.data(), dm = mask.data();
  double s = 0;
  std::size_t count = 0;
  for (std::size_t p = 0; p < dm.size(); ++p) {
    if (dm[p] < 0.5) continue;
    for (std::size_t c = 0; c < C; ++c) {
      double e = static_cast<double>(da[p * C + c]) - db[p * C + c];
      s += e * e;
    }
    count += C;
  }
  return count ? s / static_cast<double>(count) : std::numeric_limits<double>::quiet_NaN();
}

json to_json(const EvalConfig& c) {
  return {{"sampler_steps", c.sampler_steps},
          {"guidance_scale", c.guidance_scale},
          {"seed", c.seed},
          {"max_samples", c.max_samples},
          {"cross_video", c.cross_video}};
}

EvalConfig eval_config_from_json(const json& j) {
  EvalConfig c;
  c.sampler_steps = j.value("sampler_steps", c.sampler_steps);
  c.guidance_scale = j.value("guidance_scale", c.guidance_scale);
  c.seed = j.value("seed", c.seed);
  c.max_samples = j.value("max_samples", c.max_samples);
  c.cross_video = j.value("cross_video", c.cross_video);
  return c;
}

namespace {

json sample_json(const SampleMetrics& s) {
  return {{"index", s.index},
          {"frames", s.frames},
          {"identity_matches", s.identity_matches},
          {"extraction_failures", s.extraction_failures},
          {"appearance_mse", s.appearance_mse},
          {"temporal_consistency", s.temporal_consistency},
          {"degenerate", s.degenerate},
          {"cross_agreements", s.cross_agreements}};
}

SampleMetrics sample_from_json(const json& j) {
  SampleMetrics s;
  s.index = j.at("index").get<std::size_t>();
  s.frames = j.at("frames").get<std::size_t>();
  s.identity_matches = j.at("identity_matches").get<std::size_t>();
  s.extraction_failures = j.at("extraction_failures").get<std::size_t>();
  s.appearance_mse = j.at("appearance_mse").get<double>();
  s.temporal_consistency = j.at("temporal_consistency").get<double>();
  s.degenerate = j.at("degenerate").get<bool>();
  s.cross_agreements = j.at("cross_agreements").get<std::size_t>();
  return s;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Tensor clamp01(const Tensor& x) {
  std::vector<Scalar> d(x.data().begin(), x.data().end());
  for (auto& v : d) v = std::clamp<Scalar>(v, 0, 1);
  return Tensor(x.shape(), std::move(d));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot open " + path.string());
  out << text;
  if (!out) throw FormatError("write failed: " + path.string());
}

}  // namespace

json to_json(const MetricReport& r) {
  json samples = json::array();
  for (const auto& s : r.samples) samples.push_back(sample_json(s));
  return {{"variant", r.variant},
          {"temporal_consistency", r.temporal_consistency},
          {"identity_match_rate", r.identity_match_rate},
          {"appearance_mse", r.appearance_mse},
          {"cross_video_rate", r.cross_video_rate},
          {"extraction_failures", r.extraction_failures},
          {"samples", samples},
          {"provenance", r.provenance}};
}

MetricReport metric_report_from_json(const json& j) {
  try {
    MetricReport r;
    r.variant = j.at("variant").get<std::string>();
    r.temporal_consistency = j.at("temporal_consistency").get<double>();
    r.identity_match_rate = j.at("identity_match_rate").get<double>();
    r.appearance_mse = j.at("appearance_mse").get<double>();
    r.cross_video_rate = j.at("cross_video_rate").get<double>();
    r.extraction_failures = j.at("extraction_failures").get<std::size_t>();
    for (const auto& s : j.at("samples")) r.samples.push_back(sample_from_json(s));
    r.provenance = j.value("provenance", json::object());
    return r;
  } catch (const json::exception& e) {
    throw FormatError(std::string("metric report: ") + e.what());
  }
}

data::Prompt alternate_prompt(const data::Prompt& p, RngState& rng) {
  using data::PromptField;
  if (p.later.size() != data::kNumPromptFields - 4) throw VocabError("alternate_prompt: malformed later prompt");
  data::Prompt q = p;
  const std::size_t nm = data::prompt_field_size(PromptField::Motion);
  const std::size_t nb = data::prompt_field_size(PromptField::Background);
  q.later[1] = (p.later[1] + 1 + rng.uniform_int(nm - 1)) % nm;
  q.later[2] = (p.later[2] + 1 + rng.uniform_int(nb - 1)) % nb;
  q.later[3] = rng.uniform_int(data::prompt_field_size(PromptField::Light));
  return q;
}

VideoGenerator oracle_generator(const data::GenConfig& cfg) {
  return [cfg](const data::Sample& s, const data::Prompt& prompt, RngState&) {
    if (prompt == s.prompt) return s.video;
    auto spec = data::spec_from_prompt(prompt);
    sprites::MotionProgram motion{prompt.later[1], cfg.speed};
    sprites::SceneSpec scene{prompt.later[2], sprites::light_level(prompt.later[3])};
    return sprites::render_video(spec, motion, scene, cfg.frames, cfg.size, cfg.size).frames;
  };
}

Tensor generate_video(const model::Model& m, const Tensor& ref_image, const data::Prompt& prompt,
                      const GenerateOptions& opts, RngState& rng) {
  NoGradGuard no_grad;
  const auto& mc = m.config();
  if (ref_image.shape() != Shape{mc.height, mc.width, 3})
    throw ShapeError("generate_video: reference image is " + shape_str(ref_image.shape()) + ", model expects " +
                     shape_str({mc.height, mc.width, 3}));
  auto sched = mc.make_schedule();
  auto ref_latent = model::encode_pixels(mc, ref_image);
  auto memory = model::encode_conditioning(m, prompt, ref_image).memory();
  auto z = randn(rng, {mc.n_vid_tokens(), mc.latent_dim()});
  diffusion::SamplerOptions so;
  so.steps = opts.steps;
  so.x0_projection = [&mc](const Tensor& x0) { return model::clip_to_data_range(mc, x0); };
  auto den = model::make_denoiser(m, memory, opts.guidance_scale);
  auto x0 = opts.ancestral ? diffusion::ancestral_sample(den, ref_latent, z, sched, rng, so)
                           : diffusion::ddim_sample(den, ref_latent, z, sched, so);
  return model::decode_video(mc, x0);
}

VideoGenerator model_generator(const model::Model& m, const EvalConfig& cfg) {
  GenerateOptions opts;
  opts.steps = cfg.sampler_steps;
  opts.guidance_scale = cfg.guidance_scale;
  return [&m, opts](const data::Sample& s, const data::Prompt& prompt, RngState& rng) {
    return clamp01(generate_video(m, s.ref_image, prompt, opts, rng));
  };
}

MetricReport evaluate(const VideoGenerator& gen, const data::Dataset& ds, const EvalConfig& cfg,
                      const std::string& variant) {
  std::size_t n = ds.samples.size();
  if (cfg.max_samples) n = std::min(n, cfg.max_samples);
  if (n == 0) throw ConfigError("evaluate: empty dataset");
  std::vector<SampleMetrics> per(n);
  parallel_for(n, [&](std::size_t i) {
    const auto& s = ds.samples[i];
    RngState rng = RngState(cfg.seed).fork(i);
    auto video = gen(s, s.prompt, rng);
    if (video.shape() != s.video.shape())
      throw ShapeError("evaluate: generated video " + shape_str(video.shape()) + " does not match " +
                       shape_str(s.video.shape()));
    SampleMetrics m;
    m.index = s.index;
    m.frames = video.dim(0);
    std::vector<std::optional<sprites::SpriteSpec>> found(m.frames);
    for (std::size_t f = 0; f < m.frames; ++f) {
      try {
        found[f] = extract_attributes(data::video_frame(video, f));
        if (*found[f] == s.spec) ++m.identity_matches;
      } catch (const ExtractionError&) {
        ++m.extraction_failures;
      }
    }
    m.appearance_mse = masked_mse(video, s.video, s.video_masks);
    auto tc = temporal_consistency(video);
    m.temporal_consistency = tc.value;
    m.degenerate = tc.degenerate;
    if (cfg.cross_video) {
      auto other = gen(s, alternate_prompt(s.prompt, rng), rng);
      for (std::size_t f = 0; f < m.frames; ++f) {
        if (!found[f]) continue;
        try {
          if (extract_attributes(data::video_frame(other, f)) == *found[f]) ++m.cross_agreements;
        } catch (const ExtractionError&) {
        }
      }
    }
    per[i] = m;
  });

  MetricReport r;
  r.variant = variant;
  std::size_t frames = 0, matches = 0, agree = 0;
  for (const auto& m : per) {
    frames += m.frames;
    matches += m.identity_matches;
    agree += m.cross_agreements;
    r.extraction_failures += m.extraction_failures;
    r.appearance_mse += m.appearance_mse;
    r.temporal_consistency += m.temporal_consistency;
  }
  r.identity_match_rate = static_cast<double>(matches) / static_cast<double>(frames);
  r.cross_video_rate = static_cast<double>(agree) / static_cast<double>(frames);
  r.appearance_mse /= static_cast<double>(n);
  r.temporal_consistency /= static_cast<double>(n);
  r.samples = std::move(per);
  r.provenance = {{"eval", to_json(cfg)}, {"data", data::to_json(ds.config)}, {"n_samples", n}};
  return r;
}

MetricReport evaluate(const train::Checkpoint& ckpt, const data::Dataset& ds, const EvalConfig& cfg) {
  auto m = train::model_from_checkpoint(ckpt);
  auto r = evaluate(model_generator(m, cfg), ds, cfg, ckpt.train_config.flags.name());
  r.provenance["model"] = model::to_json(ckpt.model_config);
  r.provenance["train"] = train::to_json(ckpt.train_config);
  r.provenance["train_data"] = data::to_json(ckpt.data_config);
  r.provenance["checkpoint_step"] = ckpt.step;
  return r;
}

const std::vector<std::string>& metric_names() {
  static const std::vector<std::string> v{"identity_match_rate", "temporal_consistency", "appearance_mse",
                                          "cross_video_rate"};
  return v;
}

double metric_value(const VariantSummary& v, const std::string& metric) {
  if (metric == "identity_match_rate") return v.identity_match_rate;
  if (metric == "temporal_consistency") return v.temporal_consistency;
  if (metric == "appearance_mse") return v.appearance_mse;
  if (metric == "cross_video_rate") return v.cross_video_rate;
  throw ConfigError("unknown metric: " + metric);
}

VariantSummary summarize(const std::string& variant, std::vector<std::uint64_t> seeds,
                         std::vector<MetricReport> reports) {
  if (reports.empty() || seeds.size() != reports.size())
    throw ConfigError("summarize: need one report per seed for " + variant);
  VariantSummary v;
  v.variant = variant;
  for (const auto& r : reports) {
    v.identity_match_rate += r.identity_match_rate;
    v.temporal_consistency += r.temporal_consistency;
    v.appearance_mse += r.appearance_mse;
    v.cross_video_rate += r.cross_video_rate;
  }
  const auto k = static_cast<double>(reports.size());
  v.identity_match_rate /= k;
  v.temporal_consistency /= k;
  v.appearance_mse /= k;
  v.cross_video_rate /= k;
  v.seeds = std::move(seeds);
  v.reports = std::move(reports);
  return v;
}

AblationReport ablation_suite(const std::vector<model::AblationFlags>& flags, const data::Dataset& train_set,
                              const data::Dataset& eval_set, const AblationOptions& opts) {
  if (flags.empty() || opts.seeds.empty()) throw ConfigError("ablation_suite: need flags and seeds");
  AblationReport out;
  for (const auto& f : flags) {
    std::vector<MetricReport> reports;
    for (auto seed : opts.seeds) {
      auto tcfg = opts.train;
      tcfg.flags = f;
      tcfg.seed = seed;
      train::Trainer tr(opts.model, tcfg, train_set);
      tr.run();
      if (opts.on_run) opts.on_run(f.name(), seed);
      auto ec = opts.eval;
      ec.seed = seed;
      auto r = evaluate(model_generator(tr.model(), ec), eval_set, ec, f.name());
      r.provenance["model"] = model::to_json(tr.model().config());
      r.provenance["train"] = train::to_json(tcfg);
      reports.push_back(std::move(r));
    }
    out.variants.push_back(summarize(f.name(), opts.seeds, std::move(reports)));
  }
  out.provenance = {{"model", model::to_json(opts.model)},
                    {"train", train::to_json(opts.train)},
                    {"eval", to_json(opts.eval)},
                    {"train_data", data::to_json(train_set.config)},
                    {"eval_data", data::to_json(eval_set.config)}};
  return out;
}

json to_json(const AblationReport& r) {
  json variants = json::array();
  for (const auto& v : r.variants) {
    json means = json::object(), deltas = json::object(), reports = json::array();
    for (const auto& m : metric_names()) {
      means[m] = metric_value(v, m);
      deltas[m] = metric_value(v, m) - metric_value(r.variants.front(), m);
    }
    for (const auto& rep : v.reports) reports.push_back(to_json(rep));
    variants.push_back(
        {{"variant", v.variant}, {"seeds", v.seeds}, {"mean", means}, {"delta", deltas}, {"reports", reports}});
  }
  return {{"variants", variants}, {"provenance", r.provenance}};
}

std::string to_csv(const AblationReport& r) {
  std::ostringstream os;
  os << "variant,metric,mean,delta,n_seeds\n";
  for (const auto& v : r.variants)
    for (const auto& m : metric_names())
      os << v.variant << ',' << m << ',' << fmt(metric_value(v, m)) << ','
         << fmt(metric_value(v, m) - metric_value(r.variants.front(), m)) << ',' << v.seeds.size() << '\n';
  return os.str();
}

std::string to_csv(const MetricReport& r) {
  auto v = summarize(r.variant, {0}, {r});
  std::ostringstream os;
  os << "variant,metric,value\n";
  for (const auto& m : metric_names()) os << r.variant << ',' << m << ',' << fmt(metric_value(v, m)) << '\n';
  return os.str();
}

void write_report(const MetricReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "report.csv", to_csv(r));
}

MetricReport read_report(const std::filesystem::path& path) {
  auto text = read_file(path.string());
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw FormatError(path.string() + ": not valid JSON");
  try {
    return metric_report_from_json(j);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_report(const AblationReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_text(dir / "report.json", to_json(r).dump(2) + "\n");
  write_text(dir / "report.csv", to_csv(r));
}

}  // namespace ctxdit::eval
