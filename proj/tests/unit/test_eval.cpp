#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ctxdit/eval.hpp"
#include "ctxdit/serialize.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctxdit;
using namespace ctxdit::eval;
namespace fs = std::filesystem;

namespace {

Tensor video_of(const std::vector<std::vector<Scalar>>& frames) {
  std::vector<Scalar> d;
  for (const auto& f : frames) d.insert(d.end(), f.begin(), f.end());
  return Tensor({frames.size(), frames.front().size()}, d);
}

const data::Dataset& small_dataset() {
  static const data::Dataset ds = [] {
    data::GenConfig g;
    g.n_samples = 4;
    g.frames = 2;
    g.seed = 11;
    return data::generate_dataset(g);
  }();
  return ds;
}

model::ModelConfig small_model() {
  model::ModelConfig c;
  c.frames = 2;
  c.model_dim = 16;
  c.n_heads = 2;
  c.depth = 1;
  c.sem_c1 = 4;
  c.sem_c2 = 4;
  c.timesteps = 100;
  return c;
}

}  // namespace

TEST_CASE("temporal consistency reference values") {
  CHECK(temporal_consistency(video_of({{0.3, -1.7, 2.2}, {0.3, -1.7, 2.2}, {0.3, -1.7, 2.2}})).value == 1.0);
  CHECK(temporal_consistency(video_of({{0.1, 0.2, 0.7}, {-0.1, -0.2, -0.7}})).value == -1.0);
  CHECK(temporal_consistency(video_of({{1, 0}, {0, 1}, {1, 0}, {0, 1}})).value == 0.0);
  // Hand value: cos([1, 0], [1, 1]) = 1 / sqrt(2) for both pairs.
  CHECK(std::abs(temporal_consistency(video_of({{1, 0}, {1, 1}, {1, 0}})).value - 1 / std::sqrt(2.0)) < 1e-15);

  RngState rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    auto frame = randn(rng, {5, 4, 3});
    std::vector<Scalar> d(frame.data().begin(), frame.data().end());
    auto once = d;
    d.insert(d.end(), once.begin(), once.end());
    d.insert(d.end(), once.begin(), once.end());
    CHECK(temporal_consistency(Tensor({3, 5, 4, 3}, d)).value == 1.0);
  }

  auto z = temporal_consistency(video_of({{1, 2}, {0, 0}, {1, 2}}));
  CHECK(z.degenerate);
  CHECK(z.value == 0.0);
  CHECK_THROWS_AS(temporal_consistency(video_of({{1, 2}})), ShapeError);
}

TEST_CASE("masked mse counts only subject pixels") {
  Tensor a({2, 2, 3}, {0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0});
  Tensor b({2, 2, 3}, {9, 9, 9, 0, 0, 0, 0, 0, 0, 0, 0, 0.5});
  Tensor m({2, 2}, {0, 1, 1, 0.4});
  CHECK(masked_mse(a, b, m) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(std::isnan(masked_mse(a, b, Tensor({2, 2}, {0, 0, 0, 0}))));
  CHECK_THROWS_AS(masked_mse(a, b, Tensor({3}, {1, 1, 1})), ShapeError);
}

TEST_CASE("extractor recovers every spec from clean renders") {
  RngState rng(21);
  std::size_t n = 0;
  for (int shape = 0; shape < 3; ++shape)
    for (int body = 0; body < 6; ++body)
      for (int acc = 0; acc < 4; ++acc)
        for (int ac = 0; ac < 6; ++ac) {
          if (acc == 0 && ac != 0) continue;
          if (acc != 0 && ac == body) continue;
          sprites::SpriteSpec spec{static_cast<sprites::ShapeKind>(shape), body, static_cast<sprites::Accessory>(acc),
                                   acc == 0 ? -1 : ac};
          auto bg = static_cast<int>(rng.uniform_int(sprites::kNumBackgrounds));
          auto light = sprites::light_level(rng.uniform_int(sprites::kNumLightLevels));
          sprites::Pose pose{12 + 8 * rng.uniform(), 12 + 8 * rng.uniform(), sprites::base_radius(32, 32)};
          auto fr = sprites::render_frame(spec, pose, bg, light, 32, 32);
          CHECK(extract_attributes(fr.image) == spec);
          CHECK(extract_attributes(fr.image, fr.mask) == spec);
          ++n;
        }
  CHECK(n == 3 * 6 * (1 + 3 * 5));
}

TEST_CASE("extractor is illumination invariant") {
  for (int shape = 0; shape < 3; ++shape)
    for (int acc = 0; acc < 4; ++acc) {
      sprites::SpriteSpec spec{static_cast<sprites::ShapeKind>(shape), (shape + acc) % 6,
                               static_cast<sprites::Accessory>(acc), acc == 0 ? -1 : (shape + acc + 2) % 6};
      sprites::Pose pose{15.5, 16.5, sprites::base_radius(32, 32)};
      for (int bg = 0; bg < 8; ++bg) {
        auto dim = sprites::render_frame(spec, pose, bg, 0.5, 32, 32);
        auto bright = sprites::render_frame(spec, pose, bg, 1.5, 32, 32);
        CHECK(extract_attributes(dim.image) == extract_attributes(bright.image));
        CHECK(extract_attributes(dim.image) == spec);
      }
    }
}

TEST_CASE("blank or flat frames raise ExtractionError") {
  CHECK_THROWS_AS(extract_attributes(Tensor::zeros({32, 32, 3})), ExtractionError);
  CHECK_THROWS_AS(extract_attributes(Tensor::full({32, 32, 3}, 0.3)), ExtractionError);
}

TEST_CASE("alternate prompt changes only the later-frame scene") {
  RngState rng(2);
  for (const auto& s : small_dataset().samples) {
    auto q = alternate_prompt(s.prompt, rng);
    CHECK(q.first == s.prompt.first);
    CHECK(q.later[0] == s.prompt.later[0]);
    CHECK(q.later[1] != s.prompt.later[1]);
    CHECK(q.later[2] != s.prompt.later[2]);
    CHECK(q.later[3] < sprites::kNumLightLevels);
  }
}

TEST_CASE("oracle generator scores perfectly") {
  const auto& ds = small_dataset();
  EvalConfig cfg;
  auto r = evaluate(oracle_generator(ds.config), ds, cfg, "oracle");
  CHECK(r.identity_match_rate == 1.0);
  CHECK(r.cross_video_rate == 1.0);
  CHECK(r.appearance_mse == 0.0);
  CHECK(r.extraction_failures == 0);
  CHECK(r.temporal_consistency > 0.5);
  CHECK(r.temporal_consistency <= 1.0);
  CHECK(r.samples.size() == ds.samples.size());
}

TEST_CASE("untrained model is evaluated without crashing and deterministically") {
  const auto& ds = small_dataset();
  RngState init(3);
  model::Model m(small_model(), init, {false, false, false});
  EvalConfig cfg;
  cfg.sampler_steps = 3;
  cfg.max_samples = 2;
  const char* old = std::getenv("CONTEXT_DIT_THREADS");
  std::string saved = old ? old : "";
  setenv("CONTEXT_DIT_THREADS", "1", 1);
  auto a = evaluate(model_generator(m, cfg), ds, cfg);
  setenv("CONTEXT_DIT_THREADS", "3", 1);
  auto b = evaluate(model_generator(m, cfg), ds, cfg);
  if (old)
    setenv("CONTEXT_DIT_THREADS", saved.c_str(), 1);
  else
    unsetenv("CONTEXT_DIT_THREADS");
  CHECK(a == b);
  CHECK(a.samples.size() == 2);
  for (double v : {a.identity_match_rate, a.cross_video_rate}) {
    CHECK(v >= 0);
    CHECK(v <= 1);
  }
  CHECK(a.temporal_consistency >= -1);
  CHECK(a.temporal_consistency <= 1);
  CHECK(std::isfinite(a.appearance_mse));
  cfg.seed = 1;
  CHECK_FALSE(evaluate(model_generator(m, cfg), ds, cfg) == a);
}

TEST_CASE("report json round-trips losslessly") {
  const auto& ds = small_dataset();
  RngState init(5);
  model::Model m(small_model(), init, {false, false, false});
  EvalConfig cfg;
  cfg.sampler_steps = 2;
  cfg.max_samples = 2;
  auto r = evaluate(model_generator(m, cfg), ds, cfg, "probe");
  r.temporal_consistency = 0.1 + 0.2;
  auto back = metric_report_from_json(nlohmann::json::parse(to_json(r).dump()));
  CHECK(back == r);

  auto dir = fs::temp_directory_path() / "ctxdit_test_report";
  fs::remove_all(dir);
  write_report(r, dir);
  CHECK(read_report(dir / "report.json") == r);
  std::ifstream csv(dir / "report.csv");
  std::string line;
  std::size_t rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 1 + metric_names().size());
  std::ofstream(dir / "bad.json") << "{\"variant\": 3}";
  CHECK_THROWS_AS(read_report(dir / "bad.json"), FormatError);
  fs::remove_all(dir);
}

TEST_CASE("ablation suite is deterministic and reports deltas") {
  const auto& ds = small_dataset();
  AblationOptions opts;
  opts.model = small_model();
  opts.train.total_steps = 2;
  opts.train.batch_size = 2;
  opts.eval.sampler_steps = 2;
  opts.eval.max_samples = 1;
  opts.seeds = {0, 1};
  model::AblationFlags full, norecon;
  norecon.no_recon_loss = true;
  auto rep = ablation_suite({full, full, norecon}, ds, ds, opts);
  REQUIRE(rep.variants.size() == 3);
  CHECK(rep.variants[0].variant == "full");
  CHECK(rep.variants[2].variant == "no_recon_loss");
  CHECK(rep.variants[0].reports == rep.variants[1].reports);
  CHECK(rep.variants[0].reports.size() == 2);
  auto j = to_json(rep);
  CHECK(j["variants"][1]["delta"]["identity_match_rate"] == 0.0);
  auto csv = to_csv(rep);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(1 + 3 * metric_names().size()));
  auto mean = (rep.variants[2].reports[0].temporal_consistency + rep.variants[2].reports[1].temporal_consistency) / 2;
  CHECK(metric_value(rep.variants[2], "temporal_consistency") == mean);
}
