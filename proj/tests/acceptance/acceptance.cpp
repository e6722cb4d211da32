// Acceptance suite: one PASS/FAIL line per criterion. `--slow` adds the
// multi-seed ablation ordering check; without it that line reports SKIP.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ctxdit/attention.hpp"
#include "ctxdit/diffusion.hpp"
#include "ctxdit/eval.hpp"
#include "ctxdit/gradcheck.hpp"
#include "ctxdit/model.hpp"
#include "ctxdit/ops.hpp"
#include "ctxdit/rope.hpp"
#include "ctxdit/train.hpp"
#include "oracles.hpp"

using namespace ctxdit;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

double max_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return std::numeric_limits<double>::infinity();
  double m = 0;
  for (std::size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data()[i]) - b.data()[i]));
  return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.numel(); ++i)
    if (a.data()[i] != b.data()[i]) return false;
  return true;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

std::vector<double> row(const Tensor& t, std::size_t i, std::size_t width) {
  return {t.data().begin() + static_cast<std::ptrdiff_t>(i * width),
          t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * width)};
}

constexpr model::InitOptions kDense{false, false, false};

data::Prompt random_prompt(RngState& rng) {
  int body = static_cast<int>(rng.uniform_int(6));
  int acc = static_cast<int>(rng.uniform_int(4));
  int acc_color = acc == 0 ? -1 : (body + 1 + static_cast<int>(rng.uniform_int(5))) % 6;
  sprites::SpriteSpec spec{static_cast<sprites::ShapeKind>(rng.uniform_int(3)), body,
                           static_cast<sprites::Accessory>(acc), acc_color};
  return data::make_prompt(spec, rng.uniform_int(16), rng.uniform_int(8), rng.uniform_int(5));
}

// 1. Video tokens never reach the reference reconstruction.
Outcome reference_isolation() {
  double worst = 0;
  std::size_t runs = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    model::ModelConfig c;
    RngState rng(seed);
    model::Model m(c, rng, kDense);
    auto ref_image = rand_uniform(rng, {c.height, c.width, 3}, 0, 1);
    auto ref_latent = model::encode_pixels(c, ref_image);
    auto mem = model::encode_conditioning(m, random_prompt(rng), ref_image).memory();
    auto z = randn(rng, {c.n_vid_tokens(), c.latent_dim()});
    auto base = model::forward(m, ref_latent, z, 500, mem);
    for (int trial = 0; trial < 3; ++trial) {
      auto o = model::forward(m, ref_latent, randn(rng, z.shape()), 500, mem);
      worst = std::max(worst, max_diff(o.ref_recon, base.ref_recon));
      ++runs;
    }
  }
  return {worst <= 1e-10, std::to_string(runs) + " perturbations over 5 seeds, max change " + num(worst)};
}

// 2. Gap-RoPE against the standard rotary oracle.
Outcome gap_rope() {
  model::ModelConfig mc;
  const std::size_t hd = mc.model_dim / mc.n_heads;
  auto gap = rope::RopeConfig::for_head_dim(hd, 4);
  auto plain = rope::RopeConfig::for_head_dim(hd, 0);
  RngState rng(2);

  // (a) beta = 0 equals standard rotary bit-for-bit, whatever the group.
  bool reduces = true;
  for (int trial = 0; trial < 20; ++trial) {
    auto q = randn(rng, {12, 1, hd});
    std::vector<rope::TokenPosition> pos(12), std_pos(12);
    for (std::size_t i = 0; i < 12; ++i) {
      pos[i] = {static_cast<int>(rng.uniform_int(9)), static_cast<int>(rng.uniform_int(4)),
                static_cast<int>(rng.uniform_int(4)), static_cast<int>(rng.uniform_int(2))};
      std_pos[i] = pos[i];
      std_pos[i].group = 0;
    }
    reduces &= bit_equal(rope::apply_rotary(q, pos, plain), rope::apply_rotary(q, std_pos, plain));
  }

  // (b) a global frame shift leaves every pairwise dot product unchanged.
  double shift_err = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto q = randn(rng, {10, 1, hd}), k = randn(rng, {10, 1, hd});
    std::vector<rope::TokenPosition> pos(10);
    for (auto& p : pos)
      p = {static_cast<int>(rng.uniform_int(9)), static_cast<int>(rng.uniform_int(4)),
           static_cast<int>(rng.uniform_int(4)), static_cast<int>(rng.uniform_int(2))};
    auto shifted = pos;
    const int c = static_cast<int>(rng.uniform_int(100)) - 50;
    for (auto& p : shifted) p.frame_index += c;
    auto q0 = rope::apply_rotary(q, pos, gap), k0 = rope::apply_rotary(k, pos, gap);
    auto q1 = rope::apply_rotary(q, shifted, gap), k1 = rope::apply_rotary(k, shifted, gap);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j)
        shift_err = std::max(shift_err, std::abs(dot(row(q0, i, hd), row(k0, j, hd)) - dot(row(q1, i, hd), row(k1, j, hd))));
  }

  // (c) ref (frame 0, g=0) against video (frame f, g=1) equals the standard
  // rotary oracle at temporal distance f + 4.
  double gap_err = 0;
  for (int f = 0; f <= static_cast<int>(mc.frames); ++f)
    for (int trial = 0; trial < 5; ++trial) {
      auto q = randn(rng, {1, 1, hd}), k = randn(rng, {1, 1, hd});
      int y = static_cast<int>(rng.uniform_int(4)), x = static_cast<int>(rng.uniform_int(4));
      auto lib = dot(row(rope::apply_rotary(q, {{0, y, x, 0}}, gap), 0, hd),
                     row(rope::apply_rotary(k, {{f, y, x, 1}}, gap), 0, hd));
      auto qo = oracle::to_vec(q), ko = oracle::to_vec(k);
      oracle::rotate_head(qo, 0, y, x, plain);
      oracle::rotate_head(ko, f + 4, y, x, plain);
      gap_err = std::max(gap_err, std::abs(lib - dot(qo, ko)));
    }
  return {reduces && shift_err <= 1e-10 && gap_err <= 1e-10,
          std::string("beta=0 ") + (reduces ? "bit-exact" : "DIFFERS") + ", shift error " + num(shift_err) +
              ", gap error vs oracle " + num(gap_err)};
}

attn::AttentionParams dense_params(const attn::MultiHeadConfig& cfg, RngState& rng) {
  auto p = attn::init_attention_params(cfg, rng, 0.5);
  for (auto* b : {&p.bq, &p.bk, &p.bv, &p.bo}) *b = randn(rng, b->shape());
  return p;
}

// 3. The reference slice passes through emphasize-attention unchanged.
Outcome emphasize_passthrough() {
  model::ModelConfig mc;
  auto cfg = mc.attention_config();
  RngState rng(3);
  auto p = dense_params(cfg, rng);
  std::size_t identical = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::size_t n_ref = 1 + rng.uniform_int(16), n_vid = 1 + rng.uniform_int(32);
    auto x = randn(rng, {n_ref + n_vid, mc.model_dim});
    auto y = attn::emphasize_attention(x, {n_ref, n_vid}, p, cfg);
    identical += bit_equal(slice_rows(y, 0, n_ref), slice_rows(x, 0, n_ref)) ? 1 : 0;
  }
  return {identical == 100, std::to_string(identical) + "/100 reference slices bit-identical"};
}

// 4. All three attention ops against the explicit-loop oracle.
Outcome attention_oracle() {
  attn::MultiHeadConfig cfg{8, 2};
  auto rcfg = rope::RopeConfig::for_head_dim(4, 4);
  RngState rng(4);
  double worst = 0;
  std::size_t cases = 0;
  for (std::size_t n = 2; n <= 8; ++n)
    for (std::size_t n_ref = 1; n_ref < n; ++n_ref)
      for (int trial = 0; trial < 50; ++trial) {
        attn::TokenSplit split{n_ref, n - n_ref};
        auto p = dense_params(cfg, rng);
        auto x = randn(rng, {n, 8});
        auto mem = randn(rng, {1 + rng.uniform_int(8), 8});
        std::vector<rope::TokenPosition> pos(n);
        for (std::size_t i = 0; i < n; ++i)
          pos[i] = {i < n_ref ? 0 : 1 + static_cast<int>(rng.uniform_int(8)), static_cast<int>(rng.uniform_int(4)),
                    static_cast<int>(rng.uniform_int(4)), i < n_ref ? 0 : 1};
        auto rot = attn::Rotary::make(pos, pos, rcfg);
        oracle::OracleRotary orot{pos, pos, rcfg};
        auto xm = oracle::to_mat(x);
        worst = std::max(worst, oracle::max_diff(oracle::masked_self_attention(xm, n_ref, p, 2, &orot),
                                                 attn::masked_self_attention(x, split, p, cfg, &rot)));
        worst = std::max(worst, oracle::max_diff(oracle::cross_attention(xm, oracle::to_mat(mem), p, 2),
                                                 attn::cross_attention(x, mem, p, cfg)));
        worst = std::max(worst, oracle::max_diff(oracle::emphasize_attention(xm, n_ref, p, 2),
                                                 attn::emphasize_attention(x, split, p, cfg)));
        cases += 3;
      }
  return {worst <= 1e-10, std::to_string(cases) + " op evaluations over lengths 2..8, max error " + num(worst)};
}

// 5. Full-model analytic gradients against central differences.
Outcome gradient_check() {
  auto c = model::tiny_model_config();
  RngState rng(5);
  model::Model m(c, rng, kDense);
  if (m.parameter_count() > 10000) return {false, std::to_string(m.parameter_count()) + " params exceeds 10k"};
  train::EncodedSample ex;
  ex.ref_image = rand_uniform(rng, {c.height, c.width, 3}, 0, 1);
  ex.ref_latent = model::encode_pixels(c, ex.ref_image);
  ex.x0 = model::encode_pixels(c, rand_uniform(rng, {c.frames, c.height, c.width, 3}, 0, 1));
  ex.prompt = random_prompt(rng);
  auto sched = c.make_schedule();
  train::TrainConfig tc;
  auto r = finite_diff_check(
      [&] {
        RngState local(55);
        return train::sample_loss(m, ex, sched, tc, local);
      },
      m.named_parameters(), 1e-5, 1e-4, 1e-5);
  return {r.pass && r.max_rel_error < 1e-4,
          std::to_string(m.parameter_count()) + " params, max relative error " + num(r.max_rel_error)};
}

// 6. Forward-diffusion second moment.
Outcome diffusion_statistics() {
  auto sched = diffusion::make_schedule(diffusion::ScheduleKind::Cosine, 1000);
  RngState rng(6);
  const std::size_t d = 64;
  const double n = 10000;
  auto x0 = randn(rng, {d});
  double x2 = 0;
  for (auto v : x0.data()) x2 += static_cast<double>(v) * v;
  double worst = 0;
  std::ostringstream detail;
  for (std::size_t t : {1, 200, 500, 800, 999}) {
    const double ab = sched.alpha_bar[t];
    double s = 0;
    for (int i = 0; i < 10000; ++i) {
      auto z = diffusion::forward_diffuse(x0, t, randn(rng, {d}), sched);
      for (auto v : z.data()) s += static_cast<double>(v) * v;
    }
    const double expected = ab * x2 + (1 - ab) * static_cast<double>(d);
    const double se = std::sqrt((4 * ab * (1 - ab) * x2 + 2 * (1 - ab) * (1 - ab) * static_cast<double>(d)) / n);
    const double zscore = std::abs(s / n - expected) / se;
    worst = std::max(worst, zscore);
    detail << " t=" << t << ":" << num(zscore);
  }
  return {worst <= 3, "standard errors" + detail.str()};
}

// 7. Dual-guidance loss algebra on real model losses.
Outcome loss_algebra() {
  auto c = model::tiny_model_config();
  c.frames = 16;
  RngState rng(7);
  model::Model m(c, rng, kDense);
  auto sched = c.make_schedule();
  train::TrainConfig tc;
  double worst_ulps = 0;
  bool lambda_exact = true, tensor_matches = true;
  NoGradGuard no_grad;
  for (int batch = 0; batch < 100; ++batch) {
    train::EncodedSample ex;
    ex.ref_image = rand_uniform(rng, {c.height, c.width, 3}, 0, 1);
    ex.ref_latent = model::encode_pixels(c, ex.ref_image);
    ex.x0 = model::encode_pixels(c, rand_uniform(rng, {c.frames, c.height, c.width, 3}, 0, 1));
    ex.prompt = random_prompt(rng);
    diffusion::LossTerms terms;
    RngState noise(1000 + batch);
    auto loss = train::sample_loss(m, ex, sched, tc, noise, &terms);
    lambda_exact &= terms.lambda == 0.0625;
    tensor_matches &= loss.item() == terms.l_total;
    const double resid = std::abs(terms.l_total - terms.l_gen - (1.0 / 16.0) * terms.l_ref);
    const double ulp = std::nextafter(terms.l_total, std::numeric_limits<double>::infinity()) - terms.l_total;
    worst_ulps = std::max(worst_ulps, resid / ulp);
  }
  return {lambda_exact && tensor_matches && worst_ulps <= 4,
          std::string("f_v=16 lambda ") + (lambda_exact ? "== 0.0625" : "WRONG") + ", max residual " +
              num(worst_ulps) + " ulp over 100 batches"};
}

// 8. Both samplers recover a planted x0 given the exact noise predictor.
Outcome planted_noise() {
  model::ModelConfig c;
  auto sched = c.make_schedule();
  RngState rng(8);
  auto x0 = randn(rng, {c.n_vid_tokens(), c.latent_dim()});
  auto ref = randn(rng, {c.tokens_per_frame(), c.latent_dim()});
  diffusion::Denoiser oracle_eps = [&](const Tensor&, const Tensor& z, std::size_t t) {
    const double ab = sched.alpha_bar[t];
    std::vector<Scalar> e(z.numel());
    for (std::size_t i = 0; i < e.size(); ++i)
      e[i] = static_cast<Scalar>((z.data()[i] - std::sqrt(ab) * x0.data()[i]) / std::sqrt(1 - ab));
    return Tensor(z.shape(), std::move(e));
  };
  auto mse_to_x0 = [&](const Tensor& x) {
    double s = 0;
    for (std::size_t i = 0; i < x.numel(); ++i) s += std::pow(x.data()[i] - x0.data()[i], 2);
    return s / static_cast<double>(x.numel());
  };
  diffusion::SamplerOptions opts;
  auto z = randn(rng, x0.shape());
  const double ddim = mse_to_x0(diffusion::ddim_sample(oracle_eps, ref, z, sched, opts));
  RngState srng(88);
  const double anc = mse_to_x0(diffusion::ancestral_sample(oracle_eps, ref, z, sched, srng, opts));
  return {ddim <= 1e-3 && anc <= 1e-3, "MSE ddim " + num(ddim) + ", ancestral " + num(anc)};
}

data::Dataset dataset(std::size_t n, std::uint64_t seed) {
  data::GenConfig g;
  g.n_samples = n;
  g.seed = seed;
  return data::generate_dataset(g);
}

train::TrainConfig toy_train(std::size_t steps, std::uint64_t seed) {
  train::TrainConfig t;
  t.lr = 1e-3;
  t.warmup_steps = 20;
  t.batch_size = 8;
  t.total_steps = steps;
  t.seed = seed;
  return t;
}

// 9. Training smoke: loss halves within 500 steps.
Outcome training_smoke() {
  auto ds = dataset(64, 1);
  model::ModelConfig c;
  train::Trainer tr(c, toy_train(500, 0), ds);
  double early = 0, at_end = 0;
  tr.run([&](const train::StepResult& r) {
    if (r.step <= 10) early += r.loss.l_total / 10;
    if (r.step == 500) at_end = r.loss.l_total;
  });
  const double ratio = at_end / early;
  return {ratio <= 0.5, "steps 1-10 mean " + num(early) + ", step 500 " + num(at_end) + ", ratio " + num(ratio)};
}

// 10. Directional ablations over five seeds.
constexpr std::size_t kAblationSteps = 1500;

Outcome directional_ablations() {
  auto train_set = dataset(64, 1);
  auto eval_set = dataset(16, 100);
  eval::AblationOptions opts;
  opts.train = toy_train(kAblationSteps, 0);
  opts.seeds = {0, 1, 2, 3, 4};
  opts.on_run = [](const std::string& v, std::uint64_t s) {
    std::fprintf(stderr, "  trained %s seed %llu\n", v.c_str(), static_cast<unsigned long long>(s));
  };
  model::AblationFlags full, no_recon, no_gap;
  no_recon.no_recon_loss = true;
  no_gap.no_gap_rope = true;
  auto rep = eval::ablation_suite({full, no_recon, no_gap}, train_set, eval_set, opts);
  const double id_full = eval::metric_value(rep.variants[0], "identity_match_rate");
  const double id_norecon = eval::metric_value(rep.variants[1], "identity_match_rate");
  const double tc_full = eval::metric_value(rep.variants[0], "temporal_consistency");
  const double tc_nogap = eval::metric_value(rep.variants[2], "temporal_consistency");
  std::fputs(eval::to_csv(rep).c_str(), stderr);
  return {id_full >= id_norecon && tc_full >= tc_nogap,
          "identity full " + num(id_full) + " vs no_recon_loss " + num(id_norecon) + "; temporal full " +
              num(tc_full) + " vs no_gap_rope " + num(tc_nogap)};
}

// 11. Determinism and persistence.
Outcome determinism() {
  data::GenConfig g;
  g.n_samples = 8;
  g.frames = 2;
  g.seed = 11;
  auto ds = data::generate_dataset(g);
  model::ModelConfig c;
  c.frames = 2;
  auto tc = toy_train(12, 4);
  tc.batch_size = 2;
  std::vector<std::string> failures;

  auto log_of = [](train::Trainer& tr, std::size_t steps) {
    std::ostringstream os;
    for (std::size_t i = 0; i < steps; ++i) {
      auto r = tr.step();
      train::write_log_line(os, {r.step, r.loss.l_gen, r.loss.l_ref, r.loss.l_total, r.lr, 0});
    }
    return os.str();
  };
  train::Trainer a(c, tc, ds), b(c, tc, ds);
  if (log_of(a, 12) != log_of(b, 12)) failures.push_back("loss logs differ");

  train::Trainer straight(c, tc, ds), first(c, tc, ds);
  auto straight_log = log_of(straight, 12);
  auto first_log = log_of(first, 6);
  auto resumed = train::Trainer::resume(train::deserialize_checkpoint(train::serialize_checkpoint(first.checkpoint())), ds);
  if (first_log + log_of(resumed, 6) != straight_log) failures.push_back("resumed log differs");
  if (train::serialize_checkpoint(resumed.checkpoint()) != train::serialize_checkpoint(straight.checkpoint()))
    failures.push_back("resumed checkpoint differs");

  auto dir = fs::temp_directory_path() / "ctxdit_acceptance_persist";
  fs::remove_all(dir);
  data::write_dataset(ds, dir / "ds");
  auto back = data::read_dataset(dir / "ds");
  bool same = back.samples.size() == ds.samples.size() && back.config == ds.config;
  for (std::size_t i = 0; same && i < ds.samples.size(); ++i) {
    const auto &x = ds.samples[i], &y = back.samples[i];
    same = x.spec == y.spec && x.prompt == y.prompt && bit_equal(x.ref_image, y.ref_image) &&
           bit_equal(x.video, y.video) && bit_equal(x.ref_mask, y.ref_mask) && bit_equal(x.video_masks, y.video_masks);
  }
  if (!same) failures.push_back("dataset round-trip differs");

  eval::EvalConfig ec;
  ec.sampler_steps = 2;
  ec.max_samples = 2;
  auto rep = eval::evaluate(eval::model_generator(straight.model(), ec), ds, ec);
  eval::write_report(rep, dir / "report");
  if (!(eval::read_report(dir / "report" / "report.json") == rep)) failures.push_back("report round-trip differs");
  fs::remove_all(dir);

  std::string detail = failures.empty() ? "loss logs, resume, dataset and report all bit-exact" : "";
  for (const auto& f : failures) detail += (detail.empty() ? "" : "; ") + f;
  return {failures.empty(), detail};
}

// 12. Anti-copy property and attribute round-trip over 256 samples.
Outcome anti_copy() {
  auto ds = dataset(256, 12);
  std::size_t bad = 0;
  std::string first_bad;
  for (const auto& s : ds.samples) {
    std::vector<std::string> why;
    if (!(max_diff(data::video_frame(s.video, 0), s.ref_image) > 0)) why.push_back("ref equals frame 0");
    if (sprites::pose_distance(s.ref_pose, s.frame0_pose) < ds.config.min_pose_distance) why.push_back("pose");
    if (std::abs(s.ref_illum - s.scene.illumination) < ds.config.min_illum_delta) why.push_back("illumination");
    try {
      if (!(eval::extract_attributes(s.ref_image) == s.spec)) why.push_back("reference attributes");
      for (std::size_t f = 0; f < s.video.dim(0); ++f)
        if (!(eval::extract_attributes(data::video_frame(s.video, f)) == s.spec))
          why.push_back("frame " + std::to_string(f) + " attributes");
    } catch (const std::exception& e) {
      why.push_back(e.what());
    }
    if (!why.empty()) {
      if (bad++ == 0) first_bad = "sample " + std::to_string(s.index) + ": " + why.front();
    }
  }
  return {ds.samples.size() == 256 && bad == 0,
          std::to_string(ds.samples.size()) + " samples, " + std::to_string(bad) + " violations" +
              (bad ? " (" + first_bad + ")" : "")};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  bool slow;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  bool slow = false;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--slow") == 0) {
      slow = true;
    } else {
      std::fprintf(stderr, "usage: acceptance [--slow]\n");
      return 2;
    }
  }
  const std::vector<Criterion> criteria{
      {1, "reference-isolation", 10, false, reference_isolation},
      {2, "gap-rope", 5, false, gap_rope},
      {3, "emphasize-passthrough", 5, false, emphasize_passthrough},
      {4, "attention-oracle", 30, false, attention_oracle},
      {5, "gradient-check", 120, false, gradient_check},
      {6, "diffusion-statistics", 10, false, diffusion_statistics},
      {7, "loss-algebra", 5, false, loss_algebra},
      {8, "planted-noise-sampler", 30, false, planted_noise},
      {9, "training-smoke", 600, false, training_smoke},
      {10, "directional-ablations", 7200, true, directional_ablations},
      {11, "determinism-persistence", 120, false, determinism},
      {12, "anti-copy", 60, false, anti_copy},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (c.slow && !slow) {
      std::printf("SKIP %2d %-24s slow suite, run with --slow\n", c.id, c.name);
      std::fflush(stdout);
      continue;
    }
    auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::printf("%s %2d %-24s %s (%.1fs of %.0fs%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
