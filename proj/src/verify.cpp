#include "ctxdit/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "ctxdit/attention.hpp"
#include "ctxdit/codec.hpp"
#include "ctxdit/data.hpp"
#include "ctxdit/diffusion.hpp"
#include "ctxdit/eval.hpp"
#include "ctxdit/gradcheck.hpp"
#include "ctxdit/model.hpp"
#include "ctxdit/ops.hpp"
#include "ctxdit/rope.hpp"
#include "ctxdit/train.hpp"

namespace ctxdit::verify {

namespace {

struct Failure {
  std::string what;
};

void expect(bool cond, const std::string& what) {
  if (!cond) throw Failure{what};
}

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

Tensor leaf(RngState& rng, Shape shape) {
  auto t = randn(rng, std::move(shape));
  return Tensor(t.shape(), std::vector<Scalar>(t.data().begin(), t.data().end()), true);
}

Tensor readout(const Tensor& y, std::uint64_t seed) {
  RngState rng(seed);
  return sum(mul(y, randn(rng, y.shape())));
}

Tensor with_rows(const Tensor& x, std::size_t begin, std::size_t end, RngState& rng) {
  std::vector<Scalar> d(x.data().begin(), x.data().end());
  const std::size_t c = x.dim(1);
  for (std::size_t i = begin * c; i < end * c; ++i) d[i] = static_cast<Scalar>(rng.normal());
  return Tensor(x.shape(), std::move(d));
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

const data::Dataset& small_dataset() {
  static const data::Dataset ds = [] {
    data::GenConfig g;
    g.n_samples = 6;
    g.frames = 2;
    g.seed = 7;
    return data::generate_dataset(g);
  }();
  return ds;
}

constexpr model::InitOptions kDense{false, false, false};

// Tiny-model inputs: reference image, latents and a prompt.
struct ModelInputs {
  Tensor ref_image, ref_latent, z_t;
  data::Prompt prompt;
};

ModelInputs model_inputs(const model::ModelConfig& c, std::uint64_t seed) {
  RngState rng(seed);
  ModelInputs in;
  in.ref_image = rand_uniform(rng, {c.height, c.width, 3}, 0, 1);
  in.ref_latent = model::encode_pixels(c, in.ref_image);
  in.z_t = randn(rng, {c.n_vid_tokens(), c.latent_dim()});
  in.prompt = data::make_prompt({sprites::ShapeKind::Square, 2, sprites::Accessory::Hat, 4}, 3, 1, 2);
  return in;
}

// ---- tensor-core ----

std::string op_gradients() {
  RngState rng(101);
  auto a = leaf(rng, {3, 4}), b = leaf(rng, {3, 4}), w = leaf(rng, {4, 2}), g = leaf(rng, {4});
  auto img = leaf(rng, {5, 5, 2}), table = leaf(rng, {4, 3});
  auto pos = [](const Tensor& x) { return add(mul(x, x), Scalar(1)); };
  std::vector<std::pair<std::string, std::function<Tensor()>>> cases{
      {"add/sub", [&] { return readout(sub(add(a, b), scale(a, Scalar(0.5))), 1); }},
      {"mul/div", [&] { return readout(div(mul(a, b), pos(b)), 2); }},
      {"exp/log", [&] { return readout(add(exp(scale(a, 0.3)), log(pos(b))), 3); }},
      {"sqrt/tanh", [&] { return readout(add(sqrt(pos(a)), tanh(b)), 4); }},
      {"gelu/silu", [&] { return readout(add(gelu(a), silu(b)), 5); }},
      {"matmul/transpose", [&] { return readout(transpose(matmul(a, w)), 6); }},
      {"softmax", [&] { return readout(softmax_lastdim(a), 7); }},
      {"layernorm", [&] { return readout(layernorm(a, g, g), 8); }},
      {"mean/mse", [&] { return add(mean(mul(a, a)), mse(a, b)); }},
      {"slice/concat", [&] { return readout(concat_rows({slice_rows(a, 1, 3), slice_cols(b, 0, 4)}), 9); }},
      {"reshape/heads", [&] { return readout(merge_heads(split_heads(reshape(a, {3, 4}), 2)), 10); }},
      {"repeat_rows", [&] { return readout(repeat_rows(slice_rows(a, 0, 1), 3), 11); }},
      {"im2col", [&] { return readout(im2col(img, 3, 2, 1), 12); }},
      {"embedding", [&] { return readout(embedding(table, {2, 0, 2, 3}), 13); }},
  };
  double worst = 0;
  for (const auto& [name, f] : cases) {
    auto r = finite_diff_check(f, std::vector<Tensor>{a, b, w, g, img, table}, 1e-5, 1e-6);
    worst = std::max(worst, r.max_rel_error);
    expect(r.pass, name + " relative error " + num(r.max_rel_error));
  }
  return std::to_string(cases.size()) + " op groups, max rel err " + num(worst);
}

std::string softmax_rows() {
  RngState rng(102);
  auto x = randn(rng, {6, 7});
  std::vector<std::uint8_t> allowed(42, 1);
  for (std::size_t i = 0; i < 42; i += 3) allowed[i] = 0;
  for (std::size_t r = 0; r < 6; ++r) allowed[r * 7 + 1] = 1;
  auto y = softmax_lastdim(mask_fill(x, allowed, 6, 7));
  double worst = 0;
  for (std::size_t r = 0; r < 6; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      double v = y.data()[r * 7 + c];
      if (!allowed[r * 7 + c]) expect(v == 0, "masked entry is not exactly 0");
      s += v;
    }
    worst = std::max(worst, std::abs(s - 1));
  }
  expect(worst <= 1e-12, "row sum error " + num(worst));
  return "max |row sum - 1| " + num(worst);
}

std::string rng_determinism() {
  RngState a(42), b(42);
  expect(bit_equal(randn(a, {64}), randn(b, {64})), "same seed gave different tensors");
  expect(bit_equal(randn(a, {8}), randn(b, {8})), "continued streams diverged");
  RngState c(42), d(43);
  expect(!bit_equal(randn(c, {8}), randn(d, {8})), "different seeds gave identical tensors");
  RngState e(9, 100), f(9);
  for (int i = 0; i < 100; ++i) f.next_u64();
  expect(e.next_u64() == f.next_u64(), "position restore differs from advancing");
  return "seeded streams bit-identical";
}

std::string matmul_identity() {
  RngState rng(103);
  auto m = randn(rng, {5, 7});
  double err = std::max(max_diff(matmul(Tensor::eye(5), m), m), max_diff(matmul(m, Tensor::eye(7)), m));
  expect(err <= 1e-12, "I M differs from M by " + num(err));
  return "max error " + num(err);
}

// ---- rope ----

std::vector<double> pair_dots(const Tensor& q, const Tensor& k, std::size_t hd) {
  std::size_t n = q.numel() / hd;
  std::vector<double> out;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t c = 0; c < hd; ++c) s += static_cast<double>(q.data()[i * hd + c]) * k.data()[j * hd + c];
      out.push_back(s);
    }
  return out;
}

std::vector<rope::TokenPosition> random_positions(RngState& rng, std::size_t n) {
  std::vector<rope::TokenPosition> p(n);
  for (auto& t : p)
    t = {static_cast<int>(rng.uniform_int(9)), static_cast<int>(rng.uniform_int(4)),
         static_cast<int>(rng.uniform_int(4)), static_cast<int>(rng.uniform_int(2))};
  return p;
}

std::string rope_shift_invariance() {
  RngState rng(201);
  auto cfg = rope::RopeConfig::for_head_dim(8, 4);
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto q = randn(rng, {6, 1, 8}), k = randn(rng, {6, 1, 8});
    auto pos = random_positions(rng, 6);
    auto shifted = pos;
    int c = static_cast<int>(rng.uniform_int(50)) - 25;
    for (auto& p : shifted) p.frame_index += c;
    auto d0 = pair_dots(rope::apply_rotary(q, pos, cfg), rope::apply_rotary(k, pos, cfg), 8);
    auto d1 = pair_dots(rope::apply_rotary(q, shifted, cfg), rope::apply_rotary(k, shifted, cfg), 8);
    for (std::size_t i = 0; i < d0.size(); ++i) worst = std::max(worst, std::abs(d0[i] - d1[i]));
  }
  expect(worst <= 1e-10, "dot products moved by " + num(worst));
  return "max change " + num(worst);
}

std::string rope_gap() {
  RngState rng(202);
  auto gap = rope::RopeConfig::for_head_dim(8, 4);
  auto plain = rope::RopeConfig::for_head_dim(8, 0);
  double worst = 0;
  for (int f = 0; f < 8; ++f) {
    auto q = randn(rng, {1, 1, 8}), k = randn(rng, {1, 1, 8});
    int y = static_cast<int>(rng.uniform_int(4)), x = static_cast<int>(rng.uniform_int(4));
    double a = pair_dots(rope::apply_rotary(q, {{0, y, x, 0}}, gap), rope::apply_rotary(k, {{f, y, x, 1}}, gap), 8)[0];
    double b =
        pair_dots(rope::apply_rotary(q, {{0, y, x, 0}}, plain), rope::apply_rotary(k, {{f + 4, y, x, 0}}, plain), 8)[0];
    worst = std::max(worst, std::abs(a - b));
  }
  expect(worst <= 1e-10, "gap dot products differ by " + num(worst));
  return "beta 4, max difference " + num(worst);
}

std::string rope_reduction() {
  RngState rng(203);
  auto cfg = rope::RopeConfig::for_head_dim(8, 0);
  auto q = randn(rng, {10, 2, 8});
  auto pos = random_positions(rng, 10);
  auto plain = pos;
  for (auto& p : plain) p.group = 0;
  expect(bit_equal(rope::apply_rotary(q, pos, cfg), rope::apply_rotary(q, plain, cfg)),
         "beta 0 output differs from standard rotary");
  return "bit-equal";
}

std::string rope_isometry() {
  RngState rng(204);
  auto cfg = rope::RopeConfig::for_head_dim(8, 4);
  auto q = randn(rng, {10, 2, 8});
  auto r = rope::apply_rotary(q, random_positions(rng, 10), cfg);
  double worst = 0;
  for (std::size_t i = 0; i < q.numel(); i += 2) {
    double n0 = std::hypot(static_cast<double>(q.data()[i]), static_cast<double>(q.data()[i + 1]));
    double n1 = std::hypot(static_cast<double>(r.data()[i]), static_cast<double>(r.data()[i + 1]));
    worst = std::max(worst, std::abs(n0 - n1));
  }
  expect(worst <= 1e-12, "pair norm changed by " + num(worst));
  return "max norm change " + num(worst);
}

// ---- attention ----

attn::AttentionParams dense_params(const attn::MultiHeadConfig& cfg, RngState& rng) {
  auto p = attn::init_attention_params(cfg, rng, 0.5);
  for (auto* b : {&p.bq, &p.bk, &p.bv, &p.bo}) *b = randn(rng, b->shape());
  return p;
}

std::vector<rope::TokenPosition> layout(const attn::TokenSplit& split) {
  std::vector<rope::TokenPosition> pos;
  for (std::size_t i = 0; i < split.n_ref; ++i) pos.push_back({0, static_cast<int>(i), 0, 0});
  for (std::size_t i = 0; i < split.n_vid; ++i)
    pos.push_back({1 + static_cast<int>(i / 2), static_cast<int>(i % 2), 1, 1});
  return pos;
}

std::string masked_attention_isolation(bool sabotage) {
  attn::MultiHeadConfig cfg{8, 2};
  RngState rng(301);
  auto p = dense_params(cfg, rng);
  attn::TokenSplit split{3, 5};
  auto pos = layout(split);
  auto rot = attn::Rotary::make(pos, pos, rope::RopeConfig::for_head_dim(4, 4));
  double worst = 0;
  for (int trial = 0; trial < 20; ++trial) {
    auto x = randn(rng, {8, 8});
    auto base = attn::masked_self_attention(x, split, p, cfg, &rot, !sabotage);
    auto out = attn::masked_self_attention(with_rows(x, 3, 8, rng), split, p, cfg, &rot, !sabotage);
    worst = std::max(worst, max_diff(slice_rows(out, 0, 3), slice_rows(base, 0, 3)));
  }
  expect(worst <= 1e-12, "reference slice moved by " + num(worst));
  return "max change " + num(worst);
}

std::string emphasize_passthrough() {
  attn::MultiHeadConfig cfg{8, 2};
  RngState rng(302);
  auto p = dense_params(cfg, rng);
  attn::TokenSplit split{3, 4};
  for (int trial = 0; trial < 100; ++trial) {
    auto x = randn(rng, {7, 8});
    auto y = attn::emphasize_attention(x, split, p, cfg);
    expect(bit_equal(slice_rows(y, 0, 3), slice_rows(x, 0, 3)), "reference slice changed");
    expect(max_diff(slice_rows(y, 3, 7), slice_rows(x, 3, 7)) > 0, "video slice not updated");
  }
  return "100 inputs bit-equal";
}

std::string attention_row_stochastic() {
  attn::MultiHeadConfig cfg{8, 2};
  RngState rng(303);
  auto p = dense_params(cfg, rng);
  attn::TokenSplit split{3, 5};
  auto mask = attn::build_ref_video_mask(split);
  auto x = randn(rng, {8, 8});
  auto w = attn::attention_weights(x, x, p, cfg, &mask);
  double worst = 0;
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t q = 0; q < 8; ++q) {
      double s = 0;
      for (std::size_t k = 0; k < 8; ++k) {
        double v = w.data()[(h * 8 + q) * 8 + k];
        if (!mask.allows(q, k)) expect(v == 0, "blocked weight is not exactly 0");
        s += v;
      }
      worst = std::max(worst, std::abs(s - 1));
    }
  expect(worst <= 1e-12, "row sum error " + num(worst));
  return "max |row sum - 1| " + num(worst);
}

// Explicit-loop multi-head attention, no rotary.
std::vector<double> loop_attention(const Tensor& qi, const Tensor& kvi, const attn::AttentionParams& p,
                                   std::size_t heads, const std::function<bool(std::size_t, std::size_t)>& allowed) {
  const std::size_t nq = qi.dim(0), nk = kvi.dim(0), d = qi.dim(1), hd = d / heads;
  auto proj = [d](const Tensor& x, const Tensor& w, const Tensor& b) {
    std::size_t n = x.dim(0);
    std::vector<double> y(n * d);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d; ++j) {
        double s = b.data()[j];
        for (std::size_t c = 0; c < d; ++c) s += static_cast<double>(x.data()[i * d + c]) * w.data()[c * d + j];
        y[i * d + j] = s;
      }
    return y;
  };
  auto q = proj(qi, p.wq, p.bq), k = proj(kvi, p.wk, p.bk), v = proj(kvi, p.wv, p.bv);
  std::vector<double> o(nq * d, 0);
  for (std::size_t h = 0; h < heads; ++h)
    for (std::size_t i = 0; i < nq; ++i) {
      std::vector<double> s(nk, 0);
      double mx = -std::numeric_limits<double>::infinity(), z = 0;
      for (std::size_t j = 0; j < nk; ++j) {
        if (!allowed(i, j)) continue;
        for (std::size_t c = 0; c < hd; ++c) s[j] += q[i * d + h * hd + c] * k[j * d + h * hd + c];
        s[j] /= std::sqrt(static_cast<double>(hd));
        mx = std::max(mx, s[j]);
      }
      for (std::size_t j = 0; j < nk; ++j) {
        s[j] = allowed(i, j) ? std::exp(s[j] - mx) : 0;
        z += s[j];
      }
      for (std::size_t j = 0; j < nk; ++j)
        for (std::size_t c = 0; c < hd; ++c) o[i * d + h * hd + c] += s[j] / z * v[j * d + h * hd + c];
    }
  std::vector<double> out(nq * d);
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t j = 0; j < d; ++j) {
      double s = p.bo.data()[j];
      for (std::size_t c = 0; c < d; ++c) s += o[i * d + c] * p.wo.data()[c * d + j];
      out[i * d + j] = s;
    }
  return out;
}

double diff_vs(const Tensor& t, const std::vector<double>& ref) {
  double m = 0;
  for (std::size_t i = 0; i < ref.size(); ++i) m = std::max(m, std::abs(static_cast<double>(t.data()[i]) - ref[i]));
  return m;
}

std::string attention_oracle() {
  attn::MultiHeadConfig cfg{8, 2};
  RngState rng(304);
  double worst = 0;
  auto all = [](std::size_t, std::size_t) { return true; };
  for (int trial = 0; trial < 20; ++trial) {
    auto p = dense_params(cfg, rng);
    std::size_t n_ref = 1 + rng.uniform_int(3), n_vid = 1 + rng.uniform_int(8 - n_ref);
    attn::TokenSplit split{n_ref, n_vid};
    const std::size_t n = split.total();
    auto x = randn(rng, {n, 8});
    auto mem = randn(rng, {1 + rng.uniform_int(8), 8});

    auto self = loop_attention(x, x, p, 2, [n_ref](std::size_t q, std::size_t k) { return !(q < n_ref && k >= n_ref); });
    for (std::size_t i = 0; i < self.size(); ++i) self[i] += x.data()[i];
    worst = std::max(worst, diff_vs(attn::masked_self_attention(x, split, p, cfg, nullptr), self));

    auto cross = loop_attention(x, mem, p, 2, all);
    for (std::size_t i = 0; i < cross.size(); ++i) cross[i] += x.data()[i];
    worst = std::max(worst, diff_vs(attn::cross_attention(x, mem, p, cfg), cross));

    auto ref = slice_rows(x, 0, n_ref), vid = slice_rows(x, n_ref, n);
    auto emph = loop_attention(vid, ref, p, 2, all);
    std::vector<double> full(ref.data().begin(), ref.data().end());
    for (std::size_t i = 0; i < emph.size(); ++i) full.push_back(emph[i] + vid.data()[i]);
    worst = std::max(worst, diff_vs(attn::emphasize_attention(x, split, p, cfg), full));
  }
  expect(worst <= 1e-10, "kernels differ from the loop oracle by " + num(worst));
  return "3 ops x 20 trials, max error " + num(worst);
}

std::string attention_gradients() {
  attn::MultiHeadConfig cfg{4, 2};
  RngState rng(305);
  auto p = attn::init_attention_params(cfg, rng, 0.5);
  attn::TokenSplit split{2, 3};
  auto pos = layout(split);
  auto rot = attn::Rotary::make(pos, pos, rope::RopeConfig::for_head_dim(2, 4));
  auto x = leaf(rng, {5, 4}), mem = leaf(rng, {3, 4});
  auto params = p.named("attn");
  params.push_back({"x", x});
  params.push_back({"mem", mem});
  auto r = finite_diff_check(
      [&] {
        auto y = attn::masked_self_attention(x, split, p, cfg, &rot);
        y = attn::cross_attention(y, mem, p, cfg);
        return readout(attn::emphasize_attention(y, split, p, cfg), 31);
      },
      params, 1e-5, 1e-4, 1e-8);
  expect(r.pass, "max relative error " + num(r.max_rel_error));
  return "max rel err " + num(r.max_rel_error);
}

// ---- diffusion ----

std::string diffusion_limits() {
  RngState rng(401);
  auto x0 = randn(rng, {4, 6}), eps = randn(rng, {4, 6});
  expect(bit_equal(diffusion::forward_diffuse(x0, 1.0, eps), x0), "alpha_bar 1 does not return x0");
  expect(bit_equal(diffusion::forward_diffuse(x0, 0.0, eps), eps), "alpha_bar 0 does not return eps");
  return "exact at both ends";
}

std::string variance_preservation() {
  auto sched = diffusion::make_schedule(diffusion::ScheduleKind::Cosine, 1000);
  RngState rng(402);
  auto x0 = randn(rng, {16});
  double x2 = 0;
  for (auto v : x0.data()) x2 += static_cast<double>(v) * v;
  const double d = 16, n = 10000;
  double worst = 0;
  for (std::size_t t : {0, 250, 500, 750, 999}) {
    double ab = sched.alpha_bar[t], s = 0;
    for (int i = 0; i < 10000; ++i) {
      auto z = diffusion::forward_diffuse(x0, t, randn(rng, {16}), sched);
      for (auto v : z.data()) s += static_cast<double>(v) * v;
    }
    double expected = ab * x2 + (1 - ab) * d;
    double se = std::sqrt((4 * ab * (1 - ab) * x2 + 2 * (1 - ab) * (1 - ab) * d) / n);
    double z = se > 0 ? std::abs(s / n - expected) / se : std::abs(s / n - expected) / 1e-12;
    worst = std::max(worst, z);
    expect(z <= 3, "t=" + std::to_string(t) + " off by " + num(z) + " standard errors");
  }
  return "5 timesteps, worst " + num(worst) + " standard errors";
}

std::string loss_algebra() {
  RngState rng(403);
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    double g = rng.uniform() * 3, r = rng.uniform() * 3;
    int fv = 1 + static_cast<int>(rng.uniform_int(16));
    auto lt = diffusion::total_loss(g, r, 1, fv);
    expect(lt.lambda == 1.0 / fv, "lambda is not 1/f_v");
    double resid = std::abs(lt.l_total - lt.l_gen - lt.lambda * lt.l_ref);
    double ulp = std::nextafter(lt.l_total, std::numeric_limits<double>::infinity()) - lt.l_total;
    worst = std::max(worst, resid / ulp);
    expect(resid <= 4 * ulp, "residual " + num(resid));
  }
  expect(diffusion::total_loss(1, 1, 1, 16).lambda == 0.0625, "lambda(f_v=16) != 0.0625");
  return "max residual " + num(worst) + " ulp";
}

std::string sampler_reference_clean() {
  auto sched = diffusion::make_schedule(diffusion::ScheduleKind::Cosine, 50);
  RngState rng(404);
  auto ref = randn(rng, {2, 3});
  auto before = ref.clone();
  auto z = randn(rng, {4, 3});
  std::size_t calls = 0;
  diffusion::Denoiser den = [&](const Tensor& r, const Tensor& zt, std::size_t) {
    ++calls;
    expect(bit_equal(r, before), "denoiser received a modified reference");
    return scale(zt, Scalar(0.1));
  };
  diffusion::SamplerOptions opts;
  opts.steps = 10;
  diffusion::ddim_sample(den, ref, z, sched, opts);
  RngState srng(5);
  diffusion::ancestral_sample(den, ref, z, sched, srng, opts);
  expect(calls == 20, "unexpected denoiser call count");
  expect(bit_equal(ref, before), "reference latent modified");
  return "reference unchanged over 20 denoiser calls";
}

std::string model_gradients() {
  auto c = model::tiny_model_config();
  RngState rng(405);
  model::Model m(c, rng, kDense);
  auto in = model_inputs(c, 406);
  train::EncodedSample ex{in.ref_image, in.ref_latent, model::encode_pixels(c, rand_uniform(rng, {c.frames, c.height, c.width, 3}, 0, 1)),
                          in.prompt};
  auto sched = c.make_schedule();
  train::TrainConfig tc;
  auto r = finite_diff_check(
      [&] {
        RngState local(407);
        return train::sample_loss(m, ex, sched, tc, local);
      },
      m.named_parameters(), 1e-5, 1e-4, 1e-5);
  expect(r.pass, "max relative error " + num(r.max_rel_error));
  return std::to_string(m.parameter_count()) + " params, max rel err " + num(r.max_rel_error);
}

// ---- model ----

std::string reference_isolation(bool sabotage) {
  double worst = 0;
  for (auto c : {model::tiny_model_config(), small_model()}) {
    c.use_ref_mask = !sabotage;
    RngState rng(501);
    model::Model m(c, rng, kDense);
    auto in = model_inputs(c, 502);
    auto mem = model::encode_conditioning(m, in.prompt, in.ref_image).memory();
    auto base = model::forward(m, in.ref_latent, in.z_t, 17, mem);
    RngState prng(503);
    for (int trial = 0; trial < 3; ++trial) {
      auto o = model::forward(m, in.ref_latent, randn(prng, in.z_t.shape()), prng.uniform_int(c.timesteps), mem);
      worst = std::max(worst, max_diff(o.ref_recon, base.ref_recon));
    }
  }
  expect(worst <= 1e-10, "ref_recon moved by " + num(worst) + " under video-token changes");
  return "max change " + num(worst);
}

std::string codec_isometry() {
  RngState rng(504);
  double worst = 0;
  for (std::size_t p : {2, 4, 8}) {
    auto x = randn(rng, {2, 16, 16, 3});
    auto z = codec::encode_latent(x, p);
    worst = std::max(worst, max_diff(codec::decode_latent(z, x.shape(), p), x));
    double nx = 0, nz = 0;
    for (auto v : x.data()) nx += static_cast<double>(v) * v;
    for (auto v : z.data()) nz += static_cast<double>(v) * v;
    worst = std::max(worst, std::abs(nx - nz) / nx);
  }
  expect(worst <= 1e-12, "codec round-trip or norm error " + num(worst));
  return "max error " + num(worst);
}

std::string identity_at_init() {
  auto c = model::tiny_model_config();
  c.ref_skip = true;
  RngState rng(505);
  model::Model m(c, rng);
  auto in = model_inputs(c, 506);
  auto mem = model::encode_conditioning(m, in.prompt, in.ref_image).memory();
  auto o = model::forward(m, in.ref_latent, in.z_t, 40, mem);
  expect(bit_equal(o.ref_recon, in.ref_latent), "ref_recon differs from ref_latent");
  for (auto v : o.eps_pred.data()) expect(v == 0, "eps_pred is not exactly zero");
  return "(ref_latent, 0) exactly";
}

std::string parameter_count() {
  for (auto base : {model::tiny_model_config(), small_model(), model::ModelConfig{}}) {
    for (int mask = 0; mask < 16; ++mask) {
      model::AblationFlags f{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, (mask & 8) != 0};
      auto cfg = model::apply_ablations(base, f);
      RngState rng(507);
      model::Model m(cfg, rng);
      expect(m.parameter_count() == model::expected_parameter_count(cfg), "count mismatch for " + f.name());
    }
  }
  return "48 configs match the closed form";
}

// ---- data ----

std::string anti_copy() {
  const auto& ds = small_dataset();
  for (const auto& s : ds.samples) {
    auto frame0 = data::video_frame(s.video, 0);
    expect(max_diff(frame0, s.ref_image) > 0, "reference equals frame 0");
    expect(sprites::pose_distance(s.ref_pose, s.frame0_pose) >= ds.config.min_pose_distance, "pose too close");
    expect(std::abs(s.ref_illum - s.scene.illumination) >= ds.config.min_illum_delta, "illumination too close");
  }
  return std::to_string(ds.samples.size()) + " samples";
}

std::string identity_preservation() {
  const auto& ds = small_dataset();
  for (const auto& s : ds.samples) {
    expect(eval::extract_attributes(s.ref_image) == s.spec, "reference of sample " + std::to_string(s.index));
    for (std::size_t f = 0; f < s.video.dim(0); ++f)
      expect(eval::extract_attributes(data::video_frame(s.video, f)) == s.spec,
             "frame " + std::to_string(f) + " of sample " + std::to_string(s.index));
  }
  return std::to_string(ds.samples.size()) + " samples, every frame";
}

bool same_dataset(const data::Dataset& a, const data::Dataset& b) {
  if (a.samples.size() != b.samples.size() || !(a.config == b.config)) return false;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto &x = a.samples[i], &y = b.samples[i];
    if (!(x.spec == y.spec) || !(x.prompt == y.prompt) || !bit_equal(x.ref_image, y.ref_image) ||
        !bit_equal(x.video, y.video) || !bit_equal(x.ref_mask, y.ref_mask) || !bit_equal(x.video_masks, y.video_masks))
      return false;
  }
  return true;
}

std::string dataset_determinism() {
  data::GenConfig g = small_dataset().config;
  expect(same_dataset(data::generate_dataset(g), small_dataset()), "regenerated dataset differs");
  g.seed += 1;
  expect(!same_dataset(data::generate_dataset(g), small_dataset()), "different seed gave the same dataset");
  return "bit-identical regeneration";
}

std::string dataset_round_trip() {
  auto dir = std::filesystem::temp_directory_path() /
             ("ctxdit_verify_" + std::to_string(std::chrono::steady_clock::now().time_since_epoch().count()));
  data::write_dataset(small_dataset(), dir);
  bool same = false;
  try {
    same = same_dataset(data::read_dataset(dir), small_dataset());
  } catch (...) {
    std::filesystem::remove_all(dir);
    throw;
  }
  std::filesystem::remove_all(dir);
  expect(same, "dataset changed through write/read");
  return "bit-exact";
}

// ---- train ----

train::TrainConfig small_train() {
  train::TrainConfig t;
  t.lr = 1e-3;
  t.warmup_steps = 2;
  t.batch_size = 2;
  t.total_steps = 3;
  t.seed = 3;
  return t;
}

std::string training_determinism() {
  const auto& ds = small_dataset();
  train::Trainer a(small_model(), small_train(), ds), b(small_model(), small_train(), ds);
  for (int i = 0; i < 3; ++i) {
    auto ra = a.step(), rb = b.step();
    expect(ra.loss.l_total == rb.loss.l_total && ra.loss.l_gen == rb.loss.l_gen, "loss trajectories diverged");
  }
  auto pa = a.model().named_parameters(), pb = b.model().named_parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) expect(bit_equal(pa[i].tensor, pb[i].tensor), pa[i].name + " differs");
  auto ck = train::deserialize_checkpoint(train::serialize_checkpoint(a.checkpoint()));
  auto resumed = train::Trainer::resume(ck, ds);
  auto ra = a.step(), rr = resumed.step();
  expect(ra.loss.l_total == rr.loss.l_total, "resumed step differs");
  return "3 steps bit-identical, resume exact";
}

std::string ablation_soundness() {
  auto base = small_model();
  auto count = [](const model::ModelConfig& c) { return model::expected_parameter_count(c); };
  expect(count(model::apply_ablations(base, {false, true, false, false})) == count(base), "no_recon_loss changed params");
  expect(count(model::apply_ablations(base, {false, false, false, true})) == count(base), "no_gap_rope changed params");
  expect(model::apply_ablations(base, {false, false, false, true}).beta == 0, "no_gap_rope kept beta");
  auto c = model::apply_ablations(model::tiny_model_config(), {false, false, true, false});
  RngState rng(601);
  model::Model m(c, rng, kDense);
  auto in = model_inputs(c, 602);
  auto mem = model::encode_conditioning(m, in.prompt, in.ref_image).memory();
  auto a = model::forward(m, in.ref_latent, in.z_t, 5, mem);
  RngState prng(603);
  auto b = model::forward(m, in.ref_latent, randn(prng, in.z_t.shape()), 5, mem);
  expect(max_diff(a.ref_recon, b.ref_recon) > 1e-6, "isolation still holds without attention modulation");
  return "param counts equal, isolation flips without the mask";
}

std::string lambda_wiring() {
  const auto& ds = small_dataset();
  train::Trainer tr(small_model(), small_train(), ds);
  for (int i = 0; i < 2; ++i) {
    auto r = tr.step();
    expect(r.loss.lambda == 0.5, "lambda is not 1/f_v");
    expect(r.loss.l_total == r.loss.l_gen + 0.5 * r.loss.l_ref, "l_total != l_gen + lambda l_ref");
  }
  auto t = small_train();
  t.flags.no_recon_loss = true;
  train::Trainer nr(small_model(), t, ds);
  auto r = nr.step();
  expect(r.loss.l_ref == 0 && r.loss.l_total == r.loss.l_gen, "no_recon_loss still counts l_ref");
  return "exact";
}

std::string warmup_schedule() {
  train::TrainConfig c;
  c.lr = 3e-3;
  c.warmup_steps = 10;
  for (std::size_t s = 1; s <= 10; ++s)
    expect(train::learning_rate(c, s) == c.lr * static_cast<double>(s) / 10.0, "warmup not linear");
  for (std::size_t s : {11, 12, 1000}) expect(train::learning_rate(c, s) == c.lr, "lr not constant after warmup");
  return "linear to step 10, constant after";
}

// ---- eval ----

std::string temporal_consistency_limits() {
  RngState rng(701);
  auto f = randn(rng, {48});
  std::vector<Scalar> same, anti;
  for (int k = 0; k < 3; ++k) same.insert(same.end(), f.data().begin(), f.data().end());
  anti.insert(anti.end(), f.data().begin(), f.data().end());
  for (auto v : f.data()) anti.push_back(-v);
  expect(eval::temporal_consistency(Tensor({3, 48}, same)).value == 1.0, "constant video != 1");
  expect(eval::temporal_consistency(Tensor({2, 48}, anti)).value == -1.0, "antisymmetric pair != -1");
  return "1 and -1 exactly";
}

std::string extractor_illumination() {
  std::size_t n = 0;
  for (int shape = 0; shape < 3; ++shape)
    for (int acc = 0; acc < 4; ++acc) {
      sprites::SpriteSpec spec{static_cast<sprites::ShapeKind>(shape), (2 * shape + acc) % 6,
                               static_cast<sprites::Accessory>(acc), acc == 0 ? -1 : (2 * shape + acc + 3) % 6};
      sprites::Pose pose{16, 16, sprites::base_radius(32, 32)};
      for (int bg : {0, 3, 6}) {
        auto lo = eval::extract_attributes(sprites::render_frame(spec, pose, bg, 0.5, 32, 32).image);
        auto hi = eval::extract_attributes(sprites::render_frame(spec, pose, bg, 1.5, 32, 32).image);
        expect(lo == hi && lo == spec, "estimate changed with illumination for " + spec.str());
        ++n;
      }
    }
  return std::to_string(n) + " spec/background pairs";
}

std::string evaluate_determinism() {
  RngState rng(702);
  model::Model m(small_model(), rng, kDense);
  eval::EvalConfig cfg;
  cfg.sampler_steps = 2;
  cfg.max_samples = 2;
  auto a = eval::evaluate(eval::model_generator(m, cfg), small_dataset(), cfg);
  auto b = eval::evaluate(eval::model_generator(m, cfg), small_dataset(), cfg);
  expect(a == b, "two evaluations differ");
  auto oracle = eval::evaluate(eval::oracle_generator(small_dataset().config), small_dataset(), cfg);
  expect(oracle.identity_match_rate == 1.0, "oracle identity rate " + num(oracle.identity_match_rate));
  return "identical reports, oracle identity 1";
}

struct Check {
  const char* module;
  const char* name;
  std::function<std::string(const VerifyOptions&)> run;
};

const std::vector<Check>& catalog() {
  static const std::vector<Check> checks{
      {"tensor-core", "op-gradients", [](const VerifyOptions&) { return op_gradients(); }},
      {"tensor-core", "softmax-rows", [](const VerifyOptions&) { return softmax_rows(); }},
      {"tensor-core", "rng-determinism", [](const VerifyOptions&) { return rng_determinism(); }},
      {"tensor-core", "matmul-identity", [](const VerifyOptions&) { return matmul_identity(); }},
      {"rope", "rope-shift-invariance", [](const VerifyOptions&) { return rope_shift_invariance(); }},
      {"rope", "rope-gap", [](const VerifyOptions&) { return rope_gap(); }},
      {"rope", "rope-reduction", [](const VerifyOptions&) { return rope_reduction(); }},
      {"rope", "rope-isometry", [](const VerifyOptions&) { return rope_isometry(); }},
      {"attention", "masked-attention-isolation",
       [](const VerifyOptions& o) { return masked_attention_isolation(o.sabotage_ref_mask); }},
      {"attention", "emphasize-passthrough", [](const VerifyOptions&) { return emphasize_passthrough(); }},
      {"attention", "attention-row-stochastic", [](const VerifyOptions&) { return attention_row_stochastic(); }},
      {"attention", "attention-oracle", [](const VerifyOptions&) { return attention_oracle(); }},
      {"attention", "attention-gradients", [](const VerifyOptions&) { return attention_gradients(); }},
      {"diffusion", "diffusion-limits", [](const VerifyOptions&) { return diffusion_limits(); }},
      {"diffusion", "variance-preservation", [](const VerifyOptions&) { return variance_preservation(); }},
      {"diffusion", "loss-algebra", [](const VerifyOptions&) { return loss_algebra(); }},
      {"diffusion", "sampler-reference-clean", [](const VerifyOptions&) { return sampler_reference_clean(); }},
      {"diffusion", "model-gradients", [](const VerifyOptions&) { return model_gradients(); }},
      {"model", "reference-isolation", [](const VerifyOptions& o) { return reference_isolation(o.sabotage_ref_mask); }},
      {"model", "codec-isometry", [](const VerifyOptions&) { return codec_isometry(); }},
      {"model", "identity-at-init", [](const VerifyOptions&) { return identity_at_init(); }},
      {"model", "parameter-count", [](const VerifyOptions&) { return parameter_count(); }},
      {"data", "anti-copy", [](const VerifyOptions&) { return anti_copy(); }},
      {"data", "identity-preservation", [](const VerifyOptions&) { return identity_preservation(); }},
      {"data", "dataset-determinism", [](const VerifyOptions&) { return dataset_determinism(); }},
      {"data", "dataset-round-trip", [](const VerifyOptions&) { return dataset_round_trip(); }},
      {"train", "training-determinism", [](const VerifyOptions&) { return training_determinism(); }},
      {"train", "ablation-soundness", [](const VerifyOptions&) { return ablation_soundness(); }},
      {"train", "lambda-wiring", [](const VerifyOptions&) { return lambda_wiring(); }},
      {"train", "warmup-schedule", [](const VerifyOptions&) { return warmup_schedule(); }},
      {"eval", "temporal-consistency-limits", [](const VerifyOptions&) { return temporal_consistency_limits(); }},
      {"eval", "extractor-illumination", [](const VerifyOptions&) { return extractor_illumination(); }},
      {"eval", "evaluate-determinism", [](const VerifyOptions&) { return evaluate_determinism(); }},
  };
  return checks;
}

}  // namespace

std::vector<std::string> check_names() {
  std::vector<std::string> out;
  for (const auto& c : catalog()) out.emplace_back(c.name);
  return out;
}

std::vector<CheckResult> run_all(const VerifyOptions& opts) {
  std::vector<CheckResult> results;
  for (const auto& c : catalog()) {
    if (!opts.filter.empty() && std::string(c.name).find(opts.filter) == std::string::npos) continue;
    CheckResult r;
    r.module = c.module;
    r.name = c.name;
    auto t0 = std::chrono::steady_clock::now();
    try {
      r.detail = c.run(opts);
      r.pass = true;
    } catch (const Failure& f) {
      r.detail = f.what;
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (opts.on_result) opts.on_result(r);
    results.push_back(std::move(r));
  }
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (!r.pass) return false;
  return !results.empty();
}

std::string format_table(const std::vector<CheckResult>& results) {
  std::ostringstream os;
  char line[256];
  for (const auto& r : results) {
    std::snprintf(line, sizeof line, "%-4s %-12s %-30s %6.2fs  ", r.pass ? "PASS" : "FAIL", r.module.c_str(),
                  r.name.c_str(), r.seconds);
    os << line << r.detail << '\n';
  }
  std::size_t failed = 0;
  for (const auto& r : results) failed += r.pass ? 0 : 1;
  os << results.size() - failed << '/' << results.size() << " checks passed\n";
  return os.str();
}

nlohmann::json to_json(const std::vector<CheckResult>& results) {
  nlohmann::json checks = nlohmann::json::array();
  for (const auto& r : results)
    checks.push_back(
        {{"module", r.module}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}, {"seconds", r.seconds}});
  return {{"pass", all_passed(results)}, {"checks", checks}};
}

}  // namespace ctxdit::verify
