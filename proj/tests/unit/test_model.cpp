#include <algorithm>
#include <cmath>

#include "ctxdit/codec.hpp"
#include "ctxdit/diffusion.hpp"
#include "ctxdit/gradcheck.hpp"
#include "ctxdit/model.hpp"
#include "ctxdit/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace ctxdit;
using namespace ctxdit::model;

namespace {

constexpr InitOptions kDense{false, false, false};

struct Inputs {
  Tensor ref_image, ref_latent, x0, eps, z_t;
  data::Prompt prompt;
  std::size_t t;
};

Inputs make_inputs(const ModelConfig& c, std::uint64_t seed) {
  RngState rng(seed);
  Inputs in;
  in.ref_image = rand_uniform(rng, {c.height, c.width, 3}, 0, 1);
  in.ref_latent = encode_pixels(c, in.ref_image);
  in.x0 = randn(rng, {c.n_vid_tokens(), c.latent_dim()});
  in.eps = randn(rng, {c.n_vid_tokens(), c.latent_dim()});
  in.t = static_cast<std::size_t>(rng.uniform_int(c.timesteps));
  auto sched = c.make_schedule();
  in.z_t = diffusion::forward_diffuse(in.x0, in.t, in.eps, sched);
  in.prompt = data::make_prompt({sprites::ShapeKind::Square, 1, sprites::Accessory::Collar, 3}, 5, 2, 4);
  return in;
}

double max_diff(const Tensor& a, const Tensor& b) { return testing::max_abs_diff(a.data(), b.data()); }

}  // namespace

TEST_CASE("config json round-trip and validation") {
  ModelConfig c = tiny_model_config();
  c.beta = 2;
  c.emphasize_rope = true;
  c.schedule = diffusion::ScheduleKind::Linear;
  auto j = to_json(c);
  CHECK(model_config_from_json(j) == c);
  j["future_option"] = 1;
  CHECK(model_config_from_json(j) == c);
  CHECK(model_config_from_json(nlohmann::json::object()) == ModelConfig{});

  ModelConfig bad;
  bad.patch = 5;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = ModelConfig{};
  bad.n_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(model_config_from_json({{"schedule", "quadratic"}}), ConfigError);
}

TEST_CASE("parameter count matches the closed form") {
  RngState rng(1);
  for (auto c : {ModelConfig{}, tiny_model_config()}) {
    for (int mask = 0; mask < 16; ++mask) {
      AblationFlags f{(mask & 1) != 0, (mask & 2) != 0, (mask & 4) != 0, (mask & 8) != 0};
      auto cfg = apply_ablations(c, f);
      Model m(cfg, rng);
      CHECK(m.parameter_count() == expected_parameter_count(cfg));
    }
  }
  auto tiny = tiny_model_config();
  CHECK(expected_parameter_count(tiny) <= 10000);
  // Hand count for the tiny config (d=8, latent 48, vocab 50, c1=c2=2):
  // input 392, time 144, prompts 400+8, semantic 98+66+264, heads 864,
  // noise skip 384+48, blocks 2 x (3 x 288 + 552 + 576).
  CHECK(expected_parameter_count(tiny) == 392 + 144 + 408 + 428 + 864 + 432 + 2 * (864 + 552 + 576));
  CHECK(prompt_vocab_size() == 50);
}

TEST_CASE("ablation flags change only the intended settings") {
  ModelConfig c;
  CHECK(apply_ablations(c, {}) == c);
  auto g = apply_ablations(c, {false, false, false, true});
  CHECK(g.beta == 0);
  auto r = g.rope_config();
  CHECK(rope::effective_temporal_index({5, 0, 0, 1}, r) == 5);
  auto a = apply_ablations(c, {false, false, true, false});
  CHECK_FALSE(a.use_ref_mask);
  CHECK_FALSE(a.use_emphasize);
  auto p = apply_ablations(c, {true, false, false, false});
  CHECK_FALSE(p.use_first_prompt);
  CHECK(apply_ablations(c, {false, true, false, false}) == c);
  CHECK(AblationFlags{}.name() == "full");
  CHECK(AblationFlags{false, true, false, true}.name() == "no_recon_loss+no_gap_rope");

  // Same seed, no flags: identical parameters and forward outputs.
  RngState r1(4), r2(4);
  Model m1(c, r1, kDense), m2(apply_ablations(c, {}), r2, kDense);
  auto in = make_inputs(c, 9);
  auto mem = encode_conditioning(m1, in.prompt, in.ref_image).memory();
  auto o1 = forward(m1, in.ref_latent, in.z_t, in.t, mem);
  auto o2 = forward(m2, in.ref_latent, in.z_t, in.t, mem);
  CHECK(testing::bit_equal(o1.eps_pred.data(), o2.eps_pred.data()));
  CHECK(testing::bit_equal(o1.ref_recon.data(), o2.ref_recon.data()));
}

TEST_CASE("token positions and memory layout") {
  auto c = tiny_model_config();
  auto pos = token_positions(c);
  REQUIRE(pos.size() == 12);
  CHECK(pos[0] == rope::TokenPosition{0, 0, 0, 0});
  CHECK(pos[3] == rope::TokenPosition{0, 1, 1, 0});
  CHECK(pos[4] == rope::TokenPosition{1, 0, 0, 1});
  CHECK(pos[11] == rope::TokenPosition{2, 1, 1, 1});

  RngState rng(2);
  Model m(c, rng);
  auto in = make_inputs(c, 3);
  auto a = encode_conditioning(m, in.prompt, in.ref_image);
  auto b = encode_conditioning(m, in.prompt, in.ref_image);
  CHECK(testing::bit_equal(a.memory().data(), b.memory().data()));
  CHECK(a.memory().shape() == Shape{c.memory_length(), c.model_dim});
  CHECK(c.memory_length() == 4 + 4 + 1);
  // First-frame rows come from the table at the field offsets.
  auto row = prompt_row(data::PromptField::BodyColor, 1);
  CHECK(row == 3 + 1);
  for (std::size_t k = 0; k < c.model_dim; ++k)
    CHECK(a.first.at({1, k}) == m.params().prompt_table.at({row, k}));
  CHECK(prompt_row(data::PromptField::Light, 4) == 49);

  auto np = apply_ablations(c, {true, false, false, false});
  RngState rng2(2);
  Model mp(np, rng2);
  auto cp = encode_conditioning(mp, in.prompt, in.ref_image);
  CHECK_FALSE(cp.first.defined());
  CHECK(cp.memory().dim(0) == 4 + 1);

  auto bad = in.prompt;
  bad.later[1] = 16;
  CHECK_THROWS_AS(encode_conditioning(m, bad, in.ref_image), VocabError);
  bad = in.prompt;
  bad.first.pop_back();
  CHECK_THROWS_AS(encode_conditioning(m, bad, in.ref_image), VocabError);
}

TEST_CASE("identity at init") {
  for (auto c : {tiny_model_config(), ModelConfig{}}) {
    c.ref_skip = true;
    RngState rng(5);
    Model m(c, rng);
    auto in = make_inputs(c, 6);
    auto mem = encode_conditioning(m, in.prompt, in.ref_image).memory();
    auto out = forward(m, in.ref_latent, in.z_t, in.t, mem);
    CHECK(out.ref_recon.shape() == in.ref_latent.shape());
    CHECK(out.eps_pred.shape() == in.z_t.shape());
    CHECK(testing::bit_equal(out.ref_recon.data(), in.ref_latent.data()));
    for (auto v : out.eps_pred.data()) CHECK(v == 0);

    // Zeroed output projections make every block the identity, whatever the modulation.
    RngState rng2(7);
    Model mb(c, rng2, {true, false, false});
    auto x = randn(rng2, {c.n_ref_tokens() + c.n_vid_tokens(), c.model_dim});
    auto mr = randn(rng2, {1, c.model_dim}), mv = randn(rng2, {1, c.model_dim});
    for (std::size_t i = 0; i < c.depth; ++i)
      CHECK(testing::bit_equal(block_forward(mb, i, x, mem, mr, mv).data(), x.data()));
  }
  // Without the skip, zero heads give zero outputs on both slices.
  auto c = tiny_model_config();
  RngState rng(5);
  Model m(c, rng);
  auto in = make_inputs(c, 6);
  auto out = forward(m, in.ref_latent, in.z_t, in.t, encode_conditioning(m, in.prompt, in.ref_image).memory());
  for (auto v : out.ref_recon.data()) CHECK(v == 0);
}

TEST_CASE("reference isolation through the full model") {
  for (auto c : {tiny_model_config(), ModelConfig{}}) {
    for (bool erope : {false, true}) {
      c.emphasize_rope = erope;
      RngState rng(11);
      Model m(c, rng, kDense);
      auto in = make_inputs(c, 12);
      auto mem = encode_conditioning(m, in.prompt, in.ref_image).memory();
      auto base = forward(m, in.ref_latent, in.z_t, in.t, mem);
      RngState prng(13);
      for (int trial = 0; trial < 3; ++trial) {
        auto z2 = randn(prng, in.z_t.shape());
        auto t2 = static_cast<std::size_t>(prng.uniform_int(c.timesteps));
        auto o = forward(m, in.ref_latent, z2, t2, mem);
        CHECK(max_diff(o.ref_recon, base.ref_recon) <= 1e-10);
        CHECK(max_diff(o.eps_pred, base.eps_pred) > 1e-6);
      }
      // A different noise realization at the same timestep.
      auto eps2 = randn(prng, in.x0.shape());
      auto z3 = diffusion::forward_diffuse(in.x0, in.t, eps2, c.make_schedule());
      CHECK(max_diff(forward(m, in.ref_latent, z3, in.t, mem).ref_recon, base.ref_recon) <= 1e-10);
      // Non-invariance witness: the reference drives the video slice.
      auto ref2 = add(in.ref_latent, randn(prng, in.ref_latent.shape()));
      CHECK(max_diff(forward(m, ref2, in.z_t, in.t, mem).eps_pred, base.eps_pred) > 1e-6);
    }
  }
}

TEST_CASE("isolation fails without attention modulation") {
  auto c = apply_ablations(tiny_model_config(), {false, false, true, false});
  RngState rng(11);
  Model m(c, rng, kDense);
  auto in = make_inputs(c, 12);
  auto mem = encode_conditioning(m, in.prompt, in.ref_image).memory();
  auto base = forward(m, in.ref_latent, in.z_t, in.t, mem);
  RngState prng(14);
  auto o = forward(m, in.ref_latent, randn(prng, in.z_t.shape()), in.t, mem);
  CHECK(max_diff(o.ref_recon, base.ref_recon) > 1e-6);

  // Mask alone off, emphasize kept: still leaks.
  auto c2 = tiny_model_config();
  c2.use_ref_mask = false;
  RngState rng2(11);
  Model m2(c2, rng2, kDense);
  auto b2 = forward(m2, in.ref_latent, in.z_t, in.t, mem);
  auto o2 = forward(m2, in.ref_latent, randn(prng, in.z_t.shape()), in.t, mem);
  CHECK(max_diff(o2.ref_recon, b2.ref_recon) > 1e-6);
}

TEST_CASE("block-level reference isolation") {
  auto c = tiny_model_config();
  RngState rng(21);
  Model m(c, rng, kDense);
  auto mem = randn(rng, {5, c.model_dim});
  auto mr = randn(rng, {1, c.model_dim}), mv = randn(rng, {1, c.model_dim});
  auto x = randn(rng, {12, c.model_dim});
  auto y = block_forward(m, 0, x, mem, mr, mv);
  std::vector<Scalar> d(x.data().begin(), x.data().end());
  for (std::size_t i = 4 * c.model_dim; i < d.size(); ++i) d[i] += static_cast<Scalar>(rng.normal());
  auto y2 = block_forward(m, 0, Tensor(x.shape(), d), mem, mr, mv);
  CHECK(testing::max_abs_diff(slice_rows(y, 0, 4).data(), slice_rows(y2, 0, 4).data()) <= 1e-12);
  CHECK(testing::max_abs_diff(slice_rows(y, 4, 12).data(), slice_rows(y2, 4, 12).data()) > 1e-6);
}

TEST_CASE("full model gradients match finite differences") {
  auto c = tiny_model_config();
  RngState rng(31);
  Model m(c, rng, kDense);
  REQUIRE(m.parameter_count() <= 10000);
  auto in = make_inputs(c, 32);
  auto loss = [&] {
    auto mem = encode_conditioning(m, in.prompt, in.ref_image).memory();
    auto out = forward(m, in.ref_latent, in.z_t, in.t, mem);
    auto l_gen = diffusion::gen_loss(in.eps, out.eps_pred);
    auto l_ref = diffusion::ref_loss(decode_frame(c, out.ref_recon), in.ref_image);
    return diffusion::total_loss(l_gen, l_ref, 1, static_cast<int>(c.frames));
  };
  // Finite-difference rounding noise here is ~1e-10 absolute (and the key
  // biases have an exactly zero gradient), so the denominator floor is 1e-5.
  auto report = finite_diff_check(loss, m.named_parameters(), 1e-5, 1e-4, 1e-5);
  for (const auto& e : report.per_param)
    if (e.max_rel_error >= 1e-4) MESSAGE(e.name << " rel " << e.max_rel_error << " analytic " << e.analytic << " numeric " << e.numeric);
  CHECK(report.per_param.size() == m.named_parameters().size());
  CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("clone is deep") {
  auto c = tiny_model_config();
  RngState rng(41);
  Model m(c, rng, kDense);
  auto copy = m.clone();
  auto a = m.named_parameters(), b = copy.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(testing::bit_equal(a[i].tensor.data(), b[i].tensor.data()));
    CHECK(b[i].tensor.requires_grad());
    CHECK(a[i].tensor.node() != b[i].tensor.node());
  }
  b[0].tensor.mutable_data()[0] += 1;
  CHECK(a[0].tensor.data()[0] != b[0].tensor.data()[0]);
}

TEST_CASE("guidance mixes conditional and unconditional predictions") {
  auto c = tiny_model_config();
  RngState rng(51);
  Model m(c, rng, kDense);
  auto in = make_inputs(c, 52);
  auto mem = encode_conditioning(m, in.prompt, in.ref_image).memory();
  auto cond = forward(m, in.ref_latent, in.z_t, in.t, mem).eps_pred;
  auto uncond = forward(m, in.ref_latent, in.z_t, in.t, null_memory(m)).eps_pred;
  CHECK(testing::bit_equal(make_denoiser(m, mem)(in.ref_latent, in.z_t, in.t).data(), cond.data()));
  auto g = make_denoiser(m, mem, 3.0)(in.ref_latent, in.z_t, in.t);
  for (std::size_t i = 0; i < g.numel(); ++i)
    CHECK(std::abs(g.data()[i] - (uncond.data()[i] + 3.0 * (cond.data()[i] - uncond.data()[i]))) < 1e-12);
}

TEST_CASE("input validation") {
  auto c = tiny_model_config();
  RngState rng(61);
  Model m(c, rng);
  auto in = make_inputs(c, 62);
  auto mem = encode_conditioning(m, in.prompt, in.ref_image).memory();
  CHECK_THROWS_AS(forward(m, in.z_t, in.z_t, 0, mem), ShapeError);
  CHECK_THROWS_AS(forward(m, in.ref_latent, in.z_t, c.timesteps, mem), RangeError);
  CHECK_THROWS_AS(semantic_tokens(m, Tensor::zeros({4, 4, 3})), ShapeError);
  auto px = decode_video(c, encode_pixels(c, rand_uniform(rng, {c.frames, c.height, c.width, 3}, 0, 1)));
  CHECK(px.shape() == Shape{c.frames, c.height, c.width, 3});
}

TEST_CASE("timestep features") {
  auto f = timestep_features(0, 8);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(f.data()[i] == 1);
    CHECK(f.data()[4 + i] == 0);
  }
  auto g = timestep_features(3, 8);
  CHECK(std::abs(g.data()[0] - std::cos(3.0)) < 1e-15);
  CHECK(std::abs(g.data()[5] - std::sin(3.0 * std::pow(10000.0, -0.25))) < 1e-15);
}

TEST_CASE("ablation flag names parse back") {
  for (int bits = 0; bits < 16; ++bits) {
    model::AblationFlags f{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0};
    CHECK(model::parse_ablation_flags(f.name()) == f);
  }
  CHECK(model::parse_ablation_flags("no_gap_rope+no_recon_loss").no_gap_rope);
  CHECK_THROWS_AS(model::parse_ablation_flags("no_magic"), ConfigError);
  CHECK_THROWS_AS(model::parse_ablation_flags(""), ConfigError);
  CHECK_THROWS_AS(model::parse_ablation_flags("full+no_gap_rope"), ConfigError);
}

TEST_CASE("clip projection keeps in-range frames and clamps the rest") {
  model::ModelConfig c;
  c.frames = 2;
  RngState rng(8);
  std::vector<Scalar> px(2 * 32 * 32 * 3);
  for (auto& v : px) v = rng.uniform();
  Tensor video({2, 32, 32, 3}, px);
  auto latent = model::encode_pixels(c, video);
  auto kept = model::decode_video(c, model::clip_to_data_range(c, latent));
  CHECK(testing::max_abs_diff(kept.data(), video.data()) < 1e-12);

  for (auto& v : px) v = 3 * v - 1;
  Tensor wide({2, 32, 32, 3}, px);
  auto clipped = model::decode_video(c, model::clip_to_data_range(c, model::encode_pixels(c, wide)));
  for (std::size_t i = 0; i < px.size(); ++i)
    CHECK(std::abs(clipped.data()[i] - std::clamp(px[i], 0.0, 1.0)) < 1e-12);
}
