#include "ctxdit/train.hpp"

#include <cmath>
#include <istream>
#include <ostream>

#include "ctxdit/ops.hpp"
#include "ctxdit/parallel.hpp"

namespace ctxdit::train {

using nlohmann::json;

void TrainConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("train config: " + msg); };
  if (!(lr > 0)) fail("lr must be positive");
  if (!(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1)) fail("betas must lie in (0, 1)");
  if (!(adam_eps > 0)) fail("adam_eps must be positive");
  if (weight_decay < 0) fail("weight_decay must be non-negative");
  if (batch_size == 0) fail("batch_size must be positive");
  if (!(cond_dropout >= 0 && cond_dropout < 1)) fail("cond_dropout must lie in [0, 1)");
}

json to_json(const TrainConfig& c) {
  return {{"lr", c.lr},
          {"warmup_steps", c.warmup_steps},
          {"beta1", c.beta1},
          {"beta2", c.beta2},
          {"adam_eps", c.adam_eps},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"total_steps", c.total_steps},
          {"cond_dropout", c.cond_dropout},
          {"seed", c.seed},
          {"no_aug_prompt", c.flags.no_aug_prompt},
          {"no_recon_loss", c.flags.no_recon_loss},
          {"no_attn_mod", c.flags.no_attn_mod},
          {"no_gap_rope", c.flags.no_gap_rope}};
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
    c.beta1 = j.value("beta1", c.beta1);
    c.beta2 = j.value("beta2", c.beta2);
    c.adam_eps = j.value("adam_eps", c.adam_eps);
    c.weight_decay = j.value("weight_decay", c.weight_decay);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.total_steps = j.value("total_steps", c.total_steps);
    c.cond_dropout = j.value("cond_dropout", c.cond_dropout);
    c.seed = j.value("seed", c.seed);
    c.flags.no_aug_prompt = j.value("no_aug_prompt", c.flags.no_aug_prompt);
    c.flags.no_recon_loss = j.value("no_recon_loss", c.flags.no_recon_loss);
    c.flags.no_attn_mod = j.value("no_attn_mod", c.flags.no_attn_mod);
    c.flags.no_gap_rope = j.value("no_gap_rope", c.flags.no_gap_rope);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("train config: ") + e.what());
  }
  return c;
}

double learning_rate(const TrainConfig& cfg, std::size_t step) {
  if (cfg.warmup_steps == 0 || step >= cfg.warmup_steps) return cfg.lr;
  return cfg.lr * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
}

AdamState init_adam_state(const std::vector<NamedTensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p.tensor.shape()));
    s.v.push_back(Tensor::zeros(p.tensor.shape()));
  }
  return s;
}

void adamw_step(const std::vector<NamedTensor>& params, const std::vector<std::vector<Scalar>>& grads,
                AdamState& state, const TrainConfig& cfg, std::size_t step) {
  if (step == 0) throw ConfigError("adamw_step: step counts from 1");
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size())
    throw ShapeError("adamw_step: parameter, gradient and state counts differ");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].size() != params[i].tensor.numel())
      throw ShapeError("adamw_step: gradient size mismatch for " + params[i].name);
    for (auto g : grads[i])
      if (!std::isfinite(static_cast<double>(g))) throw NumericError("non-finite gradient in " + params[i].name);
  }
  const double lr = learning_rate(cfg, step);
  const double bc1 = 1 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor handle = params[i].tensor;
    auto p = handle.mutable_data();
    auto m = state.m[i].mutable_data();
    auto v = state.v[i].mutable_data();
    const auto& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      double gk = g[k];
      m[k] = static_cast<Scalar>(cfg.beta1 * m[k] + (1 - cfg.beta1) * gk);
      v[k] = static_cast<Scalar>(cfg.beta2 * v[k] + (1 - cfg.beta2) * gk * gk);
      double mhat = m[k] / bc1, vhat = v[k] / bc2;
      double pk = p[k];
      pk -= lr * (mhat / (std::sqrt(vhat) + cfg.adam_eps) + cfg.weight_decay * pk);
      p[k] = static_cast<Scalar>(pk);
    }
  }
}

EncodedSample encode_sample(const model::ModelConfig& cfg, const data::Sample& s) {
  const Shape px{cfg.height, cfg.width, 3};
  if (s.ref_image.shape() != px || s.video.shape() != Shape{cfg.frames, cfg.height, cfg.width, 3})
    throw ShapeError("sample " + std::to_string(s.index) + " does not match the model geometry (video " +
                     shape_str(s.video.shape()) + ")");
  return {s.ref_image, model::encode_pixels(cfg, s.ref_image), model::encode_pixels(cfg, s.video), s.prompt};
}

Tensor sample_loss(const model::Model& m, const EncodedSample& ex, const diffusion::NoiseSchedule& sched,
                   const TrainConfig& cfg, RngState& rng, diffusion::LossTerms* terms) {
  const auto& mc = m.config();
  auto t = diffusion::sample_timestep(rng, sched);
  auto eps = randn(rng, ex.x0.shape());
  bool drop = cfg.cond_dropout > 0 && rng.uniform() < cfg.cond_dropout;
  auto z = diffusion::forward_diffuse(ex.x0, t, eps, sched);
  auto memory = drop ? model::null_memory(m) : model::encode_conditioning(m, ex.prompt, ex.ref_image).memory();
  auto out = model::forward(m, ex.ref_latent, z, t, memory);
  auto l_gen = diffusion::gen_loss(eps, out.eps_pred);
  auto l_ref = cfg.flags.no_recon_loss ? Tensor::scalar(0)
                                       : diffusion::ref_loss(model::decode_frame(mc, out.ref_recon), ex.ref_image);
  return diffusion::total_loss(l_gen, l_ref, 1, static_cast<int>(mc.frames), terms);
}

void write_log_line(std::ostream& out, const LogRecord& r) {
  json j{{"step", r.step},       {"l_gen", r.l_gen}, {"l_ref", r.l_ref},
         {"l_total", r.l_total}, {"lr", r.lr},       {"wall_time", r.wall_time}};
  out << j.dump() << "\n";
}

std::vector<LogRecord> read_log(std::istream& in) {
  std::vector<LogRecord> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      out.push_back({j.at("step").get<std::size_t>(), j.at("l_gen").get<double>(), j.at("l_ref").get<double>(),
                     j.at("l_total").get<double>(), j.at("lr").get<double>(), j.value("wall_time", 0.0)});
    } catch (const json::exception& e) {
      throw FormatError("training log line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

Trainer::Trainer(model::Model model, const TrainConfig& tcfg, const data::Dataset& ds)
    : model_(std::move(model)),
      tcfg_(tcfg),
      data_config_(ds.config),
      sched_(model_.config().make_schedule()),
      adam_(init_adam_state(model_.named_parameters())),
      rng_(RngState(tcfg.seed).fork(1)) {
  tcfg_.validate();
  if (ds.samples.empty()) throw ConfigError("trainer: empty dataset");
  examples_.resize(ds.samples.size());
  parallel_for(ds.samples.size(),
               [&](std::size_t i) { examples_[i] = encode_sample(model_.config(), ds.samples[i]); });
}

namespace {

model::Model build_model(const model::ModelConfig& mcfg, const TrainConfig& tcfg) {
  RngState init = RngState(tcfg.seed).fork(0);
  return model::Model(model::apply_ablations(mcfg, tcfg.flags), init);
}

}  // namespace

model::Model model_from_checkpoint(const Checkpoint& ckpt) {
  RngState scratch(0);
  model::Model m(ckpt.model_config, scratch);
  auto named = m.named_parameters();
  if (named.size() != ckpt.params.size()) throw FormatError("checkpoint parameter count does not match the model");
  for (std::size_t i = 0; i < named.size(); ++i) {
    if (named[i].name != ckpt.params[i].name || named[i].tensor.shape() != ckpt.params[i].tensor.shape())
      throw FormatError("checkpoint tensor " + ckpt.params[i].name + " does not match the model");
    auto dst = named[i].tensor.mutable_data();
    auto src = ckpt.params[i].tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  return m;
}

Trainer::Trainer(const model::ModelConfig& mcfg, const TrainConfig& tcfg, const data::Dataset& ds)
    : Trainer(build_model(mcfg, tcfg), tcfg, ds) {}

Trainer Trainer::resume(const Checkpoint& ckpt, const data::Dataset& ds, const TrainConfig* expected) {
  if (!(ds.config == ckpt.data_config)) throw FormatError("checkpoint was trained on a different dataset config");
  if (expected && config_hash(ckpt.model_config, *expected, ds.config) !=
                      config_hash(ckpt.model_config, ckpt.train_config, ckpt.data_config))
    throw FormatError("checkpoint config hash does not match the requested training config");
  TrainConfig tcfg = ckpt.train_config;
  if (expected) tcfg.total_steps = expected->total_steps;
  Trainer tr(model_from_checkpoint(ckpt), tcfg, ds);
  for (std::size_t i = 0; i < ckpt.params.size(); ++i) {
    tr.adam_.m[i] = ckpt.adam.m.at(i).clone();
    tr.adam_.v[i] = ckpt.adam.v.at(i).clone();
  }
  tr.rng_ = ckpt.rng;
  tr.step_ = ckpt.step;
  return tr;
}

StepResult Trainer::step() {
  const std::size_t B = tcfg_.batch_size;
  // Draw the batch and per-example noise streams up front so the result does
  // not depend on the worker count.
  std::vector<std::size_t> index(B);
  std::vector<std::uint64_t> stream(B);
  for (std::size_t i = 0; i < B; ++i) {
    index[i] = static_cast<std::size_t>(rng_.uniform_int(examples_.size()));
    stream[i] = rng_.next_u64();
  }
  const auto params = model_.named_parameters();
  std::vector<std::vector<std::vector<Scalar>>> grads(B);
  std::vector<diffusion::LossTerms> terms(B);
  parallel_for(B, [&](std::size_t i) {
    auto local = model_.clone();
    RngState r(stream[i]);
    auto loss = sample_loss(local, examples_[index[i]], sched_, tcfg_, r, &terms[i]);
    loss.backward();
    for (const auto& p : local.named_parameters()) {
      auto g = p.tensor.grad();
      grads[i].emplace_back(g.begin(), g.end());
      grads[i].back().resize(p.tensor.numel(), 0);
    }
  });
  std::vector<std::vector<Scalar>> total(params.size());
  for (std::size_t k = 0; k < params.size(); ++k) {
    total[k].assign(params[k].tensor.numel(), 0);
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t e = 0; e < total[k].size(); ++e) total[k][e] += grads[i][k][e];
    for (auto& g : total[k]) g /= static_cast<Scalar>(B);
  }
  double l_gen = 0, l_ref = 0;
  for (const auto& t : terms) {
    l_gen += t.l_gen;
    l_ref += t.l_ref;
  }
  l_gen /= static_cast<double>(B);
  l_ref /= static_cast<double>(B);

  ++step_;
  adamw_step(params, total, adam_, tcfg_, step_);
  StepResult r;
  r.step = step_;
  r.loss = diffusion::total_loss(l_gen, l_ref, 1, static_cast<int>(model_.config().frames));
  r.lr = learning_rate(tcfg_, step_);
  return r;
}

void Trainer::run(const std::function<void(const StepResult&)>& on_step) {
  while (step_ < tcfg_.total_steps) {
    auto r = step();
    if (on_step) on_step(r);
  }
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint c;
  c.model_config = model_.config();
  c.train_config = tcfg_;
  c.data_config = data_config_;
  c.step = step_;
  c.rng = rng_;
  for (const auto& p : model_.named_parameters()) c.params.push_back({p.name, p.tensor.detach()});
  for (std::size_t i = 0; i < adam_.m.size(); ++i) {
    c.adam.m.push_back(adam_.m[i].detach());
    c.adam.v.push_back(adam_.v[i].detach());
  }
  return c;
}

}  // namespace ctxdit::train
