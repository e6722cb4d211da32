#include "ctxdit/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "json.hpp"

#include "ctxdit/ops.hpp"

namespace ctxdit::diffusion {

std::string to_string(ScheduleKind kind) { return kind == ScheduleKind::Linear ? "linear" : "cosine"; }

ScheduleKind parse_schedule_kind(const std::string& name) {
  if (name == "linear") return ScheduleKind::Linear;
  if (name == "cosine") return ScheduleKind::Cosine;
  throw ConfigError("unknown schedule kind '" + name + "'");
}

void NoiseSchedule::validate() const {
  if (alpha_bar.size() < 2) throw ConfigError("schedule needs at least 2 steps");
  for (std::size_t t = 0; t < alpha_bar.size(); ++t) {
    if (!(alpha_bar[t] > 0 && alpha_bar[t] <= 1)) throw ConfigError("alpha_bar out of (0, 1] at t=" + std::to_string(t));
    if (t > 0 && alpha_bar[t] > alpha_bar[t - 1]) throw ConfigError("alpha_bar increases at t=" + std::to_string(t));
  }
}

NoiseSchedule make_schedule(ScheduleKind kind, std::size_t T) {
  if (T < 2) throw ConfigError("make_schedule: T must be >= 2");
  NoiseSchedule s;
  s.kind = kind;
  s.alpha_bar.resize(T);
  double ab = 1.0;
  if (kind == ScheduleKind::Linear) {
    double k = 1000.0 / static_cast<double>(T);
    double lo = 1e-4 * k, hi = 0.02 * k;
    for (std::size_t t = 0; t < T; ++t) {
      double beta = lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(T - 1);
      ab *= 1.0 - std::min(beta, 0.999);
      s.alpha_bar[t] = ab;
    }
  } else {
    const double off = 0.008;
    auto f = [&](double t) {
      double c = std::cos((t / static_cast<double>(T) + off) / (1 + off) * std::numbers::pi / 2);
      return c * c;
    };
    for (std::size_t t = 0; t < T; ++t) {
      double beta = std::min(1.0 - f(static_cast<double>(t + 1)) / f(static_cast<double>(t)), 0.999);
      ab *= 1.0 - beta;
      s.alpha_bar[t] = ab;
    }
  }
  s.validate();
  return s;
}

Tensor forward_diffuse(const Tensor& x0, double alpha_bar, const Tensor& eps) {
  if (x0.shape() != eps.shape())
    throw ShapeError("forward_diffuse: eps " + shape_str(eps.shape()) + " vs x0 " + shape_str(x0.shape()));
  if (!(alpha_bar >= 0 && alpha_bar <= 1)) throw RangeError("forward_diffuse: alpha_bar outside [0, 1]");
  return add(scale(x0, static_cast<Scalar>(std::sqrt(alpha_bar))),
             scale(eps, static_cast<Scalar>(std::sqrt(1 - alpha_bar))));
}

Tensor forward_diffuse(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
  if (t >= sched.steps())
    throw RangeError("forward_diffuse: t=" + std::to_string(t) + " outside [0, " + std::to_string(sched.steps()) + ")");
  return forward_diffuse(x0, sched.alpha_bar[t], eps);
}

std::size_t sample_timestep(RngState& rng, const NoiseSchedule& sched) {
  return static_cast<std::size_t>(rng.uniform_int(sched.steps()));
}

namespace {
Tensor checked_mse(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(what) + ": " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  return mse(a, b);
}
}  // namespace

Tensor gen_loss(const Tensor& eps, const Tensor& eps_pred) { return checked_mse(eps_pred, eps, "gen_loss"); }

Tensor ref_loss(const Tensor& ref_recon_pixels, const Tensor& ref_image) {
  return checked_mse(ref_recon_pixels, ref_image, "ref_loss");
}

LossTerms total_loss(double l_gen, double l_ref, int f_r, int f_v) {
  if (f_v <= 0) throw ConfigError("total_loss: f_v must be positive");
  if (f_r <= 0) throw ConfigError("total_loss: f_r must be positive");
  LossTerms out;
  out.l_gen = l_gen;
  out.l_ref = l_ref;
  out.lambda = static_cast<double>(f_r) / static_cast<double>(f_v);
  out.l_total = l_gen + out.lambda * l_ref;
  return out;
}

Tensor total_loss(const Tensor& l_gen, const Tensor& l_ref, int f_r, int f_v, LossTerms* terms) {
  auto lt = total_loss(static_cast<double>(l_gen.item()), static_cast<double>(l_ref.item()), f_r, f_v);
  auto out = add(l_gen, scale(l_ref, static_cast<Scalar>(lt.lambda)));
  if (terms) {
    lt.l_total = static_cast<double>(out.item());
    *terms = lt;
  }
  return out;
}

std::vector<std::size_t> sampling_timesteps(std::size_t T, std::size_t steps) {
  if (steps > T) throw ConfigError("sampler: steps exceed schedule length");
  std::vector<std::size_t> ts;
  if (steps == 0) return ts;
  if (steps == 1) return {T - 1};
  for (std::size_t i = steps; i-- > 0;) {
    double v = static_cast<double>(i) * static_cast<double>(T - 1) / static_cast<double>(steps - 1);
    ts.push_back(static_cast<std::size_t>(std::llround(v)));
  }
  return ts;
}

namespace {

// Runs the shared reverse loop; `update` maps (z_t, x0_pred, eps, ab_t, ab_prev) to z_prev.
template <class Update>
Tensor reverse_loop(const Denoiser& model, const Tensor& ref_latent, const Tensor& z_init,
                    const NoiseSchedule& sched, const SamplerOptions& opts, Update update) {
  NoGradGuard no_grad;
  auto ts = sampling_timesteps(sched.steps(), opts.steps);
  const Tensor ref = ref_latent.detach();
  const std::vector<Scalar> ref_snapshot(ref.data().begin(), ref.data().end());
  Tensor z = z_init.detach();
  for (std::size_t i = 0; i < ts.size(); ++i) {
    std::size_t t = ts[i];
    auto eps = model(ref, z, t);
    if (!std::equal(ref_snapshot.begin(), ref_snapshot.end(), ref.data().begin()))
      throw Error("sampler: reference latent was modified during denoising");
    if (eps.shape() != z.shape()) throw ShapeError("sampler: denoiser output shape mismatch");
    double ab = sched.alpha_bar[t];
    double ab_prev = i + 1 < ts.size() ? sched.alpha_bar[ts[i + 1]] : 1.0;
    auto x0_pred = div(sub(z, scale(eps, static_cast<Scalar>(std::sqrt(1 - ab)))), static_cast<Scalar>(std::sqrt(ab)));
    if (opts.x0_projection) {
      x0_pred = opts.x0_projection(x0_pred);
      if (ab < 1)
        eps = div(sub(z, scale(x0_pred, static_cast<Scalar>(std::sqrt(ab)))), static_cast<Scalar>(std::sqrt(1 - ab)));
    }
    z = i + 1 < ts.size() ? update(z, x0_pred, eps, ab, ab_prev) : x0_pred;
    if (opts.trajectory) {
      TrajectoryPoint p;
      p.step = i;
      p.t = t;
      double m = 0, m2 = 0;
      for (auto v : z.data()) {
        m += v;
        m2 += static_cast<double>(v) * v;
      }
      auto n = static_cast<double>(z.numel());
      p.mean = m / n;
      p.var = m2 / n - p.mean * p.mean;
      if (opts.x0_true) p.x0_mse = static_cast<double>(mse(x0_pred, *opts.x0_true).item());
      opts.trajectory->push_back(p);
    }
  }
  return z;
}

}  // namespace

Tensor ancestral_sample(const Denoiser& model, const Tensor& ref_latent, const Tensor& z_init,
                        const NoiseSchedule& sched, RngState& rng, const SamplerOptions& opts) {
  return reverse_loop(model, ref_latent, z_init, sched, opts,
                      [&](const Tensor& z, const Tensor& x0, const Tensor&, double ab, double ab_prev) {
                        double beta = 1 - ab / ab_prev;
                        double c0 = std::sqrt(ab_prev) * beta / (1 - ab);
                        double ct = std::sqrt(1 - beta) * (1 - ab_prev) / (1 - ab);
                        double var = (1 - ab_prev) / (1 - ab) * beta;
                        auto mean = add(scale(x0, static_cast<Scalar>(c0)), scale(z, static_cast<Scalar>(ct)));
                        return add(mean, scale(randn(rng, z.shape()), static_cast<Scalar>(std::sqrt(var))));
                      });
}

Tensor ddim_sample(const Denoiser& model, const Tensor& ref_latent, const Tensor& z_init,
                   const NoiseSchedule& sched, const SamplerOptions& opts) {
  return reverse_loop(model, ref_latent, z_init, sched, opts,
                      [](const Tensor&, const Tensor& x0, const Tensor& eps, double, double ab_prev) {
                        return add(scale(x0, static_cast<Scalar>(std::sqrt(ab_prev))),
                                   scale(eps, static_cast<Scalar>(std::sqrt(1 - ab_prev))));
                      });
}

void write_trajectory_jsonl(std::ostream& out, const std::vector<TrajectoryPoint>& points) {
  for (const auto& p : points) {
    nlohmann::json j{{"step", p.step}, {"t", p.t}, {"mean", p.mean}, {"var", p.var}};
    if (p.x0_mse) j["x0_mse"] = *p.x0_mse;
    out << j.dump() << '\n';
  }
}

}  // namespace ctxdit::diffusion
