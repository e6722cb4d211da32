#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "ctxdit/rng.hpp"
#include "ctxdit/tensor.hpp"

namespace ctxdit::diffusion {

enum class ScheduleKind { Linear, Cosine };

std::string to_string(ScheduleKind kind);
/// "linear" or "cosine"; anything else is a ConfigError.
ScheduleKind parse_schedule_kind(const std::string& name);

struct NoiseSchedule {
  ScheduleKind kind = ScheduleKind::Cosine;
  std::vector<double> alpha_bar;

  std::size_t steps() const { return alpha_bar.size(); }
  /// Throws ConfigError unless 0 < alpha_bar <= 1 and non-increasing.
  void validate() const;
};

/// Linear betas run from 1e-4 to 0.02 at T = 1000 and are rescaled by 1000/T
/// for other lengths. Cosine uses offset s = 0.008 with betas capped at 0.999.
NoiseSchedule make_schedule(ScheduleKind kind, std::size_t T);

/// sqrt(ab_t) * x0 + sqrt(1 - ab_t) * eps. t outside [0, T) is a RangeError.
Tensor forward_diffuse(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched);
/// Same formula at an explicit alpha_bar in [0, 1].
Tensor forward_diffuse(const Tensor& x0, double alpha_bar, const Tensor& eps);

/// Uniform over [0, T).
std::size_t sample_timestep(RngState& rng, const NoiseSchedule& sched);

/// Mean squared error over all elements; shapes must match exactly.
Tensor gen_loss(const Tensor& eps, const Tensor& eps_pred);
Tensor ref_loss(const Tensor& ref_recon_pixels, const Tensor& ref_image);

struct LossTerms {
  double l_gen = 0;
  double l_ref = 0;
  double lambda = 0;
  double l_total = 0;
};

/// lambda = f_r / f_v, l_total = l_gen + lambda * l_ref.
LossTerms total_loss(double l_gen, double l_ref, int f_r, int f_v);
/// Differentiable form; returns the scalar tensor and fills `terms`.
Tensor total_loss(const Tensor& l_gen, const Tensor& l_ref, int f_r, int f_v, LossTerms* terms = nullptr);

/// Predicts the noise in `z_t` given the clean reference latent.
using Denoiser = std::function<Tensor(const Tensor& ref_latent, const Tensor& z_t, std::size_t t)>;

struct TrajectoryPoint {
  std::size_t step = 0;
  std::size_t t = 0;
  double mean = 0;
  double var = 0;
  std::optional<double> x0_mse;
};

struct SamplerOptions {
  /// Number of denoising steps, at most T. Zero returns the initial noise.
  std::size_t steps = 50;
  /// When set, each trajectory point records the predicted-x0 MSE against it.
  const Tensor* x0_true = nullptr;
  std::vector<TrajectoryPoint>* trajectory = nullptr;
  /// Applied to each predicted x0 (e.g. clipping to the data range); the
  /// noise estimate is then recomputed from the projected x0.
  std::function<Tensor(const Tensor&)> x0_projection;
};

/// Descending timesteps used by a respaced sampler: evenly spread over
/// [0, T - 1], always including both ends when steps >= 2.
std::vector<std::size_t> sampling_timesteps(std::size_t T, std::size_t steps);

/// DDPM ancestral sampling from `z_init`. The denoiser always receives the
/// same clean `ref_latent`; the last step returns the predicted x0.
Tensor ancestral_sample(const Denoiser& model, const Tensor& ref_latent, const Tensor& z_init,
                        const NoiseSchedule& sched, RngState& rng, const SamplerOptions& opts);

/// Deterministic DDIM (eta = 0).
Tensor ddim_sample(const Denoiser& model, const Tensor& ref_latent, const Tensor& z_init,
                   const NoiseSchedule& sched, const SamplerOptions& opts);

void write_trajectory_jsonl(std::ostream& out, const std::vector<TrajectoryPoint>& points);

}  // namespace ctxdit::diffusion
