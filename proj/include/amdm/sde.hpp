#pragma once

// Ornstein-Uhlenbeck variance-exploding (OUVE) diffusion: the mean relaxes
// from the clean spectrogram toward the noisy conditioner at rate gamma while
// the noise scale grows geometrically from sigma_min to sigma_max.

#include <cstddef>
#include <functional>

#include "amdm/random.hpp"
#include "amdm/tensor.hpp"

namespace amdm::sde {

struct SdeParams {
  double gamma = 1.5;
  double sigma_min = 0.05;
  double sigma_max = 0.5;
  double t_eps = 0.03;
  std::size_t n_steps = 30;
  std::size_t corrector_steps = 1;
  double corrector_snr = 0.5;

  void validate() const;
};

struct DiffusionState {
  double t = 1.0;
  Tensor s_t;
};

/// e^{-gamma t} s0 + (1 - e^{-gamma t}) x
Tensor marginal_mean(const Tensor& s0, const Tensor& x, double t, const SdeParams& p);
/// Closed-form perturbation-kernel standard deviation; zero at t = 0.
double marginal_std(double t, const SdeParams& p);
DiffusionState perturb(const Tensor& s0, const Tensor& x, double t, const Tensor& z,
                       const SdeParams& p);
/// gamma (x_ref - s_t)
Tensor drift(const Tensor& s_t, const Tensor& x_ref, const SdeParams& p);
/// sigma_min (sigma_max/sigma_min)^t sqrt(2 log(sigma_max/sigma_min))
double diffusion_coeff(double t, const SdeParams& p);

enum class LossWeight { kSigmaSquared, kUnit };

/// lambda(t) * mean((score + (s_t - mu_t) / sigma_t^2)^2)
double dsm_loss(const Tensor& score, const Tensor& s_t, const Tensor& mu_t, double sigma_t,
                LossWeight weight);
/// d dsm_loss / d score
Tensor dsm_loss_grad(const Tensor& score, const Tensor& s_t, const Tensor& mu_t, double sigma_t,
                     LossWeight weight);

/// score(s_t, t, x_ref, x) with x the full [M, ...] conditioner.
using ScoreFn = std::function<Tensor(const Tensor& s_t, double t, const Tensor& x_ref,
                                     const Tensor& x)>;

struct SamplerOptions {
  /// false forces every injected Gaussian draw to zero.
  bool inject_noise = true;
  /// Called after each predictor(+corrector) step with the step index and state.
  std::function<void(std::size_t, const Tensor&)> on_step;
};

/// Predictor-corrector reverse sampler. x is [M, ...] with the reference
/// channel at index 0; the result has the reference channel's shape.
/// Starts from N(x_ref, sigma(1)^2 I) and integrates the reverse SDE from t = 1
/// to t_eps in n_steps reverse-diffusion steps, each followed (except the last)
/// by corrector_steps Langevin steps. The last predictor step adds no noise.
Tensor pc_sample(const ScoreFn& score, const Tensor& x, const SdeParams& p, Rng& rng,
                 const SamplerOptions& options = {});

}  // namespace amdm::sde
