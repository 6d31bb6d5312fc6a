#include "amdm/sde.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace amdm::sde {
namespace {

void check_time(double t, const char* what) {
  if (!(t >= 0.0 && t <= 1.0))
    throw std::invalid_argument(std::string(what) + ": t = " + std::to_string(t) +
                                " outside [0, 1]");
}

}  // namespace

void SdeParams::validate() const {
  if (!(sigma_min > 0.0 && sigma_min < sigma_max))
    throw std::invalid_argument("sde: need 0 < sigma_min < sigma_max");
  if (!(gamma > 0.0)) throw std::invalid_argument("sde: gamma must be positive");
  if (!(t_eps > 0.0 && t_eps < 1.0)) throw std::invalid_argument("sde: t_eps must lie in (0, 1)");
  if (n_steps < 1) throw std::invalid_argument("sde: n_steps must be >= 1");
  if (!(corrector_snr >= 0.0)) throw std::invalid_argument("sde: corrector_snr must be >= 0");
}

Tensor marginal_mean(const Tensor& s0, const Tensor& x, double t, const SdeParams& p) {
  require_same_shape(s0, x, "marginal_mean");
  const double a = std::exp(-p.gamma * t);
  Tensor mu(s0.shape());
  for (std::size_t i = 0; i < mu.size(); ++i) mu[i] = a * s0[i] + (1.0 - a) * x[i];
  return mu;
}

double marginal_std(double t, const SdeParams& p) {
  check_time(t, "marginal_std");
  if (p.sigma_max == p.sigma_min)
    throw std::invalid_argument("marginal_std: sigma_max == sigma_min makes log ratio zero");
  const double ratio = p.sigma_max / p.sigma_min;
  const double log_ratio = std::log(ratio);
  const double var = p.sigma_min * p.sigma_min *
                     (std::pow(ratio, 2.0 * t) - std::exp(-2.0 * p.gamma * t)) /
                     (2.0 * log_ratio);
  return std::sqrt(std::max(var, 0.0));
}

DiffusionState perturb(const Tensor& s0, const Tensor& x, double t, const Tensor& z,
                       const SdeParams& p) {
  require_same_shape(s0, z, "perturb");
  Tensor s = marginal_mean(s0, x, t, p);
  axpy(marginal_std(t, p), z, s);
  return {t, std::move(s)};
}

Tensor drift(const Tensor& s_t, const Tensor& x_ref, const SdeParams& p) {
  require_same_shape(s_t, x_ref, "drift");
  Tensor f(s_t.shape());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = p.gamma * (x_ref[i] - s_t[i]);
  return f;
}

double diffusion_coeff(double t, const SdeParams& p) {
  check_time(t, "diffusion_coeff");
  const double ratio = p.sigma_max / p.sigma_min;
  return p.sigma_min * std::pow(ratio, t) * std::sqrt(2.0 * std::log(ratio));
}

double dsm_loss(const Tensor& score, const Tensor& s_t, const Tensor& mu_t, double sigma_t,
                LossWeight weight) {
  require_same_shape(score, s_t, "dsm_loss");
  require_same_shape(score, mu_t, "dsm_loss");
  if (!(sigma_t > 0.0)) throw std::invalid_argument("dsm_loss: sigma_t must be positive");
  const double inv_var = 1.0 / (sigma_t * sigma_t);
  const double lambda = weight == LossWeight::kSigmaSquared ? sigma_t * sigma_t : 1.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    const double r = score[i] + (s_t[i] - mu_t[i]) * inv_var;
    acc += r * r;
  }
  return lambda * acc / static_cast<double>(score.size());
}

Tensor dsm_loss_grad(const Tensor& score, const Tensor& s_t, const Tensor& mu_t, double sigma_t,
                     LossWeight weight) {
  require_same_shape(score, s_t, "dsm_loss_grad");
  require_same_shape(score, mu_t, "dsm_loss_grad");
  if (!(sigma_t > 0.0)) throw std::invalid_argument("dsm_loss_grad: sigma_t must be positive");
  const double inv_var = 1.0 / (sigma_t * sigma_t);
  const double lambda = weight == LossWeight::kSigmaSquared ? sigma_t * sigma_t : 1.0;
  const double c = 2.0 * lambda / static_cast<double>(score.size());
  Tensor g(score.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = c * (score[i] + (s_t[i] - mu_t[i]) * inv_var);
  return g;
}

Tensor pc_sample(const ScoreFn& score_fn, const Tensor& x, const SdeParams& p, Rng& rng,
                 const SamplerOptions& options) {
  p.validate();
  if (x.rank() < 2) throw std::invalid_argument("pc_sample: conditioner must be [M, ...]");
  Shape ref_shape(x.shape().begin() + 1, x.shape().end());
  const Tensor x_ref = x.slice0(0).reshaped(ref_shape);

  auto draw = [&](Tensor& z) {
    if (options.inject_noise)
      fill_normal(rng, z.values());
    else
      z.fill(0.0);
  };
  auto evaluate = [&](const Tensor& s, double t, std::size_t step) {
    Tensor sc = score_fn(s, t, x_ref, x);
    if (sc.shape() != s.shape())
      throw std::runtime_error("pc_sample: score shape " + to_string(sc.shape()) +
                               " differs from state " + to_string(s.shape()));
    if (!sc.all_finite())
      throw std::runtime_error("pc_sample: non-finite score at step " + std::to_string(step));
    return sc;
  };

  Tensor z(ref_shape);
  draw(z);
  Tensor s = x_ref;
  axpy(marginal_std(1.0, p), z, s);

  const double dt = (1.0 - p.t_eps) / static_cast<double>(p.n_steps);
  for (std::size_t i = 0; i < p.n_steps; ++i) {
    const double t = 1.0 - static_cast<double>(i) * dt;
    const bool last = i + 1 == p.n_steps;

    // Predictor: reverse-time Euler-Maruyama, s <- s - (f - g^2 score) dt + g sqrt(dt) z.
    const Tensor score = evaluate(s, t, i);
    const double g = diffusion_coeff(t, p);
    const double g2 = g * g;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double f = p.gamma * (x_ref[k] - s[k]);
      s[k] -= (f - g2 * score[k]) * dt;
    }
    if (!last) {
      draw(z);
      axpy(g * std::sqrt(dt), z, s);
    }

    // Corrector: Langevin steps at the new time.
    if (!last) {
      const double t_next = t - dt;
      for (std::size_t c = 0; c < p.corrector_steps; ++c) {
        const Tensor grad = evaluate(s, t_next, i);
        draw(z);
        const double grad_norm = std::sqrt(grad.squared_norm());
        const double noise_norm = std::sqrt(z.squared_norm());
        if (grad_norm == 0.0 || noise_norm == 0.0) continue;
        const double ratio = p.corrector_snr * noise_norm / grad_norm;
        const double eps = 2.0 * ratio * ratio;
        axpy(eps, grad, s);
        axpy(std::sqrt(2.0 * eps), z, s);
      }
    }
    if (options.on_step) options.on_step(i, s);
  }
  return s;
}

}  // namespace amdm::sde
