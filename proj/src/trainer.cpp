#include "amdm/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "amdm/metrics.hpp"
#include "amdm/parallel.hpp"

namespace amdm::train {
namespace {

Tensor crop_frames(const Tensor& t, std::size_t begin, std::size_t count) {
  // [..., T, F] -> [..., count, F]
  const std::size_t r = t.rank();
  const std::size_t T = t.dim(r - 2), F = t.dim(r - 1);
  Shape s = t.shape();
  s[r - 2] = count;
  Tensor out(s);
  const std::size_t outer = t.size() / (T * F);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy(t.data() + (o * T + begin) * F, t.data() + (o * T + begin + count) * F,
              out.data() + o * count * F);
  return out;
}

void save_atomic(const ScoreNet& net, const std::filesystem::path& path,
                 const ConfigEntries& metadata) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  save_checkpoint(net, tmp, metadata);
  std::filesystem::rename(tmp, path);
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("train: learning_rate must be finite and >= 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight_decay must be >= 0");
  if (patience == 0) throw std::invalid_argument("train: patience must be >= 1");
  if (val_every == 0) throw std::invalid_argument("train: val_every must be >= 1");
}

TrainingPair prepare_pair(const data::Utterance& utt, const FrontEnd& front_end) {
  if (utt.noisy.num_channels() == 0 || utt.target.size() != utt.noisy.length())
    throw std::invalid_argument("prepare_pair: " + utt.id + ": noisy/target mismatch");
  const double gain = normalization_gain(utt.noisy);
  const auto& ref = utt.noisy.channels[0];
  double rt = 0.0, tt = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rt += ref[i] * utt.target[i];
    tt += utt.target[i] * utt.target[i];
  }
  const double target_gain = tt > 0.0 ? rt / tt : 0.0;

  std::vector<std::vector<double>> noisy = utt.noisy.channels;
  for (auto& ch : noisy)
    for (double& v : ch) v *= gain;
  std::vector<std::vector<double>> target{utt.target};
  for (double& v : target[0]) v *= gain * target_gain;

  TrainingPair p;
  p.x = front_end.analyze(noisy);
  Tensor s = front_end.analyze(target);
  p.s0 = s.reshaped({2, s.dim(2), s.dim(3)});
  return p;
}

double estimate_data_scale(const std::vector<TrainingPair>& pairs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& p : pairs) {
    sum += p.s0.squared_norm();
    n += p.s0.size();
  }
  if (n == 0 || !(sum > 0.0)) throw std::invalid_argument("estimate_data_scale: silent training set");
  const double rms = std::sqrt(sum / static_cast<double>(n));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", rms);
  return std::stod(buf);
}

std::vector<TrainingPair> sample_batch(const std::vector<TrainingPair>& pool, std::size_t batch,
                                       std::size_t frames, Rng& rng) {
  if (pool.empty()) throw std::invalid_argument("sample_batch: empty training set");
  std::vector<TrainingPair> out;
  out.reserve(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const TrainingPair& p = pool[rng() % pool.size()];
    const std::size_t T = p.s0.dim(1);
    if (frames == 0 || frames >= T) {
      out.push_back(p);
      continue;
    }
    const std::size_t begin = rng() % (T - frames + 1);
    out.push_back({crop_frames(p.s0, begin, frames), crop_frames(p.x, begin, frames)});
  }
  return out;
}

std::vector<Perturbation> draw_perturbations(const std::vector<TrainingPair>& batch,
                                             const sde::SdeParams& sde, Rng& rng) {
  std::vector<Perturbation> out;
  for (const auto& p : batch) {
    Perturbation q;
    q.t = uniform(rng, sde.t_eps, 1.0);
    q.z = normal_tensor(rng, p.s0.shape());
    out.push_back(std::move(q));
  }
  return out;
}

LossAndGrads evaluate_loss(const ScoreNet& net, const std::vector<TrainingPair>& batch,
                           const std::vector<Perturbation>& perturbations, sde::LossWeight weight) {
  if (batch.empty() || batch.size() != perturbations.size())
    throw std::invalid_argument("evaluate_loss: batch and perturbations differ in size");
  const sde::SdeParams& sde = net.config().sde;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  std::vector<double> losses(batch.size());
  std::vector<ad::Gradients> grads(batch.size());

  parallel_for(batch.size(), [&](std::size_t i) {
    const TrainingPair& p = batch[i];
    const Perturbation& q = perturbations[i];
    const Tensor x_ref = p.x.slice0(0).reshaped(p.s0.shape());
    const sde::DiffusionState state = sde::perturb(p.s0, x_ref, q.t, q.z, sde);
    const Tensor mu = sde::marginal_mean(p.s0, x_ref, q.t, sde);
    const double sigma = sde::marginal_std(q.t, sde);

    ad::Graph g;
    TracedParams params(g, net.params());
    const ad::Var out = net.trace(g, params, state.s_t, p.x, q.t);
    const Tensor& score = g.value(out);
    losses[i] = sde::dsm_loss(score, state.s_t, mu, sigma, weight);
    Tensor seed = sde::dsm_loss_grad(score, state.s_t, mu, sigma, weight);
    for (double& v : seed.values()) v *= inv_b;
    grads[i] = g.backward(out, seed);
  });

  LossAndGrads r;
  r.element_loss = losses;
  for (double l : losses) r.loss += l * inv_b;
  for (const auto& [name, value] : net.params()) {
    Tensor sum(value.shape());
    for (const auto& g : grads)
      if (const Tensor* t = g.find(name)) axpy(1.0, *t, sum);
    r.grads.add(name, std::move(sum));
  }
  return r;
}

AdamState make_adam(const ParamStore& params) {
  AdamState s;
  for (const auto& [name, value] : params) {
    s.m.add(name, Tensor(value.shape()));
    s.v.add(name, Tensor(value.shape()));
  }
  return s;
}

void adamw_update(ParamStore& params, AdamState& state, const ParamStore& grads,
                  const TrainConfig& cfg) {
  ++state.step;
  const double k = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, k);
  const double c2 = 1.0 - std::pow(cfg.beta2, k);
  for (auto& [name, p] : params) {
    const Tensor& g = grads.get(name);
    Tensor& m = state.m.get(name);
    Tensor& v = state.v.get(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double step = (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.adam_eps);
      p[i] -= cfg.learning_rate * (step + cfg.weight_decay * p[i]);
    }
  }
}

StepResult train_step(ScoreNet& net, AdamState& adam, const std::vector<TrainingPair>& batch,
                      const TrainConfig& cfg, Rng& rng) {
  const auto perturbations = draw_perturbations(batch, net.config().sde, rng);
  LossAndGrads lg = evaluate_loss(net, batch, perturbations, cfg.weight);
  StepResult r{lg.loss, std::isfinite(lg.loss) && lg.grads.all_finite()};
  if (r.accepted) adamw_update(net.params(), adam, lg.grads, cfg);
  return r;
}

double validate(const ScoreNet& net, const std::vector<data::Utterance>& val,
                const EnhanceOptions& options) {
  if (val.empty()) throw std::invalid_argument("validate: empty validation set");
  double sum = 0.0;
  for (std::size_t i = 0; i < val.size(); ++i) {
    EnhanceOptions o = options;
    o.seed = derive_seed(options.seed, i);
    const std::vector<double> est = enhance(net, val[i].noisy, o);
    sum += metrics::si_sdr(est, val[i].target);
  }
  return sum / static_cast<double>(val.size());
}

FitResult fit(ScoreNet& net, const std::vector<TrainingPair>& train, const Validator& validator,
              const TrainConfig& cfg, const std::filesystem::path& out_dir,
              const std::function<void(const std::string&)>& progress) {
  cfg.validate();
  if (train.empty()) throw std::invalid_argument("fit: empty training set");
  std::filesystem::create_directories(out_dir);
  FitResult res;
  res.best_checkpoint = out_dir / "best.ckpt";
  res.last_checkpoint = out_dir / "last.ckpt";
  res.log = out_dir / "train_log.csv";
  res.best_score = -std::numeric_limits<double>::infinity();

  std::ofstream log(res.log, std::ios::trunc);
  if (!log) throw std::runtime_error("fit: cannot write " + res.log.string());
  log << "step,loss,val_sisdr\n" << std::flush;
  save_atomic(net, res.last_checkpoint, cfg.checkpoint_metadata);
  auto note = [&](const std::string& s) {
    if (progress) progress(s);
  };

  Rng rng(cfg.seed);
  AdamState adam = make_adam(net.params());
  std::size_t stale = 0;
  bool validated_last = false;

  auto run_validation = [&](std::size_t step) {
    const double score = validator(net);
    ++res.validations;
    char line[96];
    std::snprintf(line, sizeof line, "%zu,,%.17g\n", step, score);
    log << line << std::flush;
    save_atomic(net, res.last_checkpoint, cfg.checkpoint_metadata);
    if (score > res.best_score) {
      res.best_score = score;
      stale = 0;
      save_atomic(net, res.best_checkpoint, cfg.checkpoint_metadata);
    } else {
      ++stale;
    }
    char msg[128];
    std::snprintf(msg, sizeof msg, "step %zu: validation %.3f dB (best %.3f)", step, score,
                  res.best_score);
    note(msg);
  };

  try {
    for (std::size_t step = 1; step <= cfg.max_steps; ++step) {
      const auto batch = sample_batch(train, cfg.batch_size, cfg.crop_frames, rng);
      const StepResult r = train_step(net, adam, batch, cfg, rng);
      res.steps = step;
      char line[96];
      std::snprintf(line, sizeof line, "%zu,%.17g,\n", step, r.loss);
      log << line << std::flush;
      if (!r.accepted) {
        ++res.rejected_steps;
        note("step " + std::to_string(step) + ": non-finite loss, update skipped");
      }
      validated_last = false;
      if (step % cfg.val_every == 0) {
        run_validation(step);
        validated_last = true;
        if (stale >= cfg.patience) {
          res.early_stopped = true;
          break;
        }
      }
    }
    if (!validated_last) run_validation(res.steps);
  } catch (const std::exception& e) {
    log << "# aborted at step " << res.steps << ": " << e.what() << "\n" << std::flush;
    throw;
  }
  return res;
}

}  // namespace amdm::train
