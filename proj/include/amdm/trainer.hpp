#pragma once

// Denoising score matching training: per-element t ~ U(t_eps, 1) and Gaussian
// z, weighted DSM loss through the score network, AdamW updates, validation by
// SI-SDR after full enhancement, early stopping with checkpointing.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "amdm/dataset.hpp"
#include "amdm/enhance.hpp"
#include "amdm/params.hpp"
#include "amdm/score_net.hpp"
#include "amdm/sde.hpp"

namespace amdm::train {

struct TrainConfig {
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t max_steps = 1000;
  std::size_t val_every = 100;
  std::size_t patience = 5;
  std::uint64_t seed = 0;
  sde::LossWeight weight = sde::LossWeight::kSigmaSquared;
  std::size_t crop_frames = 64;  // 0 trains on whole utterances
  ConfigEntries checkpoint_metadata;  // stored in every checkpoint header

  void validate() const;
};

/// Compressed clean state s0 [2, T, F] and conditioner x [M, 2, T, F].
struct TrainingPair {
  Tensor s0;
  Tensor x;
};

/// Normalizes by the noisy peak, scales the target to its least-squares gain on
/// noisy channel 0, and analyzes both.
TrainingPair prepare_pair(const data::Utterance& utt, const FrontEnd& front_end);

/// RMS of all clean coefficients, rounded to 3 significant digits.
double estimate_data_scale(const std::vector<TrainingPair>& pairs);

/// Random crops of crop_frames frames (whole pairs if 0 or longer than T),
/// drawn sequentially from rng.
std::vector<TrainingPair> sample_batch(const std::vector<TrainingPair>& pool, std::size_t batch,
                                       std::size_t crop_frames, Rng& rng);

struct Perturbation {
  double t = 1.0;
  Tensor z;
};

/// One (t, z) per batch element, drawn in element order.
std::vector<Perturbation> draw_perturbations(const std::vector<TrainingPair>& batch,
                                             const sde::SdeParams& sde, Rng& rng);

struct LossAndGrads {
  double loss = 0.0;                 // batch mean
  std::vector<double> element_loss;  // per element
  ParamStore grads;                  // same layout as the parameters
};

/// Batch-mean DSM loss and its parameter gradients. Elements may run in
/// parallel; gradients are summed in element order.
LossAndGrads evaluate_loss(const ScoreNet& net, const std::vector<TrainingPair>& batch,
                           const std::vector<Perturbation>& perturbations, sde::LossWeight weight);

struct AdamState {
  ParamStore m, v;
  std::size_t step = 0;
};
AdamState make_adam(const ParamStore& params);

/// Decoupled weight decay: p -= lr (m_hat / (sqrt(v_hat) + eps) + wd p).
void adamw_update(ParamStore& params, AdamState& state, const ParamStore& grads,
                  const TrainConfig& config);

struct StepResult {
  double loss = 0.0;
  bool accepted = true;  // false when the loss or a gradient was not finite
};

/// Draws perturbations, evaluates the loss with the current parameters and
/// updates them. A non-finite loss leaves parameters and optimizer untouched.
StepResult train_step(ScoreNet& net, AdamState& adam, const std::vector<TrainingPair>& batch,
                      const TrainConfig& config, Rng& rng);

/// Mean SI-SDR (dB) of enhanced utterances against their targets.
double validate(const ScoreNet& net, const std::vector<data::Utterance>& val,
                const EnhanceOptions& options);

using Validator = std::function<double(const ScoreNet&)>;

struct FitResult {
  std::filesystem::path best_checkpoint;
  std::filesystem::path last_checkpoint;
  std::filesystem::path log;
  double best_score = 0.0;
  std::size_t steps = 0;
  std::size_t validations = 0;
  std::size_t rejected_steps = 0;
  bool early_stopped = false;
};

/// Trains until max_steps or until `patience` consecutive validations fail to
/// improve the best score. Writes <out>/best.ckpt (on every improvement),
/// <out>/last.ckpt (at every validation) and <out>/train_log.csv with a
/// header, one "step,loss," line per step and one "step,,score" line per
/// validation. A validation also runs after the final step if that step was
/// not already validated.
FitResult fit(ScoreNet& net, const std::vector<TrainingPair>& train, const Validator& validator,
              const TrainConfig& config, const std::filesystem::path& out_dir,
              const std::function<void(const std::string&)>& progress = {});

}  // namespace amdm::train
