#pragma once

// Compact U-Net score estimator conditioned on all microphone channels.
//
// Input planes: the (attention-expanded) compressed conditioner x, flattened to
// real/imag feature maps, concatenated with the two planes of the current state
// s_t. Encoder stages are 3x3 conv + group norm + time scale/shift + ReLU followed by
// 2x2 average pooling; the bottleneck reapplies cross-channel attention over M
// feature groups; decoder stages upsample, concatenate the skip and convolve.
// The state enters as u = (s_t - (1 - a) x_ref) / a with a = e^{-gamma t},
// i.e. the clean state plus noise of std sigma_e = sigma(t) / a, scaled to unit
// variance. The final 3x3 conv emits F and the score is
//   -(k(t) (1 - c_skip) u - c_out F) / (sigma(t) sigma_e)
//   c_skip = d^2 / (sigma_e^2 + d^2),  c_out = sigma_e d / sqrt(sigma_e^2 + d^2)
// for data scale d, where k(t) is a learned skip gain read from the time
// embedding. k = 1 gives the clean estimate h = c_skip u + c_out F. The
// output conv and k start at zero, so a fresh network returns a zero score.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>

#include "amdm/attention.hpp"
#include "amdm/autodiff.hpp"
#include "amdm/config.hpp"
#include "amdm/params.hpp"
#include "amdm/random.hpp"
#include "amdm/sde.hpp"

namespace amdm {

struct ScoreNetConfig {
  std::size_t channels = 4;  // M
  std::size_t levels = 2;    // encoder/decoder stages E
  std::size_t base_width = 32;
  bool attention = true;
  std::size_t attention_hidden = 8;
  std::size_t time_embedding_dim = 64;
  std::size_t norm_groups = 4;
  double data_scale = 1.0;  // typical magnitude of compressed clean coefficients
  sde::SdeParams sde;

  void validate() const;
  std::size_t stage_width(std::size_t level) const;
  std::size_t bottleneck_width() const;
  std::size_t input_planes() const;
  bool attention_active() const { return attention && channels >= 2; }
  AttentionConfig input_attention() const;
  AttentionConfig bottleneck_attention() const;

  friend bool operator==(const ScoreNetConfig& a, const ScoreNetConfig& b);
};

/// Sinusoidal embedding of t (scaled by 1000) with dim/2 log-spaced frequencies.
Tensor time_embedding(double t, std::size_t dim);

class ScoreNet {
 public:
  ScoreNet(ScoreNetConfig config, ParamStore params);

  /// He-normal conv/linear weights, zero biases, zero output conv.
  static ScoreNet init(const ScoreNetConfig& config, Rng& rng);

  const ScoreNetConfig& config() const noexcept { return config_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }
  std::size_t parameter_count() const noexcept { return params_.element_count(); }

  /// s_t [2, T, F], x [M, 2, T, F]; T and F must be multiples of 2^levels.
  Tensor forward(const Tensor& s_t, const Tensor& x, double t) const;
  /// Same, reflection-padding T and F up to multiples of 2^levels and
  /// cropping the output back.
  Tensor forward_padded(const Tensor& s_t, const Tensor& x, double t) const;

  /// Records the padded forward pass on `g`; returns the [2, T, F] score.
  ad::Var trace(ad::Graph& g, TracedParams& params, const Tensor& s_t, const Tensor& x,
                double t) const;

 private:
  void check_inputs(const Tensor& s_t, const Tensor& x) const;

  ScoreNetConfig config_;
  ParamStore params_;
};

/// Builds the zero-valued parameter layout for a config (names and shapes).
ParamStore parameter_layout(const ScoreNetConfig& config);

/// Reflection-pads the last two axes at their ends to the given sizes.
Tensor reflect_pad(const Tensor& t, std::size_t height, std::size_t width);

// Checkpoint: "AMDM", u32 version, u32 header length, u32 header CRC-32,
// UTF-8 header (hyperparameters + tensor manifest), little-endian float32
// payload. Header and payload are both checksummed.
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// `metadata` entries are stored as "meta.<key> = <value>" header lines.
void save_checkpoint(const ScoreNet& net, const std::filesystem::path& path,
                     const ConfigEntries& metadata = {});
ConfigEntries read_checkpoint_metadata(const std::filesystem::path& path);
ScoreNet load_checkpoint(const std::filesystem::path& path);
/// Rejects files whose architecture differs from `expected`.
ScoreNet load_checkpoint(const std::filesystem::path& path, const ScoreNetConfig& expected);

}  // namespace amdm
