#pragma once

// Waveform <-> compressed spectrogram bookkeeping shared by training and
// enhancement, and the full enhancement pipeline:
//   normalize -> pad -> STFT -> compress -> PC sampling -> decompress -> iSTFT
//   -> crop -> undo normalization.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "amdm/config.hpp"
#include "amdm/random.hpp"
#include "amdm/score_net.hpp"
#include "amdm/sde.hpp"
#include "amdm/stft.hpp"
#include "amdm/wav.hpp"

namespace amdm {

struct FrontEnd {
  StftParams stft;
  Compression compression;

  /// Leading zero padding (fft_size - hop) so every original sample gets full
  /// overlap-add weight.
  std::size_t pad_front() const { return stft.fft_size - stft.hop; }
  /// Padded length for `length` input samples: pad_front on both ends plus
  /// enough to land on the hop grid.
  std::size_t padded_length(std::size_t length) const;

  /// Compressed [C, 2, T, F] planes of the padded channels.
  Tensor analyze(const std::vector<std::vector<double>>& channels) const;
  /// Inverse of analyze for one [2, T, F] plane pair, cropped to `length`.
  std::vector<double> synthesize(const Tensor& planes, std::size_t length) const;
};

/// fft_size, hop, sample_rate, compress_alpha, compress_beta entries.
ConfigEntries front_end_metadata(const FrontEnd& fe);
/// Missing entries keep their defaults.
FrontEnd front_end_from_metadata(const ConfigEntries& entries);

/// 1 / max|x| over all channels (1 for silence).
double normalization_gain(const Waveform& wav);

struct EnhanceOptions {
  FrontEnd front_end;
  std::size_t steps = 0;  // reverse steps; 0 keeps the checkpoint's n_steps
  std::uint64_t seed = 0;
};

/// Single-channel enhanced estimate of the reference channel, same length as
/// the input. Deterministic given options.seed.
std::vector<double> enhance(const ScoreNet& net, const Waveform& noisy, const EnhanceOptions& options);

/// Score callback for pc_sample backed by the network.
sde::ScoreFn network_score(const ScoreNet& net);

}  // namespace amdm
