#pragma once

#include <cstddef>
#include <vector>

#include "amdm/tensor.hpp"
#include "amdm/wav.hpp"

namespace amdm {

/// Periodic Hann analysis/synthesis. hop must divide fft_size and be at most
/// fft_size / 2 so that overlap-add of the squared window is constant.
struct StftParams {
  std::size_t fft_size = 512;
  std::size_t hop = 128;
  double sample_rate = 16000.0;

  std::size_t bins() const noexcept { return fft_size / 2 + 1; }
  void validate() const;
  /// Frames produced for a signal of `length` samples (0 if too short).
  std::size_t frames_for(std::size_t length) const noexcept;
};

/// Amplitude compression |x| -> beta * |x|^alpha with the phase kept.
struct Compression {
  double alpha = 0.5;
  double beta = 3.0;
};

/// Complex spectrogram stored as real/imag planes: [channels, 2, frames, bins].
struct Spectrogram {
  Tensor values;
  StftParams params;
  bool compressed = false;

  std::size_t channels() const { return values.dim(0); }
  std::size_t frames() const { return values.dim(2); }
  std::size_t bins() const { return values.dim(3); }
};

std::vector<double> periodic_hann(std::size_t n);

/// frames = 1 + (length - fft_size) / hop, no padding; forward DFT unscaled.
Spectrogram stft(const Waveform& wav, const StftParams& params);
/// Weighted overlap-add, normalized per sample by the summed squared window.
/// Output length is (frames - 1) * hop + fft_size.
Waveform istft(const Spectrogram& spec);

Spectrogram compress(const Spectrogram& spec, const Compression& c = {});
Spectrogram decompress(const Spectrogram& spec, const Compression& c = {});

/// 20 log10 |X| of one channel as [frames, bins], floored at floor_db.
Tensor magnitude_db(const Spectrogram& spec, std::size_t channel = 0, double floor_db = -100.0);

/// In-place variants over raw [.., 2, T, F] plane tensors.
void compress_planes(Tensor& planes, const Compression& c);
void decompress_planes(Tensor& planes, const Compression& c);

}  // namespace amdm
