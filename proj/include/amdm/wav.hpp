#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace amdm {

/// Multichannel time-domain audio, samples normalized to [-1, 1).
struct Waveform {
  std::vector<std::vector<double>> channels;
  double sample_rate = 16000.0;

  Waveform() = default;
  Waveform(std::size_t num_channels, std::size_t length, double fs = 16000.0)
      : channels(num_channels, std::vector<double>(length, 0.0)), sample_rate(fs) {}

  std::size_t num_channels() const noexcept { return channels.size(); }
  std::size_t length() const noexcept { return channels.empty() ? 0 : channels[0].size(); }
};

/// 16-bit PCM RIFF/WAVE, any channel count (WAVE_FORMAT_EXTENSIBLE with a PCM
/// subformat is accepted as well).
Waveform read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM little-endian. Samples are scaled by 32768, rounded and
/// clipped to the int16 range.
void write_wav(const std::filesystem::path& path, const Waveform& wav);

}  // namespace amdm
