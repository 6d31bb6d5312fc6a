#include "amdm/enhance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <stdexcept>

namespace amdm {

std::size_t FrontEnd::padded_length(std::size_t length) const {
  const std::size_t N = stft.fft_size, hop = stft.hop;
  const std::size_t base = length + 2 * pad_front();
  const std::size_t frames = base <= N ? 1 : 1 + (base - N + hop - 1) / hop;
  return (frames - 1) * hop + N;
}

Tensor FrontEnd::analyze(const std::vector<std::vector<double>>& channels) const {
  if (channels.empty()) throw std::invalid_argument("analyze: no channels");
  const std::size_t len = channels[0].size();
  Waveform padded(channels.size(), padded_length(len), stft.sample_rate);
  for (std::size_t c = 0; c < channels.size(); ++c) {
    if (channels[c].size() != len) throw std::invalid_argument("analyze: channels differ in length");
    std::copy(channels[c].begin(), channels[c].end(), padded.channels[c].begin() + pad_front());
  }
  Spectrogram spec = amdm::stft(padded, stft);
  compress_planes(spec.values, compression);
  return std::move(spec.values);
}

std::vector<double> FrontEnd::synthesize(const Tensor& planes, std::size_t length) const {
  if (planes.rank() != 3 || planes.dim(0) != 2)
    throw std::invalid_argument("synthesize: expected [2, T, F], got " + to_string(planes.shape()));
  Tensor v = planes.reshaped({1, 2, planes.dim(1), planes.dim(2)});
  decompress_planes(v, compression);
  const Waveform w = istft(Spectrogram{std::move(v), stft, false});
  if (w.length() < pad_front() + length)
    throw std::invalid_argument("synthesize: spectrogram too short for " + std::to_string(length) +
                                " samples");
  const auto begin = w.channels[0].begin() + static_cast<std::ptrdiff_t>(pad_front());
  return std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(length));
}

ConfigEntries front_end_metadata(const FrontEnd& fe) {
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  return {{"fft_size", std::to_string(fe.stft.fft_size)},
          {"hop", std::to_string(fe.stft.hop)},
          {"sample_rate", num(fe.stft.sample_rate)},
          {"compress_alpha", num(fe.compression.alpha)},
          {"compress_beta", num(fe.compression.beta)}};
}

FrontEnd front_end_from_metadata(const ConfigEntries& entries) {
  FrontEnd fe;
  for (const auto& [k, v] : entries) {
    if (k == "fft_size") fe.stft.fft_size = std::stoul(v);
    else if (k == "hop") fe.stft.hop = std::stoul(v);
    else if (k == "sample_rate") fe.stft.sample_rate = std::stod(v);
    else if (k == "compress_alpha") fe.compression.alpha = std::stod(v);
    else if (k == "compress_beta") fe.compression.beta = std::stod(v);
  }
  fe.stft.validate();
  return fe;
}

double normalization_gain(const Waveform& wav) {
  double peak = 0.0;
  for (const auto& ch : wav.channels)
    for (double v : ch) peak = std::max(peak, std::abs(v));
  return peak > 0.0 ? 1.0 / peak : 1.0;
}

sde::ScoreFn network_score(const ScoreNet& net) {
  return [&net](const Tensor& s_t, double t, const Tensor&, const Tensor& x) {
    return net.forward_padded(s_t, x, t);
  };
}

std::vector<double> enhance(const ScoreNet& net, const Waveform& noisy,
                            const EnhanceOptions& options) {
  const std::size_t M = net.config().channels;
  if (noisy.num_channels() != M)
    throw std::invalid_argument("enhance: input has " + std::to_string(noisy.num_channels()) +
                                " channels, checkpoint expects " + std::to_string(M));
  if (noisy.sample_rate != options.front_end.stft.sample_rate)
    throw std::invalid_argument("enhance: sample rate mismatch");
  const std::size_t len = noisy.length();
  const double gain = normalization_gain(noisy);
  std::vector<std::vector<double>> scaled = noisy.channels;
  for (auto& ch : scaled)
    for (double& v : ch) v *= gain;

  const Tensor x = options.front_end.analyze(scaled);
  sde::SdeParams p = net.config().sde;
  if (options.steps) p.n_steps = options.steps;
  Rng rng(options.seed);
  const Tensor s = sde::pc_sample(network_score(net), x, p, rng);

  std::vector<double> out = options.front_end.synthesize(s, len);
  for (double& v : out) v /= gain;
  return out;
}

}  // namespace amdm
