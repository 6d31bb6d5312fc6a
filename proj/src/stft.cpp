#include "amdm/stft.hpp"

#include "fft.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>

namespace amdm {

using detail::FftBuffers;
using detail::Plans;
using detail::plans_for;
namespace {

void check_planes(const Tensor& t, const char* what) {
  if (t.rank() < 3 || t.dim(t.rank() - 3) != 2)
    throw std::invalid_argument(std::string(what) + ": expected [.., 2, frames, bins], got " +
                                to_string(t.shape()));
}

// Doubles mapped to integers in the same order, so neighbours differ by one.
std::int64_t ordered_key(double d) {
  const auto i = std::bit_cast<std::int64_t>(d);
  return i < 0 ? INT64_MIN - i : i;
}

double from_ordered_key(std::int64_t k) {
  return std::bit_cast<double>(k < 0 ? INT64_MIN - k : k);
}

// Smallest-offset y near `near` (same sign) with atan2(y, x) == phase, if any.
bool solve_imag(double x, double near, double phase, double& y) {
  const std::int64_t centre = ordered_key(near);
  std::int64_t lo = centre - (1 << 20), hi = centre + (1 << 20);
  if (near > 0.0) lo = std::max<std::int64_t>(lo, 1);
  if (near < 0.0) hi = std::min<std::int64_t>(hi, -1);
  const double dir = x > 0.0 ? 1.0 : -1.0;  // atan2 increases with y for x > 0
  while (lo < hi) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (dir * std::atan2(from_ordered_key(mid), x) < dir * phase) lo = mid + 1;
    else hi = mid;
  }
  for (std::int64_t k = lo - 1; k <= lo + 1; ++k)
    if (std::atan2(from_ordered_key(k), x) == phase) {
      y = from_ordered_key(k);
      return true;
    }
  return false;
}

// Multiplies (re, im) by gain. Rounding the two products separately can move
// atan2 by an ulp; when it does, nearby doubles are searched for a pair whose
// angle is the original one bit for bit. Magnitude moves by a few ulp at most.
void scale_keep_phase(double& re, double& im, double gain) {
  const double phase = std::atan2(im, re);
  const double a = re * gain, b = im * gain;
  re = a;
  im = b;
  if (std::atan2(b, a) == phase || a == 0.0 || b == 0.0) return;
  const std::int64_t ka = ordered_key(a);
  for (std::int64_t t = 0; t < 4096; ++t) {
    const std::int64_t off = (t % 2) ? (t + 1) / 2 : -(t / 2);
    const double x = from_ordered_key(ka + off);
    if ((x > 0.0) != (a > 0.0)) continue;
    double y;
    if (solve_imag(x, b, phase, y)) {
      re = x;
      im = y;
      return;
    }
  }
}

}  // namespace

void StftParams::validate() const {
  if (fft_size < 2 || hop == 0 || fft_size % hop != 0 || hop > fft_size / 2)
    throw std::invalid_argument("stft: hop " + std::to_string(hop) +
                                " must divide fft_size " + std::to_string(fft_size) +
                                " and be at most fft_size/2");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("stft: sample_rate must be positive");
}

std::size_t StftParams::frames_for(std::size_t length) const noexcept {
  return length < fft_size ? 0 : 1 + (length - fft_size) / hop;
}

std::vector<double> periodic_hann(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                static_cast<double>(n));
  return w;
}

Spectrogram stft(const Waveform& wav, const StftParams& params) {
  params.validate();
  const std::size_t C = wav.num_channels();
  if (C == 0) throw std::invalid_argument("stft: no channels");
  const std::size_t len = wav.length();
  for (const auto& ch : wav.channels)
    if (ch.size() != len) throw std::invalid_argument("stft: channels differ in length");
  if (len < params.fft_size)
    throw std::invalid_argument("stft: signal of " + std::to_string(len) +
                                " samples is shorter than fft_size " +
                                std::to_string(params.fft_size));
  const std::size_t N = params.fft_size, K = params.bins(), L = params.frames_for(len);
  const auto window = periodic_hann(N);
  const Plans& plan = plans_for(N);
  FftBuffers buf(N);

  Spectrogram out{Tensor({C, 2, L, K}), params, false};
  double* v = out.values.data();
  for (std::size_t c = 0; c < C; ++c) {
    double* re = v + (c * 2) * L * K;
    double* im = re + L * K;
    for (std::size_t l = 0; l < L; ++l) {
      const double* src = wav.channels[c].data() + l * params.hop;
      for (std::size_t n = 0; n < N; ++n) buf.real[n] = src[n] * window[n];
      fftw_execute_dft_r2c(plan.forward, buf.real, buf.spec);
      for (std::size_t k = 0; k < K; ++k) {
        re[l * K + k] = buf.spec[k][0];
        im[l * K + k] = buf.spec[k][1];
      }
    }
  }
  return out;
}

Waveform istft(const Spectrogram& spec) {
  if (spec.compressed) throw std::invalid_argument("istft: spectrogram is compressed; decompress first");
  const StftParams& params = spec.params;
  params.validate();
  check_planes(spec.values, "istft");
  if (spec.values.rank() != 4 || spec.bins() != params.bins())
    throw std::invalid_argument("istft: expected [C, 2, frames, " + std::to_string(params.bins()) +
                                "], got " + to_string(spec.values.shape()));
  const std::size_t C = spec.channels(), L = spec.frames(), K = spec.bins();
  const std::size_t N = params.fft_size, hop = params.hop;
  const std::size_t len = (L - 1) * hop + N;
  const auto window = periodic_hann(N);
  const Plans& plan = plans_for(N);
  FftBuffers buf(N);

  std::vector<double> norm(len, 0.0);
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t n = 0; n < N; ++n) norm[l * hop + n] += window[n] * window[n];

  Waveform out(C, len, params.sample_rate);
  const double* v = spec.values.data();
  const double inv_n = 1.0 / static_cast<double>(N);
  for (std::size_t c = 0; c < C; ++c) {
    const double* re = v + (c * 2) * L * K;
    const double* im = re + L * K;
    auto& y = out.channels[c];
    for (std::size_t l = 0; l < L; ++l) {
      for (std::size_t k = 0; k < K; ++k) {
        buf.spec[k][0] = re[l * K + k];
        buf.spec[k][1] = im[l * K + k];
      }
      fftw_execute_dft_c2r(plan.inverse, buf.spec, buf.real);
      for (std::size_t n = 0; n < N; ++n) y[l * hop + n] += buf.real[n] * inv_n * window[n];
    }
    for (std::size_t n = 0; n < len; ++n) y[n] = norm[n] > 1e-10 ? y[n] / norm[n] : 0.0;
  }
  return out;
}

void compress_planes(Tensor& planes, const Compression& c) {
  check_planes(planes, "compress");
  const std::size_t r = planes.rank();
  const std::size_t plane = planes.dim(r - 2) * planes.dim(r - 1);
  const std::size_t groups = planes.size() / (2 * plane);
  for (std::size_t g = 0; g < groups; ++g) {
    double* re = planes.data() + 2 * g * plane;
    double* im = re + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double mag = std::hypot(re[i], im[i]);
      if (mag == 0.0) continue;
      scale_keep_phase(re[i], im[i], c.beta * std::pow(mag, c.alpha) / mag);
    }
  }
}

void decompress_planes(Tensor& planes, const Compression& c) {
  check_planes(planes, "decompress");
  const std::size_t r = planes.rank();
  const std::size_t plane = planes.dim(r - 2) * planes.dim(r - 1);
  const std::size_t groups = planes.size() / (2 * plane);
  for (std::size_t g = 0; g < groups; ++g) {
    double* re = planes.data() + 2 * g * plane;
    double* im = re + plane;
    for (std::size_t i = 0; i < plane; ++i) {
      const double mag = std::hypot(re[i], im[i]);
      if (mag == 0.0) continue;
      scale_keep_phase(re[i], im[i], std::pow(mag / c.beta, 1.0 / c.alpha) / mag);
    }
  }
}

Spectrogram compress(const Spectrogram& spec, const Compression& c) {
  if (spec.compressed) throw std::invalid_argument("compress: spectrogram already compressed");
  Spectrogram out = spec;
  compress_planes(out.values, c);
  out.compressed = true;
  return out;
}

Spectrogram decompress(const Spectrogram& spec, const Compression& c) {
  if (!spec.compressed) throw std::invalid_argument("decompress: spectrogram is not compressed");
  Spectrogram out = spec;
  decompress_planes(out.values, c);
  out.compressed = false;
  return out;
}

Tensor magnitude_db(const Spectrogram& spec, std::size_t channel, double floor_db) {
  if (channel >= spec.channels())
    throw std::out_of_range("magnitude_db: channel " + std::to_string(channel) + " out of range");
  const std::size_t L = spec.frames(), K = spec.bins();
  const double* re = spec.values.data() + channel * 2 * L * K;
  const double* im = re + L * K;
  const double floor_mag = std::pow(10.0, floor_db / 20.0);
  Tensor out({L, K});
  for (std::size_t i = 0; i < L * K; ++i)
    out[i] = 20.0 * std::log10(std::max(std::hypot(re[i], im[i]), floor_mag));
  return out;
}

}  // namespace amdm
