#include "amdm/scene.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "fft.hpp"

namespace amdm::scene {
namespace {

constexpr double kPi = std::numbers::pi;

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool inside(const Vec3& p, const Vec3& room, double clearance) {
  return p.x >= clearance && p.x <= room.x - clearance && p.y >= clearance &&
         p.y <= room.y - clearance && p.z >= clearance && p.z <= room.z - clearance;
}

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

// Rounds onto a 2^-40 grid. Sums of two grid values below 2^12 in magnitude
// are exact, so noisy - noise reproduces the reverberant speech bit for bit.
double on_grid(double v) { return std::ldexp(std::nearbyint(std::ldexp(v, 40)), -40); }

double mean_square(const std::vector<double>& v, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += v[i] * v[i];
  return acc / static_cast<double>(n);
}

}  // namespace

double distance(const Vec3& a, const Vec3& b) {
  return std::sqrt((a.x - b.x) * (a.x - b.x) + (a.y - b.y) * (a.y - b.y) +
                   (a.z - b.z) * (a.z - b.z));
}

void SceneConfig::validate() const {
  if (!(room.x > 2 * kWallClearance && room.y > 2 * kWallClearance && room.z > 2 * kWallClearance))
    throw std::invalid_argument("scene: room dimensions too small");
  if (mics.empty()) throw std::invalid_argument("scene: no microphones");
  if (!inside(source, room, kWallClearance))
    throw std::invalid_argument("scene: source closer than 0.1 m to a wall");
  for (std::size_t m = 0; m < mics.size(); ++m)
    if (!inside(mics[m], room, kWallClearance))
      throw std::invalid_argument("scene: mic " + std::to_string(m) +
                                  " closer than 0.1 m to a wall");
  if (!(rt60 > 0.0) || !std::isfinite(rt60)) throw std::invalid_argument("scene: rt60 must be > 0");
  if (!std::isfinite(snr_db)) throw std::invalid_argument("scene: snr_db must be finite");
  if (!(sample_rate > 0.0)) throw std::invalid_argument("scene: sample_rate must be > 0");
}

double wall_reflection(const Vec3& room, double rt60) {
  const double volume = room.x * room.y * room.z;
  const double surface = 2.0 * (room.x * room.y + room.x * room.z + room.y * room.z);
  const double absorption = 0.161 * volume / (surface * rt60);
  return absorption >= 1.0 ? 0.0 : std::sqrt(1.0 - absorption);
}

double direct_delay(const SceneConfig& config, std::size_t mic) {
  return distance(config.source, config.mics.at(mic)) / kSpeedOfSound * config.sample_rate;
}

void add_pulse(std::vector<double>& out, double delay, double amplitude) {
  const long half = static_cast<long>(kPulseTaps / 2);
  const long centre = std::lround(delay);
  const long n = static_cast<long>(out.size());
  for (long i = std::max(0L, centre - half); i <= std::min(n - 1, centre + half); ++i) {
    const double x = static_cast<double>(i) - delay;
    const double window = 0.5 * (1.0 + std::cos(2.0 * kPi * x / static_cast<double>(kPulseTaps)));
    const double sinc = x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x);
    out[static_cast<std::size_t>(i)] += amplitude * window * sinc;
  }
}

Rir simulate_rir(const SceneConfig& config, std::size_t mic) {
  config.validate();
  if (mic >= config.mics.size())
    throw std::out_of_range("simulate_rir: mic index " + std::to_string(mic) + " out of range");
  const Vec3& src = config.source;
  const Vec3& rcv = config.mics[mic];
  if (distance(src, rcv) < 1e-6) throw std::invalid_argument("simulate_rir: source coincides with mic");

  const double fs = config.sample_rate;
  const double beta = wall_reflection(config.room, config.rt60);
  const double direct = direct_delay(config, mic);
  const auto length = static_cast<std::size_t>(std::max(
      std::ceil(1.5 * config.rt60 * fs - 1e-9), std::ceil(direct) + static_cast<double>(kPulseTaps)));
  Rir rir{std::vector<double>(length, 0.0), fs};

  const double max_dist = (static_cast<double>(length) + kPulseTaps / 2) / fs * kSpeedOfSound;
  // Per axis: offsets of every image coordinate from the receiver and the
  // number of wall reflections it took.
  struct Axis {
    std::vector<double> offset;
    std::vector<int> reflections;
  };
  auto axis = [&](double s, double r, double L) {
    Axis a;
    const int n_max = static_cast<int>(std::ceil(max_dist / (2.0 * L))) + 1;
    for (int n = -n_max; n <= n_max; ++n)
      for (int u = 0; u <= 1; ++u) {
        const double img = (1 - 2 * u) * s + 2.0 * n * L;
        if (std::abs(img - r) > max_dist) continue;
        a.offset.push_back(img - r);
        a.reflections.push_back(std::abs(n - u) + std::abs(n));
      }
    return a;
  };
  const Axis ax = axis(src.x, rcv.x, config.room.x);
  const Axis ay = axis(src.y, rcv.y, config.room.y);
  const Axis az = axis(src.z, rcv.z, config.room.z);

  for (std::size_t i = 0; i < ax.offset.size(); ++i)
    for (std::size_t j = 0; j < ay.offset.size(); ++j) {
      const double dxy = ax.offset[i] * ax.offset[i] + ay.offset[j] * ay.offset[j];
      if (dxy > max_dist * max_dist) continue;
      for (std::size_t k = 0; k < az.offset.size(); ++k) {
        const double d = std::sqrt(dxy + az.offset[k] * az.offset[k]);
        if (d > max_dist) continue;
        const int order = ax.reflections[i] + ay.reflections[j] + az.reflections[k];
        const double gain = std::pow(beta, order);
        if (gain == 0.0) continue;
        add_pulse(rir.taps, d / kSpeedOfSound * fs, gain / (4.0 * kPi * d));
      }
    }
  return rir;
}

std::vector<double> convolve(const std::vector<double>& signal, const std::vector<double>& taps,
                             std::size_t length) {
  std::vector<double> out(length, 0.0);
  if (signal.empty() || taps.empty() || length == 0) return out;
  const std::size_t n = next_pow2(signal.size() + taps.size() - 1);
  const detail::Plans& plan = detail::plans_for(n);
  detail::FftBuffers a(n), b(n);
  std::fill(a.real, a.real + n, 0.0);
  std::fill(b.real, b.real + n, 0.0);
  std::copy(signal.begin(), signal.end(), a.real);
  std::copy(taps.begin(), taps.end(), b.real);
  fftw_execute_dft_r2c(plan.forward, a.real, a.spec);
  fftw_execute_dft_r2c(plan.forward, b.real, b.spec);
  for (std::size_t k = 0; k < n / 2 + 1; ++k) {
    const double re = a.spec[k][0] * b.spec[k][0] - a.spec[k][1] * b.spec[k][1];
    const double im = a.spec[k][0] * b.spec[k][1] + a.spec[k][1] * b.spec[k][0];
    a.spec[k][0] = re;
    a.spec[k][1] = im;
  }
  fftw_execute_dft_c2r(plan.inverse, a.spec, a.real);
  const std::size_t valid = std::min(length, signal.size() + taps.size() - 1);
  for (std::size_t i = 0; i < valid; ++i) out[i] = a.real[i] / static_cast<double>(n);
  return out;
}

Mixture render_scene(const std::vector<double>& speech, const Waveform& noise,
                     const SceneConfig& config) {
  config.validate();
  const std::size_t n = speech.size();
  const std::size_t M = config.mics.size();
  if (n == 0) throw std::invalid_argument("render_scene: empty speech");
  if (noise.num_channels() != M && noise.num_channels() != 1)
    throw std::invalid_argument("render_scene: noise has " + std::to_string(noise.num_channels()) +
                                " channels, expected 1 or " + std::to_string(M));
  if (noise.length() < n)
    throw std::invalid_argument("render_scene: noise shorter than speech (" +
                                std::to_string(noise.length()) + " < " + std::to_string(n) + ")");
  if (mean_square(speech, n) == 0.0) throw std::invalid_argument("render_scene: silent speech");

  Mixture mix;
  mix.config = config;
  mix.reverberant = Waveform(M, n, config.sample_rate);
  for (std::size_t m = 0; m < M; ++m) {
    mix.reverberant.channels[m] = convolve(speech, simulate_rir(config, m).taps, n);
    for (double& v : mix.reverberant.channels[m]) v = on_grid(v);
  }

  const double speech_power = mean_square(mix.reverberant.channels[0], n);
  if (speech_power == 0.0)
    throw std::invalid_argument("render_scene: reverberant speech is silent at the reference mic");
  const double noise_power = mean_square(noise.channels[0], n);
  mix.noise_gain = noise_power > 0.0
                       ? std::sqrt(speech_power / (noise_power * std::pow(10.0, config.snr_db / 10.0)))
                       : 0.0;

  mix.scaled_noise = Waveform(M, n, config.sample_rate);
  mix.noisy = Waveform(M, n, config.sample_rate);
  for (std::size_t m = 0; m < M; ++m) {
    const auto& src = noise.channels[noise.num_channels() == 1 ? 0 : m];
    for (std::size_t i = 0; i < n; ++i) {
      mix.scaled_noise.channels[m][i] = on_grid(mix.noise_gain * src[i]);
      mix.noisy.channels[m][i] = mix.reverberant.channels[m][i] + mix.scaled_noise.channels[m][i];
    }
  }

  std::vector<double> align(static_cast<std::size_t>(std::ceil(direct_delay(config, 0))) +
                                kPulseTaps,
                            0.0);
  add_pulse(align, direct_delay(config, 0), 1.0);
  mix.target = convolve(speech, align, n);
  return mix;
}

// --- protocol ------------------------------------------------------------------

void ProtocolOptions::validate() const {
  if (protocol == Protocol::kCustom && channels == 0)
    throw std::invalid_argument("protocol: channels must be >= 1");
  if (!(rt60 > 0.0)) throw std::invalid_argument("protocol: rt60 must be > 0");
  if (!(snr_min <= snr_max) || !std::isfinite(snr_min) || !std::isfinite(snr_max))
    throw std::invalid_argument("protocol: need finite snr_min <= snr_max");
}

std::vector<double> array_spacings(std::size_t channels) {
  static constexpr double kPattern[] = {0.08, 0.06, 0.08};
  std::vector<double> s;
  for (std::size_t i = 0; i + 1 < channels; ++i) s.push_back(kPattern[i % 3]);
  return s;
}

SceneConfig sample_scene_config(Rng& rng, const ProtocolOptions& options) {
  options.validate();
  const bool standard = options.protocol == Protocol::kStandard;
  const std::size_t M = standard ? 4 : options.channels;

  SceneConfig c;
  c.sample_rate = options.sample_rate;
  c.rt60 = standard ? 0.2 : options.rt60;
  c.room = {uniform(rng, 4.5, 6.5), uniform(rng, 4.5, 6.5), uniform(rng, 2.5, 3.0)};

  const std::vector<double> spacing = array_spacings(M);
  std::vector<double> along(M, 0.0);
  for (std::size_t m = 1; m < M; ++m) along[m] = along[m - 1] + spacing[m - 1];
  const double span = along.back();

  const double cl = kWallClearance;
  bool placed = false;
  for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
    const Vec3 centre{uniform(rng, cl, c.room.x - cl), uniform(rng, cl, c.room.y - cl),
                      uniform(rng, cl, c.room.z - cl)};
    const double angle = uniform(rng, 0.0, 2.0 * kPi);
    const Vec3 source{uniform(rng, cl, c.room.x - cl), uniform(rng, cl, c.room.y - cl),
                      uniform(rng, cl, c.room.z - cl)};
    c.mics.clear();
    placed = true;
    for (std::size_t m = 0; m < M; ++m) {
      const double o = along[m] - span / 2.0;
      const Vec3 p{centre.x + o * std::cos(angle), centre.y + o * std::sin(angle), centre.z};
      if (!inside(p, c.room, cl) || distance(p, source) < kMinSourceDistance) placed = false;
      c.mics.push_back(p);
    }
    c.source = source;
  }
  if (!placed) throw std::runtime_error("sample_scene_config: no valid placement in 1000 attempts");
  c.snr_db = uniform(rng, options.snr_min, options.snr_max);
  c.seed = rng();
  return c;
}

// --- signals -------------------------------------------------------------------

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "white") return NoiseKind::kWhite;
  if (name == "babble") return NoiseKind::kBabble;
  throw std::invalid_argument("unknown noise kind '" + name + "' (white|babble)");
}

std::string to_string(NoiseKind kind) { return kind == NoiseKind::kWhite ? "white" : "babble"; }

std::vector<double> noise_source(NoiseKind kind, Rng& rng, std::size_t length,
                                 double sample_rate) {
  if (length == 0) throw std::invalid_argument("noise_source: length must be > 0");
  std::vector<double> out(length, 0.0);
  if (kind == NoiseKind::kWhite) {
    fill_normal(rng, out);
    return out;
  }
  std::vector<double> w(length);
  const double lp = std::exp(-2.0 * kPi * 2000.0 / sample_rate);
  for (int stream = 0; stream < 6; ++stream) {
    const double rate = uniform(rng, 2.0, 8.0);
    const double phase = uniform(rng, 0.0, 2.0 * kPi);
    fill_normal(rng, w);
    // Kellet's economy pink filter followed by a one-pole low-pass.
    double b0 = 0, b1 = 0, b2 = 0, y = 0;
    for (std::size_t i = 0; i < length; ++i) {
      b0 = 0.99765 * b0 + w[i] * 0.0990460;
      b1 = 0.96300 * b1 + w[i] * 0.2965164;
      b2 = 0.57000 * b2 + w[i] * 1.0526913;
      const double pink = b0 + b1 + b2 + w[i] * 0.1848;
      y = lp * y + (1.0 - lp) * pink;
      const double am =
          0.5 * (1.0 + std::sin(2.0 * kPi * rate * static_cast<double>(i) / sample_rate + phase));
      out[i] += am * y;
    }
  }
  const double rms = std::sqrt(mean_square(out, length));
  if (rms > 0.0)
    for (double& v : out) v /= rms;
  return out;
}

std::vector<double> synthetic_speech(Rng& rng, std::size_t length, double sample_rate) {
  std::vector<double> out(length, 0.0);
  std::size_t pos = 0;
  while (pos < length) {
    pos += static_cast<std::size_t>(uniform(rng, 0.03, 0.15) * sample_rate);
    const auto dur = static_cast<std::size_t>(uniform(rng, 0.10, 0.30) * sample_rate);
    const double f0_start = uniform(rng, 90.0, 220.0);
    const double f0_end = f0_start * uniform(rng, 0.8, 1.2);
    const double f1 = uniform(rng, 300.0, 900.0);
    const double f2 = uniform(rng, 900.0, 2500.0);
    const double level = uniform(rng, 0.5, 1.0);
    double phase = 0.0;
    for (std::size_t i = 0; i < dur && pos + i < length; ++i) {
      const double tau = static_cast<double>(i) / static_cast<double>(dur);
      const double f0 = f0_start + (f0_end - f0_start) * tau;
      phase += 2.0 * kPi * f0 / sample_rate;
      double v = 0.0;
      for (int k = 1; k * f0 < 4000.0; ++k) {
        const double f = k * f0;
        const double e1 = (f - f1) / 150.0, e2 = (f - f2) / 250.0;
        const double shape = std::exp(-0.5 * e1 * e1) + 0.7 * std::exp(-0.5 * e2 * e2) + 0.05;
        v += shape * std::sin(k * phase);
      }
      out[pos + i] = level * std::sqrt(std::sin(kPi * tau)) * v;
    }
    pos += dur;
  }
  double peak = 0.0;
  for (double v : out) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : out) v *= 0.5 / peak;
  return out;
}

// --- text form -------------------------------------------------------------------

std::string to_text(const SceneConfig& c) {
  std::ostringstream os;
  os << "room_x = " << num(c.room.x) << "\nroom_y = " << num(c.room.y)
     << "\nroom_z = " << num(c.room.z) << "\nsource_x = " << num(c.source.x)
     << "\nsource_y = " << num(c.source.y) << "\nsource_z = " << num(c.source.z)
     << "\nmic_count = " << c.mics.size() << '\n';
  for (std::size_t m = 0; m < c.mics.size(); ++m) {
    const std::string p = "mic" + std::to_string(m);
    os << p << "_x = " << num(c.mics[m].x) << '\n'
       << p << "_y = " << num(c.mics[m].y) << '\n'
       << p << "_z = " << num(c.mics[m].z) << '\n';
  }
  os << "rt60 = " << num(c.rt60) << "\nsnr_db = " << num(c.snr_db)
     << "\nsample_rate = " << num(c.sample_rate) << "\nseed = " << c.seed << '\n';
  return os.str();
}

SceneConfig parse_scene_config(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("scene config: bad line '" + line + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto get = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw std::invalid_argument("scene config: missing '" + k + "'");
    return std::stod(it->second);
  };
  SceneConfig c;
  c.room = {get("room_x"), get("room_y"), get("room_z")};
  c.source = {get("source_x"), get("source_y"), get("source_z")};
  const auto M = static_cast<std::size_t>(get("mic_count"));
  for (std::size_t m = 0; m < M; ++m) {
    const std::string p = "mic" + std::to_string(m);
    c.mics.push_back({get(p + "_x"), get(p + "_y"), get(p + "_z")});
  }
  c.rt60 = get("rt60");
  c.snr_db = get("snr_db");
  c.sample_rate = get("sample_rate");
  auto it = kv.find("seed");
  if (it == kv.end()) throw std::invalid_argument("scene config: missing 'seed'");
  c.seed = std::stoull(it->second);
  return c;
}

}  // namespace amdm::scene
