#pragma once

// Multichannel noisy-reverberant scene synthesis: image-method room impulse
// responses for a shoebox room, SNR-controlled noise mixing at the reference
// microphone (index 0), and a clean target aligned to that microphone.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "amdm/random.hpp"
#include "amdm/wav.hpp"

namespace amdm::scene {

inline constexpr double kSpeedOfSound = 343.0;
inline constexpr std::size_t kPulseTaps = 81;
inline constexpr double kWallClearance = 0.1;
inline constexpr double kMinSourceDistance = 0.5;

struct Vec3 {
  double x = 0, y = 0, z = 0;
  friend bool operator==(const Vec3&, const Vec3&) = default;
};
double distance(const Vec3& a, const Vec3& b);

struct SceneConfig {
  Vec3 room{6.0, 5.0, 2.8};
  Vec3 source{2.0, 2.0, 1.5};
  std::vector<Vec3> mics;
  double rt60 = 0.2;
  double snr_db = 10.0;
  double sample_rate = 16000.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on positions closer than kWallClearance to a
  /// wall, non-positive rt60, non-finite SNR or an empty array.
  void validate() const;
  friend bool operator==(const SceneConfig&, const SceneConfig&) = default;
};

/// Frequency-independent pressure reflection coefficient from Sabine's formula
/// rt60 = 0.161 V / (S (1 - beta^2)); 0 when the room cannot be that dry.
double wall_reflection(const Vec3& room, double rt60);

/// Direct-path delay in (fractional) samples.
double direct_delay(const SceneConfig& config, std::size_t mic);

struct Rir {
  std::vector<double> taps;
  double sample_rate = 16000.0;
};

/// Image-method RIR; 81-tap Hann-windowed sinc pulse per image source centred
/// on its fractional delay, amplitude beta^reflections / (4 pi d). Length is
/// 1.5 rt60, extended when needed so the direct pulse fits completely.
Rir simulate_rir(const SceneConfig& config, std::size_t mic);

/// Adds a windowed-sinc pulse of the given amplitude centred at `delay`.
void add_pulse(std::vector<double>& out, double delay, double amplitude);

/// Full linear convolution truncated to `length` samples.
std::vector<double> convolve(const std::vector<double>& signal, const std::vector<double>& taps,
                             std::size_t length);

struct Mixture {
  Waveform noisy;                   // M channels
  std::vector<double> target;       // clean speech delayed to the reference mic
  Waveform reverberant;             // h_m * s
  Waveform scaled_noise;            // noise after the SNR gain
  double noise_gain = 0.0;
  SceneConfig config;
};

/// speech: mono source signal; its length sets the output length. noise has
/// either M channels or one channel reused on every microphone, each at least
/// as long as speech. noisy is built as reverberant + scaled_noise.
Mixture render_scene(const std::vector<double>& speech, const Waveform& noise,
                     const SceneConfig& config);

// --- protocol sampling ---------------------------------------------------------

enum class Protocol { kStandard, kCustom };

struct ProtocolOptions {
  Protocol protocol = Protocol::kStandard;
  std::size_t channels = 4;  // custom only; standard is always 4
  double rt60 = 0.2;         // custom only
  double snr_min = 5.0;
  double snr_max = 15.0;
  double sample_rate = 16000.0;

  void validate() const;
};

/// Consecutive spacings along the array: 0.08, 0.06, 0.08, then repeating.
std::vector<double> array_spacings(std::size_t channels);

/// Room in [4.5, 6.5] x [4.5, 6.5] x [2.5, 3] m, a randomly placed and oriented
/// horizontal line array and a source at least kMinSourceDistance from every
/// microphone. Placement is resampled up to 1000 times.
SceneConfig sample_scene_config(Rng& rng, const ProtocolOptions& options);

// --- signals --------------------------------------------------------------------

enum class NoiseKind { kWhite, kBabble };

NoiseKind parse_noise_kind(const std::string& name);
std::string to_string(NoiseKind kind);

/// white: i.i.d. standard normal. babble: sum of 6 pink-weighted, low-passed
/// noise streams, each amplitude-modulated at a random 2-8 Hz rate, scaled to
/// unit RMS.
std::vector<double> noise_source(NoiseKind kind, Rng& rng, std::size_t length,
                                 double sample_rate = 16000.0);

/// Harmonic syllables with gliding pitch and formant-shaped spectra separated
/// by short pauses; peak amplitude 0.5.
std::vector<double> synthetic_speech(Rng& rng, std::size_t length, double sample_rate = 16000.0);

// --- text form --------------------------------------------------------------------

/// key = value lines with every SceneConfig field.
std::string to_text(const SceneConfig& config);
SceneConfig parse_scene_config(const std::string& text);

}  // namespace amdm::scene
