#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "amdm/scene.hpp"
#include "amdm/stft.hpp"

using namespace amdm;
using namespace amdm::scene;

namespace {

SceneConfig room_with(Vec3 source, std::vector<Vec3> mics, double rt60 = 0.2) {
  SceneConfig c;
  c.room = {6.0, 5.0, 2.8};
  c.source = source;
  c.mics = std::move(mics);
  c.rt60 = rt60;
  return c;
}

std::size_t peak_index(const std::vector<double>& v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (std::abs(v[i]) > std::abs(v[best])) best = i;
  return best;
}

// Schroeder backward integration, line fit on the -5..-25 dB span, scaled to 60 dB.
double schroeder_t60(const std::vector<double>& h, double fs) {
  std::vector<double> edc(h.size());
  double acc = 0.0;
  for (std::size_t i = h.size(); i-- > 0;) {
    acc += h[i] * h[i];
    edc[i] = acc;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int n = 0;
  for (std::size_t i = 0; i < h.size(); ++i) {
    const double db = 10.0 * std::log10(edc[i] / edc[0]);
    if (db > -5.0 || db < -25.0) continue;
    const double t = double(i) / fs;
    sx += t;
    sy += db;
    sxx += t * t;
    sxy += t * db;
    ++n;
  }
  const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return -60.0 / slope;
}

double power(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return acc / double(v.size());
}

std::vector<double> speech(std::uint64_t seed, std::size_t n = 16000) {
  Rng rng(seed);
  return synthetic_speech(rng, n);
}

Waveform noise(std::uint64_t seed, std::size_t channels, std::size_t n = 16000) {
  Rng rng(seed);
  Waveform w(channels, n);
  for (auto& ch : w.channels) ch = noise_source(NoiseKind::kBabble, rng, n);
  return w;
}

}  // namespace

TEST(Rir, DirectPathOnsetFromDistance) {
  // 3.43 m from the microphone: 160 samples at 16 kHz.
  const SceneConfig c = room_with({1.0, 1.0, 1.4}, {{4.43, 1.0, 1.4}});
  ASSERT_NEAR(distance(c.source, c.mics[0]), 3.43, 1e-12);
  const Rir r = simulate_rir(c, 0);
  const long peak = static_cast<long>(peak_index(r.taps));
  EXPECT_LE(std::abs(peak - 160), 1);
}

TEST(Rir, DryRoomLeavesOnlyTheDirectPulse) {
  const SceneConfig c = room_with({1.3, 2.1, 1.2}, {{3.7, 2.6, 1.5}}, 0.01);
  ASSERT_EQ(wall_reflection(c.room, c.rt60), 0.0);
  const Rir r = simulate_rir(c, 0);
  const double d = distance(c.source, c.mics[0]);
  const double delay = d / kSpeedOfSound * c.sample_rate;
  double sum = 0.0;
  for (std::size_t i = 0; i < r.taps.size(); ++i) {
    if (std::abs(double(i) - delay) > double(kPulseTaps / 2) + 1) EXPECT_EQ(r.taps[i], 0.0) << i;
    sum += r.taps[i];
  }
  // A low-pass pulse keeps unit DC gain, so the taps sum to the 1/(4 pi d) spreading loss.
  EXPECT_NEAR(sum * 4.0 * std::numbers::pi * d, 1.0, 0.01);
  EXPECT_LE(std::abs(double(peak_index(r.taps)) - delay), 1.0);
}

TEST(Rir, SchroederDecayMatchesRequestedRt60) {
  for (const Vec3& src : {Vec3{1.2, 1.5, 1.6}, Vec3{4.5, 3.0, 1.0}}) {
    const SceneConfig c = room_with(src, {{3.0, 2.5, 1.5}}, 0.2);
    const Rir r = simulate_rir(c, 0);
    EXPECT_NEAR(schroeder_t60(r.taps, c.sample_rate), 0.2, 0.2 * 0.3);
  }
}

TEST(Rir, SmoothedEnergyDecaysAfterDirectPath) {
  const SceneConfig c = room_with({1.2, 1.5, 1.6}, {{3.0, 2.5, 1.5}}, 0.2);
  const Rir r = simulate_rir(c, 0);
  const std::size_t win = 160;  // 10 ms
  std::vector<double> energy;
  for (std::size_t start = peak_index(r.taps); start + win <= r.taps.size(); start += win) {
    double e = 0.0;
    for (std::size_t i = start; i < start + win; ++i) e += r.taps[i] * r.taps[i];
    energy.push_back(e);
  }
  ASSERT_GT(energy.size(), 10u);
  for (std::size_t k = 1; k < energy.size(); ++k) EXPECT_LE(energy[k], energy[k - 1]) << "window " << k;
}

TEST(Rir, LengthIsOneAndAHalfRt60) {
  const SceneConfig c = room_with({1.2, 1.5, 1.6}, {{3.0, 2.5, 1.5}}, 0.2);
  EXPECT_EQ(simulate_rir(c, 0).taps.size(), 4800u);
}

TEST(Rir, DeterministicAndValidated) {
  const SceneConfig c = room_with({1.2, 1.5, 1.6}, {{3.0, 2.5, 1.5}});
  EXPECT_EQ(simulate_rir(c, 0).taps, simulate_rir(c, 0).taps);
  EXPECT_THROW(simulate_rir(room_with({1, 1, 1}, {{1, 1, 1}}), 0), std::invalid_argument);
  EXPECT_THROW(simulate_rir(c, 1), std::out_of_range);
  EXPECT_THROW(simulate_rir(room_with({0.05, 1, 1}, {{2, 2, 1}}), 0), std::invalid_argument);
}

TEST(Rir, DelayOrderingFollowsDistance) {
  const SceneConfig c = room_with({1.0, 2.0, 1.5}, {{2.0, 2.0, 1.5}, {2.6, 2.3, 1.5}, {3.4, 3.0, 1.4}}, 0.1);
  std::vector<std::size_t> peaks;
  for (std::size_t m = 0; m < 3; ++m) peaks.push_back(peak_index(simulate_rir(c, m).taps));
  EXPECT_LT(peaks[0], peaks[1]);
  EXPECT_LT(peaks[1], peaks[2]);
}

TEST(Render, SnrAtReferenceChannel) {
  for (double snr : {5.0, 10.0, 14.3}) {
    SceneConfig c = room_with({1.2, 1.5, 1.6}, {{3.0, 2.5, 1.5}, {3.08, 2.5, 1.5}});
    c.snr_db = snr;
    const Mixture mix = render_scene(speech(1), noise(2, 2), c);
    const double achieved = 10.0 * std::log10(power(mix.reverberant.channels[0]) /
                                               power(mix.scaled_noise.channels[0]));
    EXPECT_NEAR(achieved, snr, 0.1);
  }
}

TEST(Render, ConstructionIdentityIsExact) {
  const SceneConfig c = room_with({1.2, 1.5, 1.6}, {{3.0, 2.5, 1.5}, {3.08, 2.5, 1.5}});
  const Mixture mix = render_scene(speech(3), noise(4, 2), c);
  for (std::size_t m = 0; m < 2; ++m)
    for (std::size_t i = 0; i < mix.noisy.length(); ++i) {
      ASSERT_EQ(mix.noisy.channels[m][i], mix.reverberant.channels[m][i] + mix.scaled_noise.channels[m][i]);
      ASSERT_EQ(mix.noisy.channels[m][i] - mix.scaled_noise.channels[m][i], mix.reverberant.channels[m][i]);
    }
}

TEST(Render, NoiselessDryReferenceIsScaledTarget) {
  const SceneConfig c = room_with({1.2, 1.5, 1.6}, {{3.0, 2.5, 1.5}, {3.08, 2.5, 1.5}}, 0.01);
  const Mixture mix = render_scene(speech(5), Waveform(1, 16000), c);
  const double gain = 1.0 / (4.0 * std::numbers::pi * distance(c.source, c.mics[0]));
  for (std::size_t i = 0; i < mix.target.size(); ++i)
    ASSERT_NEAR(mix.noisy.channels[0][i], gain * mix.target[i], 1e-10);
}

TEST(Render, CrossChannelDelayMatchesGeometry) {
  SceneConfig c = room_with({1.2, 1.0, 1.5}, {});
  for (std::size_t m = 0; m < 4; ++m) c.mics.push_back({2.5 + 0.3 * double(m), 3.5, 1.5});
  c.rt60 = 0.01;
  const Mixture mix = render_scene(speech(6), Waveform(1, 16000), c);
  // Lag of the cross-correlation peak between mic 0 and mic 3.
  const auto& a = mix.noisy.channels[0];
  const auto& b = mix.noisy.channels[3];
  long best = 0;
  double best_v = -1e300;
  for (long lag = -200; lag <= 200; ++lag) {
    double acc = 0.0;
    for (long i = 300; i < 15000; ++i) acc += a[i] * b[i + lag];
    if (acc > best_v) best_v = acc, best = lag;
  }
  const double expected = (distance(c.source, c.mics[3]) - distance(c.source, c.mics[0])) /
                          kSpeedOfSound * c.sample_rate;
  EXPECT_LE(std::abs(double(best) - expected), 1.0);
}

TEST(Render, TargetIsDelayedToReference) {
  const SceneConfig c = room_with({1.0, 1.0, 1.4}, {{4.43, 1.0, 1.4}});
  std::vector<double> impulse(4000, 0.0);
  impulse[100] = 1.0;
  const Mixture mix = render_scene(impulse, Waveform(1, 4000), c);
  EXPECT_EQ(peak_index(mix.target), 260u);
  EXPECT_NEAR(mix.target[260], 1.0, 1e-9);
}

TEST(Render, Rejections) {
  const SceneConfig c = room_with({1.2, 1.5, 1.6}, {{3.0, 2.5, 1.5}, {3.08, 2.5, 1.5}});
  EXPECT_THROW(render_scene(std::vector<double>(1000, 0.0), noise(1, 2, 1000), c), std::invalid_argument);
  EXPECT_THROW(render_scene(speech(1, 1000), noise(1, 3, 1000), c), std::invalid_argument);
  EXPECT_THROW(render_scene(speech(1, 1000), noise(1, 2, 500), c), std::invalid_argument);
}

TEST(Render, PureFunctionOfInputs) {
  const SceneConfig c = room_with({1.2, 1.5, 1.6}, {{3.0, 2.5, 1.5}, {3.08, 2.5, 1.5}});
  const auto s = speech(7);
  const auto n = noise(8, 2);
  const Mixture a = render_scene(s, n, c), b = render_scene(s, n, c);
  EXPECT_EQ(a.noisy.channels, b.noisy.channels);
  EXPECT_EQ(a.target, b.target);
}

TEST(Protocol, StandardRangesOverManyDraws) {
  Rng rng(9);
  ProtocolOptions opt;
  double snr_sum = 0.0, lx_min = 1e9, lx_max = -1e9;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const SceneConfig c = sample_scene_config(rng, opt);
    EXPECT_NO_THROW(c.validate());
    lx_min = std::min(lx_min, c.room.x);
    lx_max = std::max(lx_max, c.room.x);
    ASSERT_GE(c.room.y, 4.5);
    ASSERT_LE(c.room.y, 6.5);
    ASSERT_GE(c.room.z, 2.5);
    ASSERT_LE(c.room.z, 3.0);
    ASSERT_EQ(c.rt60, 0.2);
    ASSERT_GE(c.snr_db, 5.0);
    ASSERT_LE(c.snr_db, 15.0);
    ASSERT_EQ(c.mics.size(), 4u);
    const double want[] = {0.08, 0.06, 0.08};
    for (std::size_t m = 1; m < 4; ++m) ASSERT_NEAR(distance(c.mics[m], c.mics[m - 1]), want[m - 1], 1e-12);
    // Collinear: mic 3 lies on the line through mics 0 and 1.
    ASSERT_NEAR(distance(c.mics[0], c.mics[3]), 0.22, 1e-12);
    snr_sum += c.snr_db;
  }
  EXPECT_GE(lx_min, 4.5);
  EXPECT_LE(lx_max, 6.5);
  EXPECT_NEAR(snr_sum / draws, 10.0, 0.1);
}

TEST(Protocol, CustomChannelsAndDeterminism) {
  ProtocolOptions opt;
  opt.protocol = Protocol::kCustom;
  opt.channels = 2;
  opt.rt60 = 0.3;
  Rng a(10), b(10);
  const SceneConfig x = sample_scene_config(a, opt), y = sample_scene_config(b, opt);
  EXPECT_EQ(x, y);
  EXPECT_EQ(x.mics.size(), 2u);
  EXPECT_EQ(x.rt60, 0.3);
  opt.snr_min = 20;
  EXPECT_THROW(sample_scene_config(a, opt), std::invalid_argument);
}

TEST(Protocol, ConfigTextRoundTrip) {
  Rng rng(11);
  const SceneConfig c = sample_scene_config(rng, ProtocolOptions{});
  EXPECT_EQ(parse_scene_config(to_text(c)), c);
  EXPECT_THROW(parse_scene_config("room_x = 1\n"), std::invalid_argument);
}

TEST(Noise, WhiteStatistics) {
  Rng rng(12);
  const auto w = noise_source(NoiseKind::kWhite, rng, 1000000);
  double mean = 0.0;
  for (double v : w) mean += v;
  mean /= double(w.size());
  double var = 0.0;
  for (double v : w) var += (v - mean) * (v - mean);
  EXPECT_LT(std::abs(mean), 0.01);
  EXPECT_NEAR(std::sqrt(var / double(w.size())), 1.0, 0.02);
}

TEST(Noise, BabbleHasFallingSpectrum) {
  Rng rng(13);
  Waveform w(1, 64000);
  w.channels[0] = noise_source(NoiseKind::kBabble, rng, 64000);
  const Spectrogram s = stft(w, StftParams{512, 256});
  double low = 0.0, high = 0.0;
  for (std::size_t l = 0; l < s.frames(); ++l)
    for (std::size_t k = 1; k < s.bins(); ++k) {
      const double f = double(k) * 16000.0 / 512.0;
      const double e = std::pow(s.values.at({0, 0, l, k}), 2) + std::pow(s.values.at({0, 1, l, k}), 2);
      if (f < 1000.0) low += e;
      if (f > 4000.0) high += e;
    }
  EXPECT_GT(low, high);
}

TEST(Noise, ZeroLengthRejected) {
  Rng rng(14);
  EXPECT_THROW(noise_source(NoiseKind::kWhite, rng, 0), std::invalid_argument);
  EXPECT_THROW(parse_noise_kind("pink"), std::invalid_argument);
}
