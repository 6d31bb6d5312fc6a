#include "amdm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "amdm/parallel.hpp"

namespace amdm::data {
namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<fs::path> wav_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && (e.path().extension() == ".wav" || e.path().extension() == ".WAV"))
      out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw std::runtime_error("no .wav files in " + dir.string());
  return out;
}

// A random excerpt of `length` samples from one channel of a random file,
// tiled when the file is shorter.
std::vector<double> excerpt(const std::vector<fs::path>& files, Rng& rng, std::size_t length,
                            double fs, std::size_t channel = 0) {
  const auto& path = files[rng() % files.size()];
  const Waveform w = read_wav(path);
  if (w.sample_rate != fs)
    throw std::runtime_error(path.string() + ": sample rate " + num(w.sample_rate) +
                             " != " + num(fs));
  const auto& src = w.channels[channel % w.num_channels()];
  if (src.empty()) throw std::runtime_error(path.string() + ": empty file");
  const std::size_t start = src.size() > length ? rng() % (src.size() - length + 1) : 0;
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = src[(start + i) % src.size()];
  return out;
}

struct Rendered {
  std::string id, split;
  scene::SceneConfig config;
  Waveform noisy;
  std::vector<double> target;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string fnv1a_hex(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

void SimulateOptions::validate() const {
  if (out.empty()) throw std::invalid_argument("simulate: output directory required");
  if (n_train + n_val + n_test == 0) throw std::invalid_argument("simulate: no scenes requested");
  if (!(duration > 0.0) || duration > 600.0)
    throw std::invalid_argument("simulate: duration must be in (0, 600] s");
  protocol.validate();
}

std::vector<ManifestEntry> simulate_dataset(const SimulateOptions& opt) {
  opt.validate();
  std::optional<std::vector<fs::path>> speech_files, noise_files;
  if (!opt.speech_dir.empty()) speech_files = wav_files(opt.speech_dir);
  if (!opt.noise_dir.empty()) noise_files = wav_files(opt.noise_dir);

  std::vector<std::pair<std::string, std::string>> scenes;  // id, split
  const std::size_t counts[] = {opt.n_train, opt.n_val, opt.n_test};
  for (int s = 0; s < 3; ++s)
    for (std::size_t i = 0; i < counts[s]; ++i) {
      char num[24];
      std::snprintf(num, sizeof num, "_%05zu", i);
      scenes.emplace_back(std::string(kSplits[s]) + num, kSplits[s]);
    }

  const double fs = opt.protocol.sample_rate;
  const auto length = static_cast<std::size_t>(std::llround(opt.duration * fs));
  std::vector<Rendered> rendered(scenes.size());
  parallel_for(scenes.size(), [&](std::size_t i) {
    Rng rng(derive_seed(opt.seed, i));
    scene::SceneConfig config = scene::sample_scene_config(rng, opt.protocol);
    const std::size_t M = config.mics.size();
    Rng sig(config.seed);
    std::vector<double> speech;
    for (int attempt = 0; attempt < 16; ++attempt) {
      speech = speech_files ? excerpt(*speech_files, sig, length, fs)
                            : scene::synthetic_speech(sig, length, fs);
      double power = 0.0;
      for (double v : speech) power += v * v;
      if (power > 0.0) break;
    }
    Waveform noise(M, length, fs);
    for (std::size_t m = 0; m < M; ++m)
      noise.channels[m] = noise_files ? excerpt(*noise_files, sig, length, fs, m)
                                      : scene::noise_source(opt.noise, sig, length, fs);
    scene::Mixture mix = scene::render_scene(speech, noise, config);

    // Keep both files inside the 16-bit range with one common gain.
    double peak = 0.0;
    for (const auto& ch : mix.noisy.channels)
      for (double v : ch) peak = std::max(peak, std::abs(v));
    for (double v : mix.target) peak = std::max(peak, std::abs(v));
    if (peak > 0.99) {
      const double g = 0.99 / peak;
      for (auto& ch : mix.noisy.channels)
        for (double& v : ch) v *= g;
      for (double& v : mix.target) v *= g;
    }
    rendered[i] = {scenes[i].first, scenes[i].second, config, std::move(mix.noisy),
                   std::move(mix.target)};
  });

  std::error_code ec;
  fs::create_directories(opt.out, ec);
  if (ec) throw std::runtime_error("cannot create " + opt.out.string() + ": " + ec.message());
  std::vector<ManifestEntry> manifest;
  std::string manifest_text;
  for (const auto& r : rendered) {
    const fs::path dir = opt.out / r.split / r.id;
    fs::create_directories(dir, ec);
    if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
    write_wav(dir / "noisy.wav", r.noisy);
    Waveform target(1, 0, fs);
    target.channels[0] = r.target;
    write_wav(dir / "target.wav", target);
    const std::string text = scene::to_text(r.config);
    write_text(dir / "config", text);
    manifest.push_back({r.id, r.split, r.config.snr_db, r.config.rt60, fnv1a_hex(text)});
    manifest_text += manifest_line(manifest.back()) + "\n";
  }
  write_text(opt.out / "manifest.csv", manifest_text);
  return manifest;
}

std::string manifest_line(const ManifestEntry& e) {
  return e.id + "," + e.split + "," + num(e.snr_db) + "," + num(e.rt60) + "," + e.config_hash;
}

std::vector<ManifestEntry> read_manifest(const fs::path& root) {
  std::ifstream f(root / "manifest.csv");
  if (!f) throw std::runtime_error("cannot read " + (root / "manifest.csv").string());
  std::vector<ManifestEntry> out;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ManifestEntry e;
    std::string snr, rt60;
    if (!std::getline(ls, e.id, ',') || !std::getline(ls, e.split, ',') ||
        !std::getline(ls, snr, ',') || !std::getline(ls, rt60, ',') ||
        !std::getline(ls, e.config_hash))
      throw std::runtime_error("manifest: malformed line '" + line + "'");
    e.snr_db = std::stod(snr);
    e.rt60 = std::stod(rt60);
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<std::string> list_scenes(const fs::path& split_dir) {
  if (!fs::is_directory(split_dir)) throw std::runtime_error("not a directory: " + split_dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(split_dir))
    if (e.is_directory() && fs::exists(e.path() / "noisy.wav"))
      ids.push_back(e.path().filename().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

Utterance load_utterance(const fs::path& split_dir, const std::string& id) {
  Utterance u;
  u.id = id;
  u.noisy = read_wav(split_dir / id / "noisy.wav");
  const Waveform t = read_wav(split_dir / id / "target.wav");
  if (t.num_channels() != 1)
    throw std::runtime_error(id + ": target.wav must be mono");
  if (t.length() != u.noisy.length())
    throw std::runtime_error(id + ": target and noisy lengths differ");
  u.target = t.channels[0];
  return u;
}

std::vector<Utterance> load_split(const fs::path& split_dir, std::size_t limit) {
  std::vector<std::string> ids = list_scenes(split_dir);
  if (limit && ids.size() > limit) ids.resize(limit);
  std::vector<Utterance> out;
  for (const auto& id : ids) out.push_back(load_utterance(split_dir, id));
  return out;
}

}  // namespace amdm::data
