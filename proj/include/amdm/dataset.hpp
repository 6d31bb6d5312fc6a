#pragma once

// On-disk scene datasets:
//   <root>/manifest.csv                 id,split,snr_db,rt60,config_hash per line
//   <root>/<split>/<id>/noisy.wav       M channels
//   <root>/<split>/<id>/target.wav      mono, aligned to mic 0
//   <root>/<split>/<id>/config          key = value scene description

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "amdm/scene.hpp"
#include "amdm/wav.hpp"

namespace amdm::data {

namespace fs = std::filesystem;

inline const char* const kSplits[] = {"train", "val", "test"};

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view text);
std::uint64_t fnv1a(std::string_view text);

struct SimulateOptions {
  fs::path out;
  std::size_t n_train = 0, n_val = 0, n_test = 0;
  std::uint64_t seed = 0;
  scene::ProtocolOptions protocol;
  double duration = 2.0;  // seconds
  scene::NoiseKind noise = scene::NoiseKind::kBabble;
  fs::path speech_dir;    // optional WAV corpus replacing synthetic speech
  fs::path noise_dir;     // optional WAV corpus replacing generated noise

  void validate() const;
};

struct ManifestEntry {
  std::string id;
  std::string split;
  double snr_db = 0;
  double rt60 = 0;
  std::string config_hash;
};

/// Scene i (counted over train, val, test in order) uses derive_seed(seed, i).
/// Renders in parallel, writes in scene order. Returns the manifest.
std::vector<ManifestEntry> simulate_dataset(const SimulateOptions& options);

std::string manifest_line(const ManifestEntry& e);
std::vector<ManifestEntry> read_manifest(const fs::path& root);

struct Utterance {
  std::string id;
  Waveform noisy;
  std::vector<double> target;
};

/// Scene directories (containing noisy.wav) under `split_dir`, sorted by name.
std::vector<std::string> list_scenes(const fs::path& split_dir);
Utterance load_utterance(const fs::path& split_dir, const std::string& id);
std::vector<Utterance> load_split(const fs::path& split_dir, std::size_t limit = 0);

}  // namespace amdm::data
