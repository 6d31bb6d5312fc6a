#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace amdm::metrics {

inline constexpr double kSiSdrCap = 60.0;

/// Scale-invariant SDR in dB: the estimate is projected onto the reference
/// (no mean removal) and 10 log10(|proj|^2 / |estimate - proj|^2) is clamped
/// to [-60, 60]. Zero reference throws; zero estimate gives -60.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

double mse(std::span<const double> estimate, std::span<const double> reference);

struct MetricReport {
  std::string id;
  double si_sdr_db = 0;
  double input_si_sdr_db = 0;
  double improvement_db = 0;
  double mse = 0;
};

struct SetReport {
  std::vector<MetricReport> rows;
  MetricReport mean;  // id "mean"
  MetricReport std;   // population std, id "std"
  std::vector<std::string> missing;     // in the dataset, no enhanced file
  std::vector<std::string> unexpected;  // enhanced file, no scene
  std::vector<std::string> invalid;     // unreadable or length mismatch, with reason

  bool complete() const { return missing.empty() && unexpected.empty() && invalid.empty(); }
};

/// Scores <enhanced_dir>/<id>.wav against <split_dir>/<id>/target.wav, with
/// channel 0 of noisy.wav as the unprocessed input. Throws when no id is
/// scoreable.
SetReport evaluate_set(const std::filesystem::path& enhanced_dir,
                       const std::filesystem::path& split_dir);

/// utt_id,si_sdr_db,input_si_sdr_db,improvement_db,mse then one "mean" row.
void write_report(const std::filesystem::path& path, const SetReport& report);

}  // namespace amdm::metrics
