#include "amdm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "amdm/dataset.hpp"
#include "amdm/wav.hpp"

namespace amdm::metrics {

double si_sdr(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size())
    throw std::invalid_argument("si_sdr: lengths differ (" + std::to_string(est.size()) + " vs " +
                                std::to_string(ref.size()) + ")");
  double rr = 0.0, er = 0.0, ee = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    rr += ref[i] * ref[i];
    er += est[i] * ref[i];
    ee += est[i] * est[i];
  }
  if (rr == 0.0) throw std::invalid_argument("si_sdr: reference is all zeros");
  if (ee == 0.0) return -kSiSdrCap;
  const double alpha = er / rr;
  double target = 0.0, err = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double p = alpha * ref[i];
    target += p * p;
    err += (est[i] - p) * (est[i] - p);
  }
  if (err == 0.0) return kSiSdrCap;
  if (target == 0.0) return -kSiSdrCap;
  return std::clamp(10.0 * std::log10(target / err), -kSiSdrCap, kSiSdrCap);
}

double mse(std::span<const double> est, std::span<const double> ref) {
  if (est.size() != ref.size() || ref.empty())
    throw std::invalid_argument("mse: lengths differ or empty");
  double acc = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) acc += (est[i] - ref[i]) * (est[i] - ref[i]);
  return acc / static_cast<double>(ref.size());
}

SetReport evaluate_set(const std::filesystem::path& enhanced_dir,
                       const std::filesystem::path& split_dir) {
  if (!std::filesystem::is_directory(enhanced_dir))
    throw std::runtime_error("not a directory: " + enhanced_dir.string());
  const std::vector<std::string> ids = data::list_scenes(split_dir);
  std::set<std::string> known(ids.begin(), ids.end());

  SetReport rep;
  std::vector<std::string> enhanced;
  for (const auto& e : std::filesystem::directory_iterator(enhanced_dir))
    if (e.is_regular_file() && e.path().extension() == ".wav")
      enhanced.push_back(e.path().stem().string());
  std::sort(enhanced.begin(), enhanced.end());
  for (const auto& id : enhanced)
    if (!known.count(id)) rep.unexpected.push_back(id);

  for (const auto& id : ids) {
    const auto path = enhanced_dir / (id + ".wav");
    if (!std::filesystem::exists(path)) {
      rep.missing.push_back(id);
      continue;
    }
    try {
      const data::Utterance u = data::load_utterance(split_dir, id);
      const Waveform w = read_wav(path);
      if (w.length() != u.target.size())
        throw std::runtime_error("length " + std::to_string(w.length()) + " != target length " +
                                 std::to_string(u.target.size()));
      MetricReport r;
      r.id = id;
      r.si_sdr_db = si_sdr(w.channels[0], u.target);
      r.input_si_sdr_db = si_sdr(u.noisy.channels[0], u.target);
      r.improvement_db = r.si_sdr_db - r.input_si_sdr_db;
      r.mse = mse(w.channels[0], u.target);
      rep.rows.push_back(r);
    } catch (const std::exception& e) {
      rep.invalid.push_back(id + ": " + e.what());
    }
  }
  if (rep.rows.empty())
    throw std::runtime_error("no utterance ids in common between " + enhanced_dir.string() +
                             " and " + split_dir.string());

  const double n = static_cast<double>(rep.rows.size());
  rep.mean.id = "mean";
  rep.std.id = "std";
  for (const auto& r : rep.rows) {
    rep.mean.si_sdr_db += r.si_sdr_db / n;
    rep.mean.input_si_sdr_db += r.input_si_sdr_db / n;
    rep.mean.mse += r.mse / n;
  }
  rep.mean.improvement_db = rep.mean.si_sdr_db - rep.mean.input_si_sdr_db;
  for (const auto& r : rep.rows) {
    auto sq = [](double v) { return v * v; };
    rep.std.si_sdr_db += sq(r.si_sdr_db - rep.mean.si_sdr_db) / n;
    rep.std.input_si_sdr_db += sq(r.input_si_sdr_db - rep.mean.input_si_sdr_db) / n;
    rep.std.improvement_db += sq(r.improvement_db - rep.mean.improvement_db) / n;
    rep.std.mse += sq(r.mse - rep.mean.mse) / n;
  }
  rep.std.si_sdr_db = std::sqrt(rep.std.si_sdr_db);
  rep.std.input_si_sdr_db = std::sqrt(rep.std.input_si_sdr_db);
  rep.std.improvement_db = std::sqrt(rep.std.improvement_db);
  rep.std.mse = std::sqrt(rep.std.mse);
  return rep;
}

void write_report(const std::filesystem::path& path, const SetReport& report) {
  std::FILE* f = std::fopen(path.string().c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path.string());
  std::fprintf(f, "utt_id,si_sdr_db,input_si_sdr_db,improvement_db,mse\n");
  auto row = [&](const MetricReport& r) {
    std::fprintf(f, "%s,%.6f,%.6f,%.6f,%.9g\n", r.id.c_str(), r.si_sdr_db, r.input_si_sdr_db,
                 r.improvement_db, r.mse);
  };
  for (const auto& r : report.rows) row(r);
  row(report.mean);
  const bool ok = std::fclose(f) == 0;
  if (!ok) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace amdm::metrics
