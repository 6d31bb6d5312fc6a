#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iterator>
#include <map>
#include <numbers>
#include <sstream>

#include "amdm/config.hpp"
#include "amdm/dataset.hpp"
#include "amdm/wav.hpp"
#include "test_support.hpp"

using namespace amdm;
namespace fs = std::filesystem;

namespace {

struct CliResult {
  int code;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

CliResult amdm_cli(const std::string& args, const fs::path& scratch) {
  const fs::path out = scratch / "stdout.txt", err = scratch / "stderr.txt";
  const std::string cmd = std::string("\"") + AMDM_CLI + "\" " + args + " >\"" + out.string() +
                          "\" 2>\"" + err.string() + "\"";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

// One small dataset and checkpoint shared by every test in the file.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new amdm::testing::ScratchDir("cli");
    const CliResult sim = amdm_cli("simulate --out " + (*dir_ / "data").string() +
                                 " --n-train 3 --n-val 1 --n-test 3 --seed 4 --duration 0.5"
                                 " --protocol custom --channels 2",
                             dir_->path());
    ASSERT_EQ(sim.code, 0) << sim.err;
    const CliResult tr = amdm_cli("train --data " + (*dir_ / "data").string() + " --out " +
                                (*dir_ / "run").string() +
                                " --steps 2 --batch 2 --val-every 2 --val-count 1 --val-steps 2"
                                " --base-width 4 --levels 1 --fft-size 256 --hop 128 --seed 1"
                                " --crop-frames 16",
                            dir_->path());
    ASSERT_EQ(tr.code, 0) << tr.err;
  }
  static void TearDownTestSuite() {
    delete dir_;
    dir_ = nullptr;
  }
  static fs::path data() { return *dir_ / "data"; }
  static fs::path ckpt() { return *dir_ / "run" / "best.ckpt"; }
  amdm::testing::ScratchDir scratch{"clirun"};
  static amdm::testing::ScratchDir* dir_;
};
amdm::testing::ScratchDir* Cli::dir_ = nullptr;

}  // namespace

TEST_F(Cli, SimulateIsDeterministicAndWritesTheManifest) {
  const std::string args = " --n-train 2 --n-val 1 --n-test 1 --seed 11 --duration 0.3";
  ASSERT_EQ(amdm_cli("simulate --out " + (scratch / "a").string() + args, scratch.path()).code, 0);
  ASSERT_EQ(amdm_cli("simulate --out " + (scratch / "b").string() + args, scratch.path()).code, 0);
  EXPECT_EQ(slurp(scratch / "a/manifest.csv"), slurp(scratch / "b/manifest.csv"));
  for (const char* f : {"train/train_00001/noisy.wav", "test/test_00000/target.wav"})
    EXPECT_EQ(slurp(scratch.path() / "a" / f), slurp(scratch.path() / "b" / f)) << f;

  const auto manifest = data::read_manifest(scratch / "a");
  EXPECT_EQ(manifest.size(), 4u);
  EXPECT_EQ(lines(slurp(scratch / "a/manifest.csv")).size(), 4u);
  for (const auto& e : manifest) {
    EXPECT_GE(e.snr_db, 5.0);
    EXPECT_LE(e.snr_db, 15.0);
  }
  EXPECT_EQ(read_wav(scratch / "a/train/train_00000/noisy.wav").num_channels(), 4u);
}

TEST_F(Cli, SimulateEchoesItsEffectiveConfig) {
  ASSERT_EQ(amdm_cli("simulate --out " + (scratch / "c").string() +
                         " --n-test 1 --duration 0.3 --seed 3 --snr-min 7",
                     scratch.path())
                .code,
            0);
  const auto cfg = parse_config(slurp(scratch / "c/simulate.cfg"));
  std::map<std::string, std::string> kv(cfg.begin(), cfg.end());
  EXPECT_EQ(kv["seed"], "3");
  EXPECT_EQ(std::stod(kv["snr-min"]), 7.0);
  EXPECT_EQ(kv["protocol"], "paper");

  // The echoed file reproduces the run.
  ASSERT_EQ(amdm_cli("simulate --config " + (scratch / "c/simulate.cfg").string() + " --out " +
                         (scratch / "d").string(),
                     scratch.path())
                .code,
            0);
  EXPECT_EQ(slurp(scratch / "c/manifest.csv"), slurp(scratch / "d/manifest.csv"));
}

TEST_F(Cli, ConfigFileLosesToFlags) {
  { std::ofstream(scratch / "s.cfg") << "n_test = 2\nseed = 5\nduration = 0.3\n"; }
  ASSERT_EQ(amdm_cli("simulate --config " + (scratch / "s.cfg").string() + " --n-test 1 --out " +
                         (scratch / "e").string(),
                     scratch.path())
                .code,
            0);
  EXPECT_EQ(data::read_manifest(scratch / "e").size(), 1u);
}

TEST_F(Cli, EvaluateNoProcessingGivesZeroImprovement) {
  const fs::path copies = scratch / "copies";
  fs::create_directories(copies);
  const auto ids = data::list_scenes(data() / "test");
  for (const auto& id : ids) {
    Waveform w = read_wav(data() / "test" / id / "noisy.wav");
    w.channels.resize(1);
    write_wav(copies / (id + ".wav"), w);
  }
  const CliResult r = amdm_cli("evaluate --enhanced " + copies.string() + " --data " + data().string() +
                             " --report " + (scratch / "r.csv").string(),
                         scratch.path());
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines(slurp(scratch / "r.csv"));
  ASSERT_EQ(rows.size(), ids.size() + 2);
  EXPECT_EQ(rows.front(), "utt_id,si_sdr_db,input_si_sdr_db,improvement_db,mse");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    std::vector<std::string> cells;
    std::istringstream is(rows[i]);
    for (std::string c; std::getline(is, c, ',');) cells.push_back(c);
    ASSERT_EQ(cells.size(), 5u);
    EXPECT_EQ(std::stod(cells[3]), 0.0) << rows[i];
  }
  EXPECT_EQ(rows.back().substr(0, 5), "mean,");
}

TEST_F(Cli, EvaluateMismatchAndMissingDirectory) {
  const fs::path part = scratch / "part";
  fs::create_directories(part);
  const auto ids = data::list_scenes(data() / "test");
  Waveform w = read_wav(data() / "test" / ids[0] / "noisy.wav");
  w.channels.resize(1);
  write_wav(part / (ids[0] + ".wav"), w);
  const CliResult r = amdm_cli("evaluate --enhanced " + part.string() + " --data " + data().string() +
                             " --report " + (scratch / "p.csv").string(),
                         scratch.path());
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("missing enhanced file: " + ids[1]), std::string::npos) << r.err;
  EXPECT_EQ(lines(slurp(scratch / "p.csv")).size(), 3u);

  const CliResult gone = amdm_cli("evaluate --enhanced " + (scratch / "nope").string() + " --data " +
                                data().string() + " --report " + (scratch / "q.csv").string(),
                            scratch.path());
  EXPECT_NE(gone.code, 0);
  EXPECT_EQ(lines(gone.err).size(), 1u);
  EXPECT_EQ(gone.err.rfind("error: evaluate: ", 0), 0u) << gone.err;
}

TEST_F(Cli, SpectrogramOfToneLightsItsBin) {
  const double fs_hz = 16000.0, f0 = 1000.0;
  Waveform w(1, 8000, fs_hz);
  for (std::size_t n = 0; n < 8000; ++n)
    w.channels[0][n] = 0.5 * std::sin(2.0 * std::numbers::pi * f0 * double(n) / fs_hz);
  write_wav(scratch / "tone.wav", w);
  ASSERT_EQ(amdm_cli("spectrogram --in " + (scratch / "tone.wav").string() + " --out " +
                         (scratch / "tone.csv").string(),
                     scratch.path())
                .code,
            0);
  const auto rows = lines(slurp(scratch / "tone.csv"));
  ASSERT_EQ(rows.size(), 1u + (8000u - 512u) / 128u);
  for (const auto& row : rows) {
    std::vector<double> v;
    std::istringstream is(row);
    for (std::string c; std::getline(is, c, ',');) v.push_back(std::stod(c));
    ASSERT_EQ(v.size(), 257u);
    EXPECT_EQ(std::max_element(v.begin(), v.end()) - v.begin(), 32);  // 1000 Hz * 512 / 16000
  }
  const CliResult png = amdm_cli("spectrogram --in " + (scratch / "tone.wav").string() + " --out " +
                               (scratch / "tone.png").string() + " --compressed on",
                           scratch.path());
  ASSERT_EQ(png.code, 0) << png.err;
  EXPECT_EQ(slurp(scratch / "tone.png").substr(1, 3), "PNG");
  EXPECT_NE(amdm_cli("spectrogram --in " + (scratch / "tone.wav").string() + " --out " +
                         (scratch / "tone.txt").string(),
                     scratch.path())
                .code,
            0);
}

TEST_F(Cli, EnhanceIsDeterministicAndMono) {
  const std::string noisy = (data() / "test/test_00000/noisy.wav").string();
  for (const char* name : {"a.wav", "b.wav"})
    ASSERT_EQ(amdm_cli("enhance --ckpt " + ckpt().string() + " --in " + noisy + " --out " +
                           (scratch / name).string() + " --steps 3 --seed 9",
                       scratch.path())
                  .code,
              0);
  EXPECT_EQ(slurp(scratch / "a.wav"), slurp(scratch / "b.wav"));
  const Waveform out = read_wav(scratch / "a.wav");
  EXPECT_EQ(out.num_channels(), 1u);
  EXPECT_EQ(out.length(), read_wav(noisy).length());

  ASSERT_EQ(amdm_cli("enhance --ckpt " + ckpt().string() + " --in " + (data() / "test").string() +
                         " --out " + (scratch / "dir").string() + " --steps 2",
                     scratch.path())
                .code,
            0);
  EXPECT_EQ(data::list_scenes(data() / "test").size(),
            static_cast<std::size_t>(std::distance(fs::directory_iterator(scratch / "dir"), {})));
}

TEST_F(Cli, EnhanceRefusesMismatchedSettings) {
  const std::string noisy = (data() / "test/test_00000/noisy.wav").string();
  const CliResult att = amdm_cli("enhance --ckpt " + ckpt().string() + " --in " + noisy + " --out " +
                               (scratch / "x.wav").string() + " --attention off",
                           scratch.path());
  EXPECT_EQ(att.code, 1);
  EXPECT_NE(att.err.find("does not match the checkpoint"), std::string::npos) << att.err;

  Waveform w = read_wav(noisy);
  w.channels.push_back(w.channels[0]);
  write_wav(scratch / "three.wav", w);
  const CliResult wide = amdm_cli("enhance --ckpt " + ckpt().string() + " --in " +
                                (scratch / "three.wav").string() + " --out " +
                                (scratch / "y.wav").string(),
                            scratch.path());
  EXPECT_EQ(wide.code, 1);
  EXPECT_NE(wide.err.find("checkpoint expects 2"), std::string::npos) << wide.err;
  EXPECT_EQ(amdm_cli("enhance --ckpt " + ckpt().string() + " --in " +
                         (scratch / "three.wav").string() + " --out " +
                         (scratch / "y.wav").string() + " --first-channels on --steps 2",
                     scratch.path())
                .code,
            0);
}

TEST_F(Cli, TrainWritesLogAndCheckpoints) {
  const fs::path run = data().parent_path() / "run";
  EXPECT_TRUE(fs::exists(run / "best.ckpt"));
  EXPECT_TRUE(fs::exists(run / "last.ckpt"));
  EXPECT_TRUE(fs::exists(run / "train.cfg"));
  const auto rows = lines(slurp(run / "train_log.csv"));
  EXPECT_EQ(rows.size(), 1u + 2u + 1u);
}

TEST_F(Cli, ErrorsAreOneLineWithExitCodes) {
  const CliResult unknown = amdm_cli("simulate --out x --bogus 1", scratch.path());
  EXPECT_EQ(unknown.code, 2);
  EXPECT_EQ(lines(unknown.err).size(), 1u);
  EXPECT_EQ(unknown.err.rfind("error: simulate: ", 0), 0u) << unknown.err;

  const CliResult bad_ckpt = amdm_cli("enhance --ckpt " + (scratch / "none.ckpt").string() +
                                    " --in a.wav --out b.wav",
                                scratch.path());
  EXPECT_EQ(bad_ckpt.code, 1);
  EXPECT_EQ(lines(bad_ckpt.err).size(), 1u);

  EXPECT_NE(amdm_cli("", scratch.path()).code, 0);
  EXPECT_EQ(amdm_cli("simulate --out " + (scratch / "z").string() +
                         " --n-test 1 --protocol paper --channels 2",
                     scratch.path())
                .code,
            1);
}
