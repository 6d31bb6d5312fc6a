// amdm: simulate datasets, train, enhance, evaluate and render spectrograms.
//
// Every subcommand accepts --config FILE (flat `key = value` lines, keys are
// long flag names). Precedence: command-line flags > config file > defaults.
// Errors are reported as one line `error: <command>: <message>`.

#include <CLI11.hpp>

#include <algorithm>
#include <malloc.h>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "amdm/config.hpp"
#include "amdm/dataset.hpp"
#include "amdm/enhance.hpp"
#include "amdm/metrics.hpp"
#include "amdm/png.hpp"
#include "amdm/scene.hpp"
#include "amdm/score_net.hpp"
#include "amdm/stft.hpp"
#include "amdm/trainer.hpp"
#include "amdm/wav.hpp"

namespace fs = std::filesystem;
using namespace amdm;

namespace {

bool on_off(const std::string& v, const std::string& flag) {
  if (v == "on") return true;
  if (v == "off") return false;
  throw std::invalid_argument(flag + " must be on or off, got '" + v + "'");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path.string());
}

// Effective values of every option of `cmd` in config-file form.
std::string effective_config(const CLI::App* cmd) {
  ConfigEntries entries;
  for (const CLI::Option* o : cmd->get_options()) {
    if (o->get_lnames().empty()) continue;
    const std::string name = o->get_lnames().front();
    if (name == "help" || name == "config") continue;
    std::string value = o->count() ? o->results().back() : o->get_default_str();
    entries.emplace_back(name, value);
  }
  return "# amdm " + cmd->get_name() + "\n" + format_config(entries);
}

std::string one_line(std::string s) {
  std::replace(s.begin(), s.end(), '\n', ' ');
  return s;
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string out, protocol = "paper", noise = "babble", speech_dir, noise_dir;
  std::size_t n_train = 0, n_val = 0, n_test = 0, channels = 4;
  std::uint64_t seed = 0;
  double duration = 2.0, rt60 = 0.2, snr_min = 5.0, snr_max = 15.0;
};

int run_simulate(const SimulateArgs& a, const CLI::App* cmd) {
  data::SimulateOptions o;
  o.out = a.out;
  o.n_train = a.n_train;
  o.n_val = a.n_val;
  o.n_test = a.n_test;
  o.seed = a.seed;
  o.duration = a.duration;
  o.noise = scene::parse_noise_kind(a.noise);
  o.speech_dir = a.speech_dir;
  o.noise_dir = a.noise_dir;
  if (a.protocol == "paper") {
    o.protocol.protocol = scene::Protocol::kStandard;
    if (cmd->get_option("--channels")->count() && a.channels != 4)
      throw std::invalid_argument("--protocol paper uses 4 microphones; use --protocol custom");
    if (cmd->get_option("--rt60")->count() && a.rt60 != 0.2)
      throw std::invalid_argument("--protocol paper fixes rt60 = 0.2; use --protocol custom");
  } else if (a.protocol == "custom") {
    o.protocol.protocol = scene::Protocol::kCustom;
    o.protocol.channels = a.channels;
    o.protocol.rt60 = a.rt60;
  } else {
    throw std::invalid_argument("--protocol must be paper or custom");
  }
  o.protocol.snr_min = a.snr_min;
  o.protocol.snr_max = a.snr_max;
  const auto manifest = data::simulate_dataset(o);
  write_text(fs::path(a.out) / "simulate.cfg", effective_config(cmd));
  std::printf("simulated %zu scenes into %s\n", manifest.size(), a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string data, out, attention = "on";
  std::size_t channels = 0, steps = 1000, batch = 8, val_every = 100, patience = 5, val_count = 4,
              val_steps = 30, crop_frames = 64, base_width = 32, levels = 2, fft_size = 512,
              hop = 128, sde_steps = 30, corrector_steps = 1;
  double lr = 1e-3, weight_decay = 1e-4, data_scale = 0.0, gamma = 1.5, sigma_min = 0.05, sigma_max = 0.5,
         t_eps = 0.03, corrector_snr = 0.5;
  std::uint64_t seed = 0;
};

std::vector<data::Utterance> keep_channels(std::vector<data::Utterance> utts, std::size_t M,
                                           const std::string& split) {
  for (auto& u : utts) {
    if (u.noisy.num_channels() < M)
      throw std::invalid_argument("--channels " + std::to_string(M) + " exceeds the " +
                                  std::to_string(u.noisy.num_channels()) + " channels of " +
                                  split + "/" + u.id);
    u.noisy.channels.resize(M);
  }
  return utts;
}

int run_train(const TrainArgs& a, const CLI::App* cmd) {
  const fs::path root = a.data;
  auto train_utts = data::load_split(root / "train");
  auto val_utts = data::load_split(root / "val", a.val_count);
  if (train_utts.empty()) throw std::invalid_argument("no training scenes in " + (root / "train").string());
  if (val_utts.empty()) throw std::invalid_argument("no validation scenes in " + (root / "val").string());
  const std::size_t available = train_utts.front().noisy.num_channels();
  const std::size_t M = a.channels ? a.channels : available;
  train_utts = keep_channels(std::move(train_utts), M, "train");
  val_utts = keep_channels(std::move(val_utts), M, "val");

  FrontEnd fe;
  fe.stft.fft_size = a.fft_size;
  fe.stft.hop = a.hop;
  fe.stft.sample_rate = train_utts.front().noisy.sample_rate;
  fe.stft.validate();

  ScoreNetConfig nc;
  nc.channels = M;
  nc.levels = a.levels;
  nc.base_width = a.base_width;
  nc.attention = on_off(a.attention, "--attention");
  nc.data_scale = a.data_scale;
  nc.sde.gamma = a.gamma;
  nc.sde.sigma_min = a.sigma_min;
  nc.sde.sigma_max = a.sigma_max;
  nc.sde.t_eps = a.t_eps;
  nc.sde.n_steps = a.sde_steps;
  nc.sde.corrector_steps = a.corrector_steps;
  nc.sde.corrector_snr = a.corrector_snr;

  train::TrainConfig tc;
  tc.batch_size = a.batch;
  tc.learning_rate = a.lr;
  tc.weight_decay = a.weight_decay;
  tc.max_steps = a.steps;
  tc.val_every = a.val_every;
  tc.patience = a.patience;
  tc.seed = derive_seed(a.seed, 1);
  tc.crop_frames = a.crop_frames;
  tc.checkpoint_metadata = front_end_metadata(fe);
  tc.validate();

  fs::create_directories(a.out);
  write_text(fs::path(a.out) / "train.cfg", effective_config(cmd));

  std::vector<train::TrainingPair> pairs;
  pairs.reserve(train_utts.size());
  for (const auto& u : train_utts) pairs.push_back(train::prepare_pair(u, fe));
  train_utts.clear();
  if (a.data_scale == 0.0) nc.data_scale = train::estimate_data_scale(pairs);
  nc.validate();

  Rng init_rng(derive_seed(a.seed, 0));
  ScoreNet net = ScoreNet::init(nc, init_rng);
  std::fprintf(stderr, "model: %zu parameters, M=%zu, attention %s, data scale %g\n",
               net.parameter_count(), M, nc.attention_active() ? "on" : "off", nc.data_scale);

  EnhanceOptions eo;
  eo.front_end = fe;
  eo.steps = a.val_steps;
  eo.seed = derive_seed(a.seed, 2);
  auto validator = [&](const ScoreNet& n) { return train::validate(n, val_utts, eo); };
  const train::FitResult r =
      train::fit(net, pairs, validator, tc, a.out, [](const std::string& s) {
        std::fprintf(stderr, "%s\n", s.c_str());
      });
  std::printf("trained %zu steps (%zu validations%s); best validation SI-SDR %.3f dB -> %s\n",
              r.steps, r.validations, r.early_stopped ? ", early stop" : "", r.best_score,
              r.best_checkpoint.string().c_str());
  if (r.rejected_steps) std::printf("%zu steps rejected for non-finite loss\n", r.rejected_steps);
  return 0;
}

// ---------------------------------------------------------------------------

struct EnhanceArgs {
  std::string ckpt, in, out, first_channels = "off", attention = "auto";
  std::size_t steps = 0;
  std::uint64_t seed = 0;
};

int run_enhance(const EnhanceArgs& a) {
  const ScoreNet net = load_checkpoint(a.ckpt);
  EnhanceOptions eo;
  eo.front_end = front_end_from_metadata(read_checkpoint_metadata(a.ckpt));
  eo.steps = a.steps;
  const bool take_first = on_off(a.first_channels, "--first-channels");
  const std::size_t M = net.config().channels;
  if (a.attention != "auto" && on_off(a.attention, "--attention") != net.config().attention)
    throw std::invalid_argument("--attention " + a.attention + " does not match the checkpoint (trained with attention " +
                                (net.config().attention ? "on" : "off") + ")");

  auto process = [&](const fs::path& src, const std::string& name, const fs::path& dst) {
    Waveform w = read_wav(src);
    if (w.num_channels() != M) {
      if (!take_first || w.num_channels() < M)
        throw std::invalid_argument(src.string() + " has " + std::to_string(w.num_channels()) +
                                    " channels, checkpoint expects " + std::to_string(M));
      w.channels.resize(M);
    }
    eo.seed = derive_seed(a.seed, data::fnv1a(name));
    Waveform out(1, 0, w.sample_rate);
    out.channels[0] = enhance(net, w, eo);
    write_wav(dst, out);
  };

  const fs::path in = a.in, out = a.out;
  if (fs::is_directory(in)) {
    std::vector<std::pair<std::string, fs::path>> inputs;
    for (const auto& id : data::list_scenes(in)) inputs.emplace_back(id, in / id / "noisy.wav");
    if (inputs.empty()) {
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_regular_file() && e.path().extension() == ".wav")
          inputs.emplace_back(e.path().stem().string(), e.path());
      std::sort(inputs.begin(), inputs.end());
    }
    if (inputs.empty()) throw std::invalid_argument("no inputs found in " + in.string());
    fs::create_directories(out);
    for (const auto& [name, path] : inputs) process(path, name, out / (name + ".wav"));
    std::printf("enhanced %zu files into %s\n", inputs.size(), out.string().c_str());
  } else {
    if (!fs::exists(in)) throw std::invalid_argument("input not found: " + in.string());
    const fs::path dst = fs::is_directory(out) ? out / (in.stem().string() + ".wav") : out;
    process(in, in.stem().string(), dst);
    std::printf("enhanced %s -> %s\n", in.string().c_str(), dst.string().c_str());
  }
  return 0;
}

// ---------------------------------------------------------------------------

struct EvaluateArgs {
  std::string enhanced, data, split = "test", report;
};

int run_evaluate(const EvaluateArgs& a) {
  fs::path split_dir = fs::path(a.data) / a.split;
  if (!fs::is_directory(split_dir)) split_dir = a.data;
  if (!fs::is_directory(split_dir)) throw std::invalid_argument("not a directory: " + a.data);
  const metrics::SetReport r = metrics::evaluate_set(a.enhanced, split_dir);
  metrics::write_report(a.report, r);
  std::printf("utterances %zu\n", r.rows.size());
  std::printf("si_sdr_db        %8.3f +- %.3f\n", r.mean.si_sdr_db, r.std.si_sdr_db);
  std::printf("input_si_sdr_db  %8.3f +- %.3f\n", r.mean.input_si_sdr_db, r.std.input_si_sdr_db);
  std::printf("improvement_db   %8.3f +- %.3f\n", r.mean.improvement_db, r.std.improvement_db);
  for (const auto& id : r.missing) std::fprintf(stderr, "missing enhanced file: %s\n", id.c_str());
  for (const auto& id : r.unexpected) std::fprintf(stderr, "no matching scene: %s\n", id.c_str());
  for (const auto& s : r.invalid) std::fprintf(stderr, "skipped: %s\n", s.c_str());
  if (!r.complete())
    throw std::runtime_error(std::to_string(r.missing.size() + r.unexpected.size() +
                                            r.invalid.size()) +
                             " utterance ids mismatched or unreadable (report written)");
  return 0;
}

// ---------------------------------------------------------------------------

struct SpectrogramArgs {
  std::string in, out, compressed = "off";
  std::size_t fft_size = 512, hop = 128, channel = 0;
};

int run_spectrogram(const SpectrogramArgs& a) {
  const Waveform w = read_wav(a.in);
  StftParams p;
  p.fft_size = a.fft_size;
  p.hop = a.hop;
  p.sample_rate = w.sample_rate;
  Spectrogram s = stft(w, p);
  if (on_off(a.compressed, "--compressed")) s = compress(s);
  const Tensor db = magnitude_db(s, a.channel);
  const std::size_t L = db.dim(0), K = db.dim(1);
  const fs::path out = a.out;
  const std::string ext = out.extension().string();
  if (ext == ".csv" || ext == ".CSV") {
    std::FILE* f = std::fopen(out.string().c_str(), "w");
    if (!f) throw std::runtime_error("cannot write " + out.string());
    for (std::size_t l = 0; l < L; ++l)
      for (std::size_t k = 0; k < K; ++k)
        std::fprintf(f, k + 1 < K ? "%.6f," : "%.6f\n", db[l * K + k]);
    if (std::fclose(f) != 0) throw std::runtime_error("write failed: " + out.string());
  } else if (ext == ".png" || ext == ".PNG") {
    double hi = db[0];
    for (double v : db.values()) hi = std::max(hi, v);
    const double lo = hi - 80.0;
    std::vector<std::uint8_t> px(L * K, 0);
    for (std::size_t k = 0; k < K; ++k)
      for (std::size_t l = 0; l < L; ++l) {
        const double v = (db[l * K + k] - lo) / (hi - lo);
        // Row 0 is the top of the image: highest frequency.
        px[(K - 1 - k) * L + l] = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
      }
    write_png_gray(out, L, K, px);
  } else {
    throw std::invalid_argument("--out must end in .png or .csv");
  }
  std::printf("%zu frames x %zu bins -> %s\n", L, K, out.string().c_str());
  return 0;
}

// Rewrites argv so that config-file entries precede the user's own flags;
// with a take-last policy the command line then wins.
std::vector<std::string> merge_config(const CLI::App& app, int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  if (args.size() < 2) return args;
  const CLI::App* cmd = nullptr;
  for (const CLI::App* sub : app.get_subcommands({}))
    if (sub->get_name() == args[1]) cmd = sub;
  if (!cmd) return args;
  std::string path;
  for (std::size_t i = 2; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) path = args[i + 1];
    if (args[i].starts_with("--config=")) path = args[i].substr(9);
  }
  if (path.empty()) return args;
  std::vector<std::string> injected;
  for (auto [key, value] : load_config(path)) {
    std::replace(key.begin(), key.end(), '_', '-');
    if (key == "config") continue;
    if (!cmd->get_option_no_throw("--" + key)) {
      std::fprintf(stderr, "note: %s: config key '%s' does not apply, ignored\n",
                   cmd->get_name().c_str(), key.c_str());
      continue;
    }
    injected.push_back("--" + key);
    injected.push_back(value);
  }
  args.insert(args.begin() + 2, injected.begin(), injected.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
#ifdef __GLIBC__
  // Large tensors are allocated and freed at a high rate; keep them on the heap
  // instead of an mmap/munmap round trip each time.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  CLI::App app{"amdm: multichannel diffusion speech enhancement"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.option_defaults()->always_capture_default();
  std::string config_path;

  SimulateArgs sim;
  auto* cs = app.add_subcommand("simulate", "render a simulated multichannel dataset");
  cs->add_option("--config", config_path, "key = value config file");
  cs->add_option("--out", sim.out, "output dataset directory")->required();
  cs->add_option("--n-train", sim.n_train);
  cs->add_option("--n-val", sim.n_val);
  cs->add_option("--n-test", sim.n_test);
  cs->add_option("--seed", sim.seed);
  cs->add_option("--protocol", sim.protocol, "paper | custom");
  cs->add_option("--channels", sim.channels, "microphones (custom protocol)");
  cs->add_option("--duration", sim.duration, "seconds per scene");
  cs->add_option("--rt60", sim.rt60, "seconds (custom protocol)");
  cs->add_option("--snr-min", sim.snr_min);
  cs->add_option("--snr-max", sim.snr_max);
  cs->add_option("--noise", sim.noise, "babble | white");
  cs->add_option("--speech-dir", sim.speech_dir, "WAV corpus for source speech");
  cs->add_option("--noise-dir", sim.noise_dir, "WAV corpus for noise");

  TrainArgs tr;
  auto* ct = app.add_subcommand("train", "train a score network");
  ct->add_option("--config", config_path, "key = value config file");
  ct->add_option("--data", tr.data, "dataset root")->required();
  ct->add_option("--out", tr.out, "run directory")->required();
  ct->add_option("--channels", tr.channels, "microphones to use (0 = all)");
  ct->add_option("--attention", tr.attention, "on | off");
  ct->add_option("--steps", tr.steps);
  ct->add_option("--batch", tr.batch);
  ct->add_option("--lr", tr.lr);
  ct->add_option("--weight-decay", tr.weight_decay);
  ct->add_option("--seed", tr.seed);
  ct->add_option("--val-every", tr.val_every);
  ct->add_option("--patience", tr.patience);
  ct->add_option("--val-count", tr.val_count, "validation scenes used");
  ct->add_option("--val-steps", tr.val_steps, "reverse steps during validation");
  ct->add_option("--crop-frames", tr.crop_frames, "training crop length in frames (0 = whole)");
  ct->add_option("--base-width", tr.base_width);
  ct->add_option("--levels", tr.levels);
  ct->add_option("--data-scale", tr.data_scale, "clean coefficient scale (0 = measure on the training set)");
  ct->add_option("--fft-size", tr.fft_size);
  ct->add_option("--hop", tr.hop);
  ct->add_option("--sde-steps", tr.sde_steps, "default reverse steps stored in the checkpoint");
  ct->add_option("--corrector-steps", tr.corrector_steps);
  ct->add_option("--corrector-snr", tr.corrector_snr);
  ct->add_option("--gamma", tr.gamma);
  ct->add_option("--sigma-min", tr.sigma_min);
  ct->add_option("--sigma-max", tr.sigma_max);
  ct->add_option("--t-eps", tr.t_eps);

  EnhanceArgs en;
  auto* ce = app.add_subcommand("enhance", "enhance a WAV file or a directory");
  ce->add_option("--config", config_path, "key = value config file");
  ce->add_option("--ckpt", en.ckpt)->required();
  ce->add_option("--in", en.in, "WAV file, directory of WAVs or dataset split")->required();
  ce->add_option("--out", en.out, "WAV file or directory")->required();
  ce->add_option("--steps", en.steps, "reverse steps (0 = checkpoint default)");
  ce->add_option("--seed", en.seed);
  ce->add_option("--attention", en.attention, "auto | on | off; must match the checkpoint");
  ce->add_option("--first-channels", en.first_channels,
                 "on: use the first M channels of wider inputs");

  EvaluateArgs ev;
  auto* cv = app.add_subcommand("evaluate", "score enhanced files against dataset targets");
  cv->add_option("--config", config_path, "key = value config file");
  cv->add_option("--enhanced", ev.enhanced)->required();
  cv->add_option("--data", ev.data, "dataset root or split directory")->required();
  cv->add_option("--split", ev.split);
  cv->add_option("--report", ev.report, "CSV report path")->required();

  SpectrogramArgs sp;
  auto* cp = app.add_subcommand("spectrogram", "log-magnitude spectrogram as PNG or CSV");
  cp->add_option("--config", config_path, "key = value config file");
  cp->add_option("--in", sp.in)->required();
  cp->add_option("--out", sp.out, "*.png or *.csv")->required();
  cp->add_option("--compressed", sp.compressed, "on | off");
  cp->add_option("--fft-size", sp.fft_size);
  cp->add_option("--hop", sp.hop);
  cp->add_option("--channel", sp.channel);

  std::string command = argc > 1 ? argv[1] : "amdm";
  try {
    std::vector<std::string> args = merge_config(app, argc, argv);
    std::vector<char*> ptrs;
    for (auto& s : args) ptrs.push_back(s.data());
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "error: %s: %s\n", command.c_str(), one_line(e.what()).c_str());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", command.c_str(), one_line(e.what()).c_str());
    return 2;
  }

  try {
    if (cs->parsed()) return run_simulate(sim, cs);
    if (ct->parsed()) return run_train(tr, ct);
    if (ce->parsed()) return run_enhance(en);
    if (cv->parsed()) return run_evaluate(ev);
    if (cp->parsed()) return run_spectrogram(sp);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", command.c_str(), one_line(e.what()).c_str());
    return 1;
  }
  return 1;
}
