// Python access to the core: audio I/O, STFT, diffusion kernel, room
// simulation, metrics and checkpoint-based enhancement. Arrays are float64
// numpy arrays, channels first.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "amdm/dataset.hpp"
#include "amdm/enhance.hpp"
#include "amdm/metrics.hpp"
#include "amdm/scene.hpp"
#include "amdm/score_net.hpp"
#include "amdm/sde.hpp"
#include "amdm/stft.hpp"
#include "amdm/wav.hpp"

namespace py = pybind11;
using namespace amdm;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data(), t.data() + t.size(), out.mutable_data());
  return out;
}

Tensor from_numpy(const Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  Tensor t(shape);
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

Array channels_to_numpy(const std::vector<std::vector<double>>& ch) {
  const std::size_t C = ch.size(), L = C ? ch[0].size() : 0;
  Array out({static_cast<py::ssize_t>(C), static_cast<py::ssize_t>(L)});
  double* p = out.mutable_data();
  for (const auto& c : ch) p = std::copy(c.begin(), c.end(), p);
  return out;
}

// Accepts [L] (mono) or [C, L].
Waveform waveform_from_numpy(const Array& a, double sample_rate) {
  if (a.ndim() != 1 && a.ndim() != 2) throw std::invalid_argument("expected a [L] or [C, L] array");
  const std::size_t C = a.ndim() == 1 ? 1 : a.shape(0);
  const std::size_t L = a.ndim() == 1 ? a.shape(0) : a.shape(1);
  Waveform w(C, L, sample_rate);
  for (std::size_t c = 0; c < C; ++c) std::copy(a.data() + c * L, a.data() + (c + 1) * L, w.channels[c].begin());
  return w;
}

std::vector<double> vector_from_numpy(const Array& a) {
  if (a.ndim() != 1) throw std::invalid_argument("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

Array vector_to_numpy(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

StftParams stft_params(std::size_t fft_size, std::size_t hop, double sample_rate) {
  StftParams p;
  p.fft_size = fft_size;
  p.hop = hop;
  p.sample_rate = sample_rate;
  p.validate();
  return p;
}

}  // namespace

PYBIND11_MODULE(_amdm, m) {
  m.doc() = "multichannel diffusion speech enhancement core";

  m.def("read_wav", [](const std::filesystem::path& path) {
    const Waveform w = read_wav(path);
    return py::make_tuple(channels_to_numpy(w.channels), w.sample_rate);
  }, py::arg("path"), "Returns ([C, L] float64 array, sample_rate).");
  m.def("write_wav", [](const std::filesystem::path& path, const Array& audio, double sample_rate) {
    write_wav(path, waveform_from_numpy(audio, sample_rate));
  }, py::arg("path"), py::arg("audio"), py::arg("sample_rate") = 16000.0,
     "Writes 16-bit PCM; audio is [L] or [C, L].");

  m.def("stft", [](const Array& audio, std::size_t fft_size, std::size_t hop, bool compressed) {
    Spectrogram s = stft(waveform_from_numpy(audio, 16000.0), stft_params(fft_size, hop, 16000.0));
    if (compressed) s = compress(s);
    return to_numpy(s.values);
  }, py::arg("audio"), py::arg("fft_size") = 512, py::arg("hop") = 128, py::arg("compressed") = false,
     "[C, 2, T, F] real/imaginary planes.");
  m.def("istft", [](const Array& planes, std::size_t fft_size, std::size_t hop, bool compressed) {
    Spectrogram s{from_numpy(planes), stft_params(fft_size, hop, 16000.0), compressed};
    if (compressed) s = decompress(s);
    return channels_to_numpy(istft(s).channels);
  }, py::arg("planes"), py::arg("fft_size") = 512, py::arg("hop") = 128, py::arg("compressed") = false);

  py::class_<sde::SdeParams>(m, "SdeParams")
      .def(py::init<>())
      .def_readwrite("gamma", &sde::SdeParams::gamma)
      .def_readwrite("sigma_min", &sde::SdeParams::sigma_min)
      .def_readwrite("sigma_max", &sde::SdeParams::sigma_max)
      .def_readwrite("t_eps", &sde::SdeParams::t_eps)
      .def_readwrite("n_steps", &sde::SdeParams::n_steps)
      .def_readwrite("corrector_steps", &sde::SdeParams::corrector_steps)
      .def_readwrite("corrector_snr", &sde::SdeParams::corrector_snr);
  m.def("marginal_std", &sde::marginal_std, py::arg("t"), py::arg("params") = sde::SdeParams{});
  m.def("diffusion_coeff", &sde::diffusion_coeff, py::arg("t"), py::arg("params") = sde::SdeParams{});
  m.def("marginal_mean", [](const Array& s0, const Array& x, double t, const sde::SdeParams& p) {
    return to_numpy(sde::marginal_mean(from_numpy(s0), from_numpy(x), t, p));
  }, py::arg("s0"), py::arg("x"), py::arg("t"), py::arg("params") = sde::SdeParams{});

  m.def("si_sdr", [](const Array& estimate, const Array& reference) {
    return metrics::si_sdr(vector_from_numpy(estimate), vector_from_numpy(reference));
  }, py::arg("estimate"), py::arg("reference"));

  m.def("simulate_rir", [](std::array<double, 3> room, std::array<double, 3> source,
                           std::array<double, 3> mic, double rt60, double sample_rate) {
    scene::SceneConfig c;
    c.room = {room[0], room[1], room[2]};
    c.source = {source[0], source[1], source[2]};
    c.mics = {{mic[0], mic[1], mic[2]}};
    c.rt60 = rt60;
    c.sample_rate = sample_rate;
    c.validate();
    return vector_to_numpy(scene::simulate_rir(c, 0).taps);
  }, py::arg("room"), py::arg("source"), py::arg("mic"), py::arg("rt60") = 0.2,
     py::arg("sample_rate") = 16000.0, "Image-method impulse response for one microphone.");

  m.def("simulate_dataset", [](const std::string& out, std::size_t n_train, std::size_t n_val,
                               std::size_t n_test, std::uint64_t seed, double duration) {
    data::SimulateOptions o;
    o.out = out;
    o.n_train = n_train;
    o.n_val = n_val;
    o.n_test = n_test;
    o.seed = seed;
    o.duration = duration;
    py::gil_scoped_release release;
    return data::simulate_dataset(o).size();
  }, py::arg("out"), py::arg("n_train"), py::arg("n_val"), py::arg("n_test"), py::arg("seed") = 0,
     py::arg("duration") = 2.0, "Renders a 4-microphone dataset; returns the scene count.");

  m.def("enhance", [](const std::filesystem::path& checkpoint, const Array& noisy,
                      std::size_t steps, std::uint64_t seed) {
    const ScoreNet net = load_checkpoint(checkpoint);
    EnhanceOptions o;
    o.front_end = front_end_from_metadata(read_checkpoint_metadata(checkpoint));
    o.steps = steps;
    o.seed = seed;
    const Waveform w = waveform_from_numpy(noisy, o.front_end.stft.sample_rate);
    std::vector<double> out;
    {
      py::gil_scoped_release release;
      out = enhance(net, w, o);
    }
    return vector_to_numpy(out);
  }, py::arg("checkpoint"), py::arg("noisy"), py::arg("steps") = 0, py::arg("seed") = 0,
     "Enhanced reference channel for a [M, L] input.");
}
