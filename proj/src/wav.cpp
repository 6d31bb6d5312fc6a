#include "amdm/wav.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace amdm {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}
void put16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xFF));
  out.push_back(static_cast<char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("wav: cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) -> Waveform {
    throw std::runtime_error("wav: " + path.string() + ": " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    return fail("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* hdr = bytes.data() + pos;
    const std::uint32_t size = le32(hdr + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(hdr, "data", 4) != 0)
      return fail("truncated chunk");
    if (std::memcmp(hdr, "fmt ", 4) == 0) {
      if (size < 16) return fail("short fmt chunk");
      const unsigned char* f = bytes.data() + body;
      format = le16(f);
      channels = le16(f + 2);
      rate = le32(f + 4);
      bits = le16(f + 14);
      if (format == kFormatExtensible && size >= 26) format = le16(f + 24);
      have_fmt = true;
    } else if (std::memcmp(hdr, "data", 4) == 0) {
      if (!have_fmt) return fail("data chunk before fmt chunk");
      if (format != kFormatPcm || bits != 16)
        return fail("only 16-bit PCM is supported (format " + std::to_string(format) + ", " +
                    std::to_string(bits) + " bits)");
      if (channels == 0) return fail("zero channels");
      const std::size_t avail = std::min<std::size_t>(size, bytes.size() - body);
      const std::size_t frames = avail / (2u * channels);
      Waveform w(channels, frames, static_cast<double>(rate));
      const unsigned char* d = bytes.data() + body;
      for (std::size_t n = 0; n < frames; ++n)
        for (std::size_t c = 0; c < channels; ++c) {
          const auto s = static_cast<std::int16_t>(le16(d + 2 * (n * channels + c)));
          w.channels[c][n] = static_cast<double>(s) / 32768.0;
        }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  return fail("no data chunk");
}

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
  const std::size_t channels = wav.num_channels();
  if (channels == 0 || channels > 0xFFFF) throw std::invalid_argument("wav: bad channel count");
  const std::size_t frames = wav.length();
  for (const auto& ch : wav.channels)
    if (ch.size() != frames) throw std::invalid_argument("wav: channels differ in length");
  const std::size_t data_bytes = frames * channels * 2;
  if (data_bytes > 0xFFFFFFFFu - 36) throw std::invalid_argument("wav: too long for RIFF");
  const auto rate = static_cast<std::uint32_t>(std::lround(wav.sample_rate));

  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put32(out, static_cast<std::uint32_t>(36 + data_bytes));
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, kFormatPcm);
  put16(out, static_cast<std::uint16_t>(channels));
  put32(out, rate);
  put32(out, static_cast<std::uint32_t>(rate * channels * 2));
  put16(out, static_cast<std::uint16_t>(channels * 2));
  put16(out, 16);
  out += "data";
  put32(out, static_cast<std::uint32_t>(data_bytes));
  for (std::size_t n = 0; n < frames; ++n)
    for (std::size_t c = 0; c < channels; ++c) {
      const double v = std::round(wav.channels[c][n] * 32768.0);
      const auto s = static_cast<std::int16_t>(std::clamp(v, -32768.0, 32767.0));
      put16(out, static_cast<std::uint16_t>(s));
    }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("wav: cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw std::runtime_error("wav: write failed for " + path.string());
}

}  // namespace amdm
