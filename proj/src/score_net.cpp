#include "amdm/score_net.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace amdm {
namespace {

std::size_t round_up(std::size_t v, std::size_t m) { return (v + m - 1) / m * m; }

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint32_t crc32_of(const void* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

[[noreturn]] void bad_checkpoint(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error("checkpoint " + path.string() + ": " + why);
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(s[i]);
  }
  return out;
}

}  // namespace

// --- config -------------------------------------------------------------------

void ScoreNetConfig::validate() const {
  if (channels == 0) throw std::invalid_argument("score_net: channels must be >= 1");
  if (levels == 0 || levels > 6) throw std::invalid_argument("score_net: levels must be in [1, 6]");
  if (base_width == 0 || time_embedding_dim == 0 || time_embedding_dim % 2 != 0)
    throw std::invalid_argument("score_net: base_width > 0 and even time_embedding_dim required");
  if (norm_groups == 0 || base_width % norm_groups != 0 || (2 * base_width) % norm_groups != 0)
    throw std::invalid_argument("score_net: norm_groups must divide the stage widths");
  if (attention_hidden == 0) throw std::invalid_argument("score_net: attention_hidden must be > 0");
  if (!(data_scale > 0.0) || !std::isfinite(data_scale))
    throw std::invalid_argument("score_net: data_scale must be finite and > 0");
  sde.validate();
}

std::size_t ScoreNetConfig::stage_width(std::size_t level) const {
  return level == 0 ? base_width : 2 * base_width;
}

std::size_t ScoreNetConfig::bottleneck_width() const {
  const std::size_t m = attention_active() ? std::lcm(channels, norm_groups) : norm_groups;
  return round_up(2 * base_width, m);
}

std::size_t ScoreNetConfig::input_planes() const {
  return (attention_active() ? 2 * (2 * channels - 1) : 2 * channels) + 2;
}

AttentionConfig ScoreNetConfig::input_attention() const {
  return AttentionConfig{channels, 2, attention_hidden, 1, false};
}

AttentionConfig ScoreNetConfig::bottleneck_attention() const {
  const std::size_t f = bottleneck_width() / channels;
  return AttentionConfig{channels, f, attention_hidden, f, false};
}

bool operator==(const ScoreNetConfig& a, const ScoreNetConfig& b) {
  return a.channels == b.channels && a.levels == b.levels && a.base_width == b.base_width &&
         a.attention == b.attention && a.attention_hidden == b.attention_hidden &&
         a.time_embedding_dim == b.time_embedding_dim && a.norm_groups == b.norm_groups &&
         a.data_scale == b.data_scale && a.sde.gamma == b.sde.gamma && a.sde.sigma_min == b.sde.sigma_min &&
         a.sde.sigma_max == b.sde.sigma_max && a.sde.t_eps == b.sde.t_eps &&
         a.sde.n_steps == b.sde.n_steps && a.sde.corrector_steps == b.sde.corrector_steps &&
         a.sde.corrector_snr == b.sde.corrector_snr;
}

Tensor time_embedding(double t, std::size_t dim) {
  const std::size_t half = dim / 2;
  Tensor e({dim});
  for (std::size_t k = 0; k < half; ++k) {
    const double freq =
        std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
    const double arg = 1000.0 * t * freq;
    e[k] = std::sin(arg);
    e[half + k] = std::cos(arg);
  }
  return e;
}

// --- layout / init ------------------------------------------------------------------

ParamStore parameter_layout(const ScoreNetConfig& c) {
  c.validate();
  ParamStore p;
  const std::size_t D = c.time_embedding_dim;
  auto conv3 = [&](const std::string& name, std::size_t in, std::size_t out) {
    p.add(name + ".w", Tensor({out, in, 3, 3}));
    p.add(name + ".b", Tensor({out}));
  };
  auto norm = [&](const std::string& name, std::size_t ch) {
    p.add(name + ".gamma", Tensor({ch}, 1.0));
    p.add(name + ".beta", Tensor({ch}));
  };
  auto temb = [&](const std::string& name, std::size_t ch) {
    p.add(name + ".w", Tensor({ch, D}));
    p.add(name + ".b", Tensor({ch}));
  };

  p.add("temb.l1.w", Tensor({D, D}));
  p.add("temb.l1.b", Tensor({D}));
  p.add("temb.l2.w", Tensor({D, D}));
  p.add("temb.l2.b", Tensor({D}));

  if (c.attention_active()) {
    Rng unused(0);
    ParamStore a;
    init_attention_params(a, c.input_attention(), "attn_in.", unused);
    for (const auto& [name, t] : a) p.add(name, Tensor(t.shape()));
  }
  const std::size_t c0 = c.stage_width(0);
  conv3("in.conv", c.input_planes(), c0);
  temb("in.temb", c0);

  std::size_t prev = c0;
  for (std::size_t i = 0; i < c.levels; ++i) {
    const std::string s = "enc" + std::to_string(i);
    conv3(s + ".conv", prev, c.stage_width(i));
    norm(s + ".gn", c.stage_width(i));
    temb(s + ".temb", c.stage_width(i));
    temb(s + ".tscale", c.stage_width(i));
    prev = c.stage_width(i);
  }
  const std::size_t cm = c.bottleneck_width();
  conv3("mid.conv", prev, cm);
  norm("mid.gn", cm);
  temb("mid.temb", cm);
  temb("mid.tscale", cm);
  if (c.attention_active()) {
    Rng unused(0);
    ParamStore a;
    init_attention_params(a, c.bottleneck_attention(), "attn_mid.", unused);
    for (const auto& [name, t] : a) p.add(name, Tensor(t.shape()));
    const std::size_t expanded = (2 * c.channels - 1) * (cm / c.channels);
    p.add("mid.proj.w", Tensor({cm, expanded}));
    p.add("mid.proj.b", Tensor({cm}));
  }
  prev = cm;
  for (std::size_t i = c.levels; i-- > 0;) {
    const std::string s = "dec" + std::to_string(i);
    conv3(s + ".conv", prev + c.stage_width(i), c.stage_width(i));
    norm(s + ".gn", c.stage_width(i));
    temb(s + ".temb", c.stage_width(i));
    temb(s + ".tscale", c.stage_width(i));
    prev = c.stage_width(i);
  }
  conv3("out.conv", c0, 2);
  temb("out.skip", 1);
  return p;
}

ScoreNet::ScoreNet(ScoreNetConfig config, ParamStore params)
    : config_(std::move(config)), params_(std::move(params)) {
  const ParamStore layout = parameter_layout(config_);
  auto it = params_.begin();
  for (const auto& [name, t] : layout) {
    if (it == params_.end() || it->first != name || it->second.shape() != t.shape())
      throw std::invalid_argument("score_net: parameters do not match architecture at '" + name +
                                  "'");
    ++it;
  }
  if (it != params_.end())
    throw std::invalid_argument("score_net: unexpected extra parameter '" + it->first + "'");
}

ScoreNet ScoreNet::init(const ScoreNetConfig& config, Rng& rng) {
  ParamStore p = parameter_layout(config);
  for (auto& [name, t] : p) {
    const bool weight = name.ends_with(".w");
    if (!weight || name.starts_with("out.") || name.find(".tscale.") != std::string::npos) continue;
    std::size_t fan_in = t.dim(1);
    if (t.rank() == 4) fan_in *= t.dim(2) * t.dim(3);
    t = he_normal(rng, t.shape(), fan_in);
  }
  return ScoreNet(config, std::move(p));
}

// --- forward --------------------------------------------------------------------

Tensor reflect_pad(const Tensor& t, std::size_t height, std::size_t width) {
  if (t.rank() < 2) throw std::invalid_argument("reflect_pad: rank must be >= 2");
  const std::size_t r = t.rank();
  const std::size_t H = t.dim(r - 2), W = t.dim(r - 1);
  if (height < H || width < W) throw std::invalid_argument("reflect_pad: target smaller than input");
  if (height == H && width == W) return t;
  auto mirror = [](std::size_t i, std::size_t n) -> std::size_t {
    if (n == 1) return 0;
    const std::size_t period = 2 * (n - 1);
    std::size_t k = i % period;
    return k < n ? k : period - k;
  };
  Shape s = t.shape();
  s[r - 2] = height;
  s[r - 1] = width;
  Tensor out(s);
  const std::size_t outer = t.size() / (H * W);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < height; ++i)
      for (std::size_t j = 0; j < width; ++j)
        out[(o * height + i) * width + j] = t[(o * H + mirror(i, H)) * W + mirror(j, W)];
  return out;
}

void ScoreNet::check_inputs(const Tensor& s_t, const Tensor& x) const {
  if (s_t.rank() != 3 || s_t.dim(0) != 2)
    throw std::invalid_argument("score_net: s_t must be [2, T, F], got " + to_string(s_t.shape()));
  if (x.rank() != 4 || x.dim(0) != config_.channels || x.dim(1) != 2 || x.dim(2) != s_t.dim(1) ||
      x.dim(3) != s_t.dim(2))
    throw std::invalid_argument("score_net: x must be [" + std::to_string(config_.channels) +
                                ", 2, " + std::to_string(s_t.dim(1)) + ", " +
                                std::to_string(s_t.dim(2)) + "], got " + to_string(x.shape()));
}

ad::Var ScoreNet::trace(ad::Graph& g, TracedParams& P, const Tensor& s_t, const Tensor& x,
                        double t) const {
  check_inputs(s_t, x);
  const ScoreNetConfig& c = config_;
  const std::size_t mult = std::size_t{1} << c.levels;
  const std::size_t T = s_t.dim(1), F = s_t.dim(2);
  const std::size_t Tp = round_up(T, mult), Fp = round_up(F, mult);
  const bool padded = Tp != T || Fp != F;
  const std::size_t M = c.channels;
  const std::size_t G = c.norm_groups;

  ad::Var e = g.input(time_embedding(t, c.time_embedding_dim));
  e = ad::relu(g, ad::linear(g, e, P("temb.l1.w"), P("temb.l1.b")));
  e = ad::relu(g, ad::linear(g, e, P("temb.l2.w"), P("temb.l2.b")));
  auto time_bias = [&](const std::string& stage, std::size_t ch) {
    return ad::reshape(g, ad::linear(g, e, P(stage + ".temb.w"), P(stage + ".temb.b")),
                       {ch, 1, 1});
  };
  auto conv_block = [&](ad::Var h, const std::string& stage, std::size_t ch) {
    h = ad::conv2d_3x3(g, h, P(stage + ".conv.w"), P(stage + ".conv.b"));
    h = ad::group_norm(g, h, P(stage + ".gn.gamma"), P(stage + ".gn.beta"), G);
    const ad::Var gain = ad::reshape(
        g, ad::linear(g, e, P(stage + ".tscale.w"), P(stage + ".tscale.b")), {ch, 1, 1});
    h = ad::add(g, h, ad::mul(g, h, gain));
    return ad::relu(g, ad::add(g, h, time_bias(stage, ch)));
  };

  ad::Var xv = g.input(padded ? reflect_pad(x, Tp, Fp) : x);
  ad::Var cond;
  if (c.attention_active()) {
    cond = cross_channel_attention(g, P, xv, c.input_attention(), "attn_in.");
    cond = ad::reshape(g, cond, {2 * (2 * M - 1), Tp, Fp});
  } else {
    cond = ad::reshape(g, xv, {2 * M, Tp, Fp});
  }
  // Noise-level conditioning of the state.
  const double a = std::exp(-c.sde.gamma * t);
  const double sigma = sde::marginal_std(t, c.sde);
  const double sigma_e = sigma / a;
  const double d2 = c.data_scale * c.data_scale;
  const double norm = std::sqrt(sigma_e * sigma_e + d2);
  const double c_skip = d2 / (norm * norm);
  const double c_out = sigma_e * c.data_scale / norm;
  Tensor u = s_t;
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = (s_t[i] - (1.0 - a) * x[i]) / a;
  Tensor u_in = u;
  for (double& v : u_in.values()) v /= norm;
  ad::Var sv = g.input(padded ? reflect_pad(u_in, Tp, Fp) : u_in);
  const ad::Var stacked[] = {cond, sv};
  ad::Var h = ad::concat_channels(g, stacked);
  h = ad::conv2d_3x3(g, h, P("in.conv.w"), P("in.conv.b"));
  h = ad::relu(g, ad::add(g, h, time_bias("in", c.stage_width(0))));

  std::vector<ad::Var> skips;
  for (std::size_t i = 0; i < c.levels; ++i) {
    h = conv_block(h, "enc" + std::to_string(i), c.stage_width(i));
    skips.push_back(h);
    h = ad::downsample2(g, h);
  }

  const std::size_t cm = c.bottleneck_width();
  h = conv_block(h, "mid", cm);
  if (c.attention_active()) {
    const Tensor& hv = g.value(h);
    const std::size_t th = hv.dim(1), fh = hv.dim(2);
    ad::Var grouped = ad::reshape(g, h, {M, cm / M, th, fh});
    ad::Var a = cross_channel_attention(g, P, grouped, c.bottleneck_attention(), "attn_mid.");
    a = ad::reshape(g, a, {(2 * M - 1) * (cm / M), th, fh});
    h = ad::add(g, h, ad::conv2d_1x1(g, a, P("mid.proj.w"), P("mid.proj.b")));
  }

  for (std::size_t i = c.levels; i-- > 0;) {
    h = ad::upsample2(g, h);
    const ad::Var both[] = {h, skips[i]};
    h = ad::concat_channels(g, both);
    h = conv_block(h, "dec" + std::to_string(i), c.stage_width(i));
  }
  h = ad::conv2d_3x3(g, h, P("out.conv.w"), P("out.conv.b"));
  if (padded) h = ad::crop(g, h, T, F);

  // u - h = k(t) (1 - c_skip) u - c_out F with a learned skip gain k(t).
  for (double& v : u.values()) v *= 1.0 - c_skip;
  const ad::Var skip =
      ad::reshape(g, ad::linear(g, e, P("out.skip.w"), P("out.skip.b")), {1, 1, 1});
  ad::Var residual = ad::add(g, ad::mul(g, g.input(std::move(u)), skip), ad::scale(g, h, -c_out));
  return ad::scale(g, residual, -1.0 / (sigma * sigma_e));
}

Tensor ScoreNet::forward(const Tensor& s_t, const Tensor& x, double t) const {
  check_inputs(s_t, x);
  const std::size_t mult = std::size_t{1} << config_.levels;
  const std::size_t T = s_t.dim(1), F = s_t.dim(2);
  if (T % mult || F % mult)
    throw std::invalid_argument(
        "score_net: T=" + std::to_string(T) + " and F=" + std::to_string(F) +
        " must be multiples of " + std::to_string(mult) + "; pad by " +
        std::to_string(round_up(T, mult) - T) + " frames and " +
        std::to_string(round_up(F, mult) - F) + " bins");
  return forward_padded(s_t, x, t);
}

Tensor ScoreNet::forward_padded(const Tensor& s_t, const Tensor& x, double t) const {
  ad::Graph g;
  TracedParams P(g, params_);
  return g.value(trace(g, P, s_t, x, t));
}

// --- checkpoints ------------------------------------------------------------------

void save_checkpoint(const ScoreNet& net, const std::filesystem::path& path,
                     const ConfigEntries& metadata) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes LE host");
  const ScoreNetConfig& c = net.config();
  std::string payload;
  payload.reserve(net.parameter_count() * 4);
  std::ostringstream manifest;
  for (const auto& [name, t] : net.params()) {
    manifest << "tensor " << name << ' ' << shape_text(t.shape()) << ' ' << payload.size() << '\n';
    for (double v : t.values()) {
      const float f = static_cast<float>(v);
      char b[4];
      std::memcpy(b, &f, 4);
      payload.append(b, 4);
    }
  }
  std::ostringstream h;
  h << "amdm-checkpoint\n"
    << "channels = " << c.channels << '\n'
    << "levels = " << c.levels << '\n'
    << "base_width = " << c.base_width << '\n'
    << "attention = " << (c.attention ? "on" : "off") << '\n'
    << "attention_hidden = " << c.attention_hidden << '\n'
    << "time_embedding_dim = " << c.time_embedding_dim << '\n'
    << "norm_groups = " << c.norm_groups << '\n'
    << "data_scale = " << fmt_double(c.data_scale) << '\n'
    << "sde.gamma = " << fmt_double(c.sde.gamma) << '\n'
    << "sde.sigma_min = " << fmt_double(c.sde.sigma_min) << '\n'
    << "sde.sigma_max = " << fmt_double(c.sde.sigma_max) << '\n'
    << "sde.t_eps = " << fmt_double(c.sde.t_eps) << '\n'
    << "sde.n_steps = " << c.sde.n_steps << '\n'
    << "sde.corrector_steps = " << c.sde.corrector_steps << '\n'
    << "sde.corrector_snr = " << fmt_double(c.sde.corrector_snr) << '\n';
  for (const auto& [k, v] : metadata) {
    if (k.empty() || k.find_first_of(" =\n") != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw std::invalid_argument("checkpoint: bad metadata entry '" + k + "'");
    h << "meta." << k << " = " << v << '\n';
  }
  h << "payload_bytes = " << payload.size() << '\n'
    << "payload_crc32 = " << crc32_of(payload.data(), payload.size()) << '\n'
    << manifest.str();
  const std::string header = h.str();

  std::string out = "AMDM";
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  put_u32(out, crc32_of(header.data(), header.size()));
  out += header;
  out += payload;

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("checkpoint: cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  f.flush();
  if (!f) throw std::runtime_error("checkpoint: write failed for " + path.string());
}

namespace {

// Validates magic, version and header checksum; returns the header text after
// the tag line and leaves the whole file in `bytes`.
std::string read_header(const std::filesystem::path& path, std::vector<unsigned char>& bytes,
                        std::uint32_t& header_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) bad_checkpoint(path, "cannot open");
  bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (bytes.size() < 16 || std::memcmp(bytes.data(), "AMDM", 4) != 0)
    bad_checkpoint(path, "bad magic");
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kCheckpointVersion)
    bad_checkpoint(path, "unsupported format version " + std::to_string(version));
  header_len = get_u32(bytes.data() + 8);
  if (16 + static_cast<std::size_t>(header_len) > bytes.size())
    bad_checkpoint(path, "truncated header");
  if (crc32_of(bytes.data() + 16, header_len) != get_u32(bytes.data() + 12))
    bad_checkpoint(path, "header checksum mismatch");
  std::string text(bytes.begin() + 16, bytes.begin() + 16 + header_len);
  const std::string tag = "amdm-checkpoint\n";
  if (!text.starts_with(tag)) bad_checkpoint(path, "missing header tag");
  return text.substr(tag.size());
}

}  // namespace

ConfigEntries read_checkpoint_metadata(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  std::uint32_t header_len = 0;
  std::istringstream header(read_header(path, bytes, header_len));
  ConfigEntries out;
  std::string line;
  while (std::getline(header, line)) {
    if (!line.starts_with("meta.")) continue;
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) bad_checkpoint(path, "bad header line: " + line);
    out.emplace_back(line.substr(5, eq - 5), line.substr(eq + 3));
  }
  return out;
}

ScoreNet load_checkpoint(const std::filesystem::path& path) {
  std::vector<unsigned char> bytes;
  std::uint32_t header_len = 0;
  std::istringstream header(read_header(path, bytes, header_len));
  std::string line;

  std::map<std::string, std::string> kv;
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset;
  };
  std::vector<Entry> manifest;
  while (std::getline(header, line)) {
    if (line.starts_with("tensor ")) {
      std::istringstream ls(line.substr(7));
      Entry e;
      std::string shape;
      if (!(ls >> e.name >> shape >> e.offset)) bad_checkpoint(path, "bad manifest line: " + line);
      std::istringstream ss(shape);
      std::string d;
      while (std::getline(ss, d, ',')) e.shape.push_back(std::stoul(d));
      manifest.push_back(std::move(e));
      continue;
    }
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) bad_checkpoint(path, "bad header line: " + line);
    if (line.starts_with("meta.")) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 3);
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = kv.find(k);
    if (it == kv.end()) bad_checkpoint(path, "header lacks '" + k + "'");
    return it->second;
  };

  ScoreNetConfig c;
  try {
    c.channels = std::stoul(need("channels"));
    c.levels = std::stoul(need("levels"));
    c.base_width = std::stoul(need("base_width"));
    const std::string& att = need("attention");
    if (att != "on" && att != "off") bad_checkpoint(path, "attention flag must be on|off");
    c.attention = att == "on";
    c.attention_hidden = std::stoul(need("attention_hidden"));
    c.time_embedding_dim = std::stoul(need("time_embedding_dim"));
    c.norm_groups = std::stoul(need("norm_groups"));
    c.data_scale = std::stod(need("data_scale"));
    c.sde.gamma = std::stod(need("sde.gamma"));
    c.sde.sigma_min = std::stod(need("sde.sigma_min"));
    c.sde.sigma_max = std::stod(need("sde.sigma_max"));
    c.sde.t_eps = std::stod(need("sde.t_eps"));
    c.sde.n_steps = std::stoul(need("sde.n_steps"));
    c.sde.corrector_steps = std::stoul(need("sde.corrector_steps"));
    c.sde.corrector_snr = std::stod(need("sde.corrector_snr"));
    c.validate();
  } catch (const std::logic_error& e) {
    bad_checkpoint(path, std::string("invalid hyperparameters: ") + e.what());
  }

  const std::size_t payload_bytes = std::stoul(need("payload_bytes"));
  const std::size_t payload_at = 16 + header_len;
  if (bytes.size() != payload_at + payload_bytes)
    bad_checkpoint(path, "payload size " + std::to_string(bytes.size() - payload_at) +
                             " != declared " + std::to_string(payload_bytes));
  if (std::to_string(crc32_of(bytes.data() + payload_at, payload_bytes)) != need("payload_crc32"))
    bad_checkpoint(path, "payload checksum mismatch");

  ParamStore params = parameter_layout(c);
  if (manifest.size() != params.size())
    bad_checkpoint(path, "manifest lists " + std::to_string(manifest.size()) +
                             " tensors, architecture needs " + std::to_string(params.size()));
  std::size_t k = 0;
  for (auto& [name, t] : params) {
    const Entry& e = manifest[k++];
    if (e.name != name || e.shape != t.shape())
      bad_checkpoint(path, "tensor '" + e.name + "' " + to_string(e.shape) +
                               " does not match architecture '" + name + "' " +
                               to_string(t.shape()));
    if (e.offset + t.size() * 4 > payload_bytes) bad_checkpoint(path, "tensor out of bounds");
    for (std::size_t i = 0; i < t.size(); ++i) {
      float f;
      std::memcpy(&f, bytes.data() + payload_at + e.offset + 4 * i, 4);
      t[i] = static_cast<double>(f);
    }
  }
  return ScoreNet(c, std::move(params));
}

ScoreNet load_checkpoint(const std::filesystem::path& path, const ScoreNetConfig& expected) {
  ScoreNet net = load_checkpoint(path);
  const ScoreNetConfig& c = net.config();
  if (c.channels != expected.channels || c.levels != expected.levels ||
      c.base_width != expected.base_width || c.attention != expected.attention ||
      c.attention_hidden != expected.attention_hidden ||
      c.time_embedding_dim != expected.time_embedding_dim || c.norm_groups != expected.norm_groups)
    bad_checkpoint(path, "architecture (channels=" + std::to_string(c.channels) +
                             ", attention=" + (c.attention ? "on" : "off") +
                             ") does not match the requested one (channels=" +
                             std::to_string(expected.channels) +
                             ", attention=" + (expected.attention ? "on" : "off") + ")");
  return net;
}

}  // namespace amdm
