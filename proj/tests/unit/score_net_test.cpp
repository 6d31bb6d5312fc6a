#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <iterator>
#include <map>

#include "amdm/score_net.hpp"
#include "test_support.hpp"

using namespace amdm;
using amdm::testing::check_gradients;
using amdm::testing::ScratchDir;

namespace {

ScoreNetConfig small(std::size_t M, bool attention = true) {
  ScoreNetConfig c;
  c.channels = M;
  c.levels = 2;
  c.base_width = 8;
  c.attention = attention;
  c.attention_hidden = 4;
  c.time_embedding_dim = 16;
  c.norm_groups = 2;
  c.data_scale = 1.3;
  return c;
}

struct Inputs {
  Tensor s_t, x;
};

Inputs inputs(std::size_t M, std::size_t T, std::size_t F, std::uint64_t seed) {
  Rng rng(seed);
  return {normal_tensor(rng, {2, T, F}), normal_tensor(rng, {M, 2, T, F})};
}

// Every parameter drawn from N(0, 0.3^2), zero-initialized ones included.
ScoreNet randomized(const ScoreNetConfig& c, std::uint64_t seed) {
  Rng rng(seed);
  ScoreNet net = ScoreNet::init(c, rng);
  for (auto& [name, t] : net.params()) fill_normal(rng, t.values(), 0.3);
  return net;
}

std::vector<char> bytes_of(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(ScoreNet, OutputShapeForEachChannelCount) {
  for (std::size_t M : {1u, 2u, 4u}) {
    Rng rng(M);
    const ScoreNet net = ScoreNet::init(small(M), rng);
    const Inputs in = inputs(M, 8, 12, 10 + M);
    EXPECT_EQ(net.forward(in.s_t, in.x, 0.5).shape(), (Shape{2, 8, 12})) << "M=" << M;
    const Inputs odd = inputs(M, 7, 9, 20 + M);
    EXPECT_EQ(net.forward_padded(odd.s_t, odd.x, 0.5).shape(), (Shape{2, 7, 9})) << "M=" << M;
  }
}

TEST(ScoreNet, InputPlaneCounts) {
  EXPECT_EQ(small(1).input_planes(), 4u);             // x_ref + s_t
  EXPECT_EQ(small(4, false).input_planes(), 2u * 4 + 2);  // plain concatenation
  EXPECT_EQ(small(4, true).input_planes(), 2u * 7 + 2);   // 2M - 1 attention outputs
  EXPECT_FALSE(small(1, true).attention_active());
}

TEST(ScoreNet, FreshAndZeroParametersGiveZeroScore) {
  Rng rng(1);
  const ScoreNet fresh = ScoreNet::init(small(2), rng);
  ScoreNet zero = fresh;
  for (auto& [name, t] : zero.params()) t.fill(0.0);
  const Inputs in = inputs(2, 8, 8, 2);
  for (const ScoreNet* net : std::initializer_list<const ScoreNet*>{&fresh, &zero})
    for (double t : {0.03, 0.5, 1.0}) {
      const Tensor y = net->forward(in.s_t, in.x, t);
      for (double v : y.values()) ASSERT_EQ(v, 0.0);
    }
}

TEST(ScoreNet, IndivisibleDimsRejectedWithPadding) {
  Rng rng(3);
  const ScoreNet net = ScoreNet::init(small(2), rng);
  const Inputs in = inputs(2, 6, 9, 4);
  try {
    net.forward(in.s_t, in.x, 0.5);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("pad by 2 frames and 3 bins"), std::string::npos) << e.what();
  }
  EXPECT_THROW(net.forward(in.s_t, Tensor({3, 2, 6, 9}), 0.5), std::invalid_argument);
}

TEST(ScoreNet, ReflectPadMirrorsEdges) {
  const Tensor t({1, 2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor p = reflect_pad(t, 4, 5);
  EXPECT_EQ(p.shape(), (Shape{1, 4, 5}));
  EXPECT_EQ(p.at({0, 0, 3}), 2.0);
  EXPECT_EQ(p.at({0, 0, 4}), 1.0);
  EXPECT_EQ(p.at({0, 2, 0}), 1.0);
  EXPECT_EQ(p.at({0, 3, 4}), 4.0);
}

TEST(ScoreNet, GradientOfMeanSquaredOutputOnTwentyParameters) {
  const ScoreNet net = randomized(small(2), 5);
  const Inputs in = inputs(2, 8, 8, 6);
  for (double t : {0.1, 0.8}) {
    auto build = [&](ad::Graph& g, TracedParams& P) {
      const ad::Var y = net.trace(g, P, in.s_t, in.x, t);
      return ad::scale(g, ad::mul(g, y, y), 1.0 / 128.0);
    };
    const auto r = check_gradients(net.params(), build, 7, 20);
    EXPECT_EQ(r.checked, 20u);
    EXPECT_LT(r.rel_error, 1e-5) << "t=" << t;
  }
}

TEST(ScoreNet, EndToEndGradientThroughAllStages) {
  for (bool attention : {true, false}) {
    const ScoreNet net = randomized(small(2, attention), 8);
    const Inputs in = inputs(2, 16, 16, 9);
    auto build = [&](ad::Graph& g, TracedParams& P) { return net.trace(g, P, in.s_t, in.x, 0.4); };
    const auto r = check_gradients(net.params(), build, 11, 60);
    EXPECT_LT(r.rel_error, 1e-5) << "attention=" << attention;
  }
}

TEST(ScoreNet, InitIsDeterministicWithHeScaling) {
  const ScoreNetConfig c = small(4);
  Rng a(12), b(12);
  EXPECT_EQ(ScoreNet::init(c, a).params(), ScoreNet::init(c, b).params());

  // Pool each weight tensor over enough seeds for 10^4 samples.
  std::map<std::string, std::vector<double>> samples;
  std::map<std::string, std::size_t> fan_in;
  for (std::uint64_t seed = 0; seed < 5000; ++seed) {
    Rng rng(100 + seed);
    const ScoreNet net = ScoreNet::init(c, rng);
    bool more = false;
    for (const auto& [name, t] : net.params()) {
      if (t.rank() < 2 || !name.ends_with(".w") || name.starts_with("out.") ||
          name.find(".tscale.") != std::string::npos)
        continue;
      auto& s = samples[name];
      if (s.size() >= 10000) continue;
      fan_in[name] = t.size() / t.dim(0);
      s.insert(s.end(), t.values().begin(), t.values().end());
      more = more || s.size() < 10000;
    }
    if (!more) break;
  }
  ASSERT_FALSE(samples.empty());
  for (const auto& [name, s] : samples) {
    ASSERT_GE(s.size(), 10000u) << name;
    double sq = 0.0;
    for (double v : s) sq += v * v;
    const double want = std::sqrt(2.0 / double(fan_in[name]));
    EXPECT_NEAR(std::sqrt(sq / double(s.size())) / want, 1.0, 0.1) << name;
  }
}

TEST(ScoreNet, BiasesAndOutputStartAtZero) {
  Rng rng(13);
  const ScoreNet net = ScoreNet::init(small(2), rng);
  for (const auto& [name, t] : net.params()) {
    const bool zero = name.ends_with(".b") || name.starts_with("out.") ||
                      name.find(".tscale.") != std::string::npos;
    if (!zero) continue;
    for (double v : t.values()) ASSERT_EQ(v, 0.0) << name;
  }
}

TEST(ScoreNet, ParameterCountDependsOnlyOnArchitecture) {
  ScoreNetConfig c;
  Rng a(1), b(2);
  EXPECT_EQ(ScoreNet::init(c, a).parameter_count(), ScoreNet::init(c, b).parameter_count());
  EXPECT_EQ(parameter_layout(c).element_count(), ScoreNet::init(c, a).parameter_count());
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  ScratchDir dir("ckpt");
  const ScoreNet net = randomized(small(2), 14);
  save_checkpoint(net, dir / "a.ckpt", {{"note", "x"}});
  const ScoreNet back = load_checkpoint(dir / "a.ckpt");
  save_checkpoint(back, dir / "b.ckpt", read_checkpoint_metadata(dir / "a.ckpt"));
  EXPECT_EQ(bytes_of(dir / "a.ckpt"), bytes_of(dir / "b.ckpt"));
  EXPECT_EQ(back.config(), net.config());
  const auto meta = read_checkpoint_metadata(dir / "a.ckpt");
  ASSERT_EQ(meta.size(), 1u);
  EXPECT_EQ(meta[0].second, "x");
  EXPECT_EQ(std::string(bytes_of(dir / "a.ckpt").data(), 4), "AMDM");
  EXPECT_THROW(save_checkpoint(net, dir / "f.ckpt", {{"bad key", "x"}}), std::invalid_argument);
}

TEST(Checkpoint, ForwardAgreesAfterRoundTrip) {
  ScratchDir dir("ckpt");
  const ScoreNet net = randomized(small(2), 15);
  save_checkpoint(net, dir / "c.ckpt");
  const ScoreNet back = load_checkpoint(dir / "c.ckpt");
  const Inputs in = inputs(2, 8, 8, 16);
  const Tensor a = net.forward(in.s_t, in.x, 0.6), b = back.forward(in.s_t, in.x, 0.6);
  EXPECT_LT(std::sqrt((a - b).squared_norm() / a.squared_norm()), 1e-6);
  for (const auto& [name, t] : back.params())
    for (std::size_t i = 0; i < t.size(); ++i)
      ASSERT_EQ(t[i], double(float(net.params().get(name)[i])));
}

TEST(Checkpoint, CorruptedBytesRejected) {
  ScratchDir dir("ckpt");
  const ScoreNet net = randomized(small(2), 17);
  save_checkpoint(net, dir / "d.ckpt");
  const auto good = bytes_of(dir / "d.ckpt");
  for (std::size_t pos : {std::size_t{0}, std::size_t{5}, std::size_t{20}, std::size_t{40},
                          good.size() - 3}) {
    auto bad = good;
    bad[pos] ^= 0x5A;
    {
      std::ofstream f(dir / "bad.ckpt", std::ios::binary);
      f.write(bad.data(), static_cast<std::streamsize>(bad.size()));
    }
    EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), std::runtime_error) << "byte " << pos;
  }
  {
    std::ofstream f(dir / "short.ckpt", std::ios::binary);
    f.write(good.data(), 30);
  }
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), std::runtime_error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
}

TEST(Checkpoint, ArchitectureMismatchRejected) {
  ScratchDir dir("ckpt");
  Rng rng(18);
  save_checkpoint(ScoreNet::init(small(2), rng), dir / "e.ckpt");
  EXPECT_NO_THROW(load_checkpoint(dir / "e.ckpt", small(2)));
  EXPECT_THROW(load_checkpoint(dir / "e.ckpt", small(4)), std::runtime_error);
  EXPECT_THROW(load_checkpoint(dir / "e.ckpt", small(2, false)), std::runtime_error);
  ParamStore wrong = parameter_layout(small(4));
  EXPECT_THROW(ScoreNet(small(2), wrong), std::invalid_argument);
}
