#include <gtest/gtest.h>

#include <cmath>

#include "amdm/autodiff.hpp"
#include "amdm/params.hpp"
#include "primitive_cases.hpp"
#include "test_support.hpp"

using namespace amdm;
using amdm::testing::check_gradients;
using amdm::testing::PrimitiveCase;
using amdm::testing::primitive_cases;
using amdm::testing::random;
using amdm::testing::away_from_zero;

namespace {

// Direct zero-padded 3x3 convolution.
Tensor conv3x3_loops(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t ci = x.dim(0), H = x.dim(1), W = x.dim(2), co = w.dim(0);
  Tensor y({co, H, W});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t r = 0; r < H; ++r)
      for (std::size_t c = 0; c < W; ++c) {
        double s = b[o];
        for (std::size_t i = 0; i < ci; ++i)
          for (int ky = 0; ky < 3; ++ky)
            for (int kx = 0; kx < 3; ++kx) {
              const long rr = static_cast<long>(r) + ky - 1, cc = static_cast<long>(c) + kx - 1;
              if (rr < 0 || cc < 0 || rr >= static_cast<long>(H) || cc >= static_cast<long>(W)) continue;
              s += w.at({o, i, static_cast<std::size_t>(ky), static_cast<std::size_t>(kx)}) *
                   x.at({i, static_cast<std::size_t>(rr), static_cast<std::size_t>(cc)});
            }
        y.at({o, r, c}) = s;
      }
  return y;
}

Tensor eval(const std::function<ad::Var(ad::Graph&)>& f) {
  ad::Graph g;
  return g.value(f(g));
}

}  // namespace

TEST(Primitives, ReluOnSmallVector) {
  const Tensor y = eval([](ad::Graph& g) { return ad::relu(g, g.input(Tensor({3}, {-1, 0, 2}))); });
  EXPECT_EQ(y.storage(), (std::vector<double>{0, 0, 2}));
}

TEST(Primitives, SigmoidOfZeroIsHalf) {
  const Tensor y = eval([](ad::Graph& g) { return ad::sigmoid(g, g.input(Tensor({2, 3}))); });
  for (double v : y.values()) EXPECT_EQ(v, 0.5);
}

TEST(Primitives, SigmoidGradientAtZero) {
  ad::Graph g;
  const ad::Var x = g.input(Tensor({1}), true);
  const ad::Var y = ad::sigmoid(g, x);
  const ad::Gradients gr = g.backward(y, Tensor({1}, 1.0));
  EXPECT_DOUBLE_EQ(gr.wrt(x)[0], 0.25);
}

TEST(Primitives, ReluGradientInFlatRegion) {
  ad::Graph g;
  const ad::Var x = g.input(Tensor({1}, -1.0), true);
  const ad::Gradients gr = g.backward(ad::relu(g, x), Tensor({1}, 1.0));
  EXPECT_EQ(gr.wrt(x)[0], 0.0);
}

TEST(Primitives, AvgPoolMatchesRowMeans) {
  Rng rng(3);
  const Tensor x = random(rng, {2, 4, 3});
  const Tensor y = eval([&](ad::Graph& g) { return ad::avg_pool_axis(g, g.input(x), 1); });
  ASSERT_EQ(y.shape(), (Shape{2, 1, 3}));
  for (std::size_t a = 0; a < 2; ++a)
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0.0;
      for (std::size_t r = 0; r < 4; ++r) s += x.at({a, r, c});
      EXPECT_NEAR(y.at({a, 0, c}), s / 4.0, 1e-15);
    }
}

TEST(Primitives, Conv3x3MatchesDirectLoops) {
  Rng rng(4);
  const Tensor x = random(rng, {3, 5, 6}), w = random(rng, {4, 3, 3, 3}), b = random(rng, {4});
  const Tensor y = eval([&](ad::Graph& g) {
    return ad::conv2d_3x3(g, g.input(x), g.input(w), g.input(b));
  });
  const Tensor ref = conv3x3_loops(x, w, b);
  ASSERT_EQ(y.shape(), ref.shape());
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-13);
}

TEST(Primitives, Conv1x1MatchesDirectLoops) {
  Rng rng(5);
  const Tensor x = random(rng, {3, 2, 4}), w = random(rng, {2, 3}), b = random(rng, {2});
  const Tensor y = eval([&](ad::Graph& g) {
    return ad::conv2d_1x1(g, g.input(x), g.input(w), g.input(b));
  });
  ASSERT_EQ(y.shape(), (Shape{2, 2, 4}));
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t p = 0; p < 8; ++p) {
      double s = b[o];
      for (std::size_t i = 0; i < 3; ++i) s += w.at({o, i}) * x[i * 8 + p];
      EXPECT_NEAR(y[o * 8 + p], s, 1e-14);
    }
}

TEST(Primitives, GroupNormMatchesScalarStatistics) {
  Rng rng(6);
  const Tensor x = random(rng, {4, 3, 2}), gamma = random(rng, {4}), beta = random(rng, {4});
  const Tensor y = eval([&](ad::Graph& g) {
    return ad::group_norm(g, g.input(x), g.input(gamma), g.input(beta), 2);
  });
  for (std::size_t grp = 0; grp < 2; ++grp) {
    double mean = 0.0, var = 0.0;
    for (std::size_t i = 0; i < 12; ++i) mean += x[grp * 12 + i];
    mean /= 12.0;
    for (std::size_t i = 0; i < 12; ++i) var += (x[grp * 12 + i] - mean) * (x[grp * 12 + i] - mean);
    var /= 12.0;
    for (std::size_t i = 0; i < 12; ++i) {
      const std::size_t c = grp * 2 + i / 6;
      const double ref = gamma[c] * (x[grp * 12 + i] - mean) / std::sqrt(var + 1e-6) + beta[c];
      EXPECT_NEAR(y[grp * 12 + i], ref, 1e-13);
    }
  }
}

TEST(Primitives, ConcatSumsChannels) {
  const Tensor y = eval([](ad::Graph& g) {
    const ad::Var parts[] = {g.input(Tensor({2, 3, 4})), g.input(Tensor({5, 3, 4}))};
    return ad::concat_channels(g, parts);
  });
  EXPECT_EQ(y.shape(), (Shape{7, 3, 4}));
}

TEST(Primitives, ShapeErrorsNameThePrimitive) {
  ad::Graph g;
  const ad::Var x = g.input(Tensor({2, 4, 4}));
  const ad::Var w = g.input(Tensor({3, 5, 3, 3}));
  const ad::Var b = g.input(Tensor({3}));
  try {
    ad::conv2d_3x3(g, x, w, b);
    FAIL() << "expected a shape error";
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("conv2d_3x3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("[3, 5, 3, 3]"), std::string::npos) << e.what();
  }
  EXPECT_THROW(ad::add(g, g.input(Tensor({2, 3})), g.input(Tensor({3, 2}))), std::invalid_argument);
  EXPECT_THROW(ad::avg_pool_axis(g, x, 3), std::invalid_argument);
}

TEST(Backward, SecondCallRejected) {
  ad::Graph g;
  const ad::Var y = ad::relu(g, g.param("p", Tensor({2}, 1.0)));
  g.backward(y, Tensor({2}, 1.0));
  EXPECT_THROW(g.backward(y, Tensor({2}, 1.0)), std::logic_error);
}

TEST(Backward, SeedShapeMustMatch) {
  ad::Graph g;
  const ad::Var y = ad::relu(g, g.param("p", Tensor({2}, 1.0)));
  EXPECT_THROW(g.backward(y, Tensor({3}, 1.0)), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Finite-difference checks, one per primitive.

class PrimitiveGradient : public ::testing::TestWithParam<int> {};

TEST_P(PrimitiveGradient, MatchesCentralDifferences) {
  const PrimitiveCase c = primitive_cases()[static_cast<std::size_t>(GetParam())];
  Rng rng(100 + static_cast<std::uint64_t>(GetParam()));
  ParamStore store;
  c.setup(store, rng);
  const auto r = check_gradients(store, c.build, 7);
  EXPECT_LT(r.rel_error, 1e-6) << c.name;
  EXPECT_GT(r.checked, 0u);
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, PrimitiveGradient,
                         ::testing::Range(0, static_cast<int>(primitive_cases().size())));

// Random 3-deep compositions of shape-preserving primitives.
TEST(Backward, ComposedGraphsMatchCentralDifferences) {
  for (std::uint64_t trial = 0; trial < 12; ++trial) {
    Rng rng(500 + trial);
    ParamStore store;
    store.add("x", random(rng, {2, 4, 4}));
    store.add("w1", random(rng, {2, 2, 3, 3}));
    store.add("b1", random(rng, {2}));
    store.add("w2", random(rng, {2, 2}));
    store.add("b2", random(rng, {2}));
    store.add("gamma", random(rng, {2}));
    store.add("beta", random(rng, {2}));
    std::vector<int> ops;
    for (int k = 0; k < 3; ++k) ops.push_back(static_cast<int>(rng() % 6));
    auto build = [ops](ad::Graph& g, TracedParams& P) {
      ad::Var h = P("x");
      for (int op : ops) {
        switch (op) {
          case 0: h = ad::conv2d_3x3(g, h, P("w1"), P("b1")); break;
          case 1: h = ad::conv2d_1x1(g, h, P("w2"), P("b2")); break;
          case 2: h = ad::sigmoid(g, h); break;
          case 3: h = ad::group_norm(g, h, P("gamma"), P("beta"), 1); break;
          case 4: h = ad::mul(g, h, ad::avg_pool_axis(g, h, 2)); break;
          default: h = ad::add(g, h, ad::scale(g, h, 0.3)); break;
        }
      }
      return h;
    };
    const auto r = check_gradients(store, build, 9 + trial);
    EXPECT_LT(r.rel_error, 1e-6) << "trial " << trial;
  }
}

TEST(Backward, LinearInTheSeed) {
  Rng rng(8);
  ParamStore store;
  store.add("x", random(rng, {2, 3, 3}));
  store.add("w", random(rng, {2, 2, 3, 3}));
  store.add("b", random(rng, {2}));
  auto run = [&](const Tensor& seed) {
    ad::Graph g;
    TracedParams P(g, store);
    const ad::Var y = ad::sigmoid(g, ad::conv2d_3x3(g, P("x"), P("w"), P("b")));
    return g.backward(y, seed);
  };
  const Tensor s1 = normal_tensor(rng, {2, 3, 3}), s2 = normal_tensor(rng, {2, 3, 3});
  const double a = 0.7, b = -1.3;
  const auto g1 = run(s1), g2 = run(s2), g12 = run(a * s1 + b * s2);
  for (const auto& [name, t] : store) {
    (void)t;
    const Tensor& x = g12[name];
    for (std::size_t i = 0; i < x.size(); ++i)
      EXPECT_NEAR(x[i], a * g1[name][i] + b * g2[name][i], 1e-12) << name;
  }
}

TEST(Backward, RepeatedTracesAreBitIdentical) {
  Rng rng(9);
  ParamStore store;
  store.add("x", random(rng, {2, 4, 4}));
  store.add("w", random(rng, {2, 2, 3, 3}));
  store.add("b", random(rng, {2}));
  const Tensor seed = normal_tensor(rng, {2, 2, 2});
  auto run = [&] {
    ad::Graph g;
    TracedParams P(g, store);
    const ad::Var y = ad::downsample2(g, ad::relu(g, ad::conv2d_3x3(g, P("x"), P("w"), P("b"))));
    Tensor out = g.value(y);
    return std::make_pair(out, g.backward(y, seed));
  };
  const auto [y1, g1] = run();
  const auto [y2, g2] = run();
  EXPECT_EQ(y1, y2);
  for (const auto& [name, t] : g1.params()) EXPECT_EQ(t, g2[name]) << name;
}
