#include <gtest/gtest.h>

#include <cmath>

#include "bnhp/diffkernel.hpp"
#include "helpers.hpp"

using namespace bnhp;
using namespace bnhp::ad;
using testing_util::finite_difference;

namespace {

bool grad_close(const std::vector<double>& a, const std::vector<double>& b) {
  for (std::size_t i = 0; i < a.size(); ++i)
    if (!testing_util::close(a[i], b[i], 1e-6, 1e-4)) return false;
  return true;
}

// Positive-weight tanh net on the scalar tau: widths 1 -> 4 -> 4 -> 1, softplus output.
struct SmallNet {
  std::vector<double> w;  // raw weights and biases, flattened
  static constexpr std::size_t kSizes[] = {4, 4, 16, 4, 4, 1};

  Dual eval(Tape& t, Var params, Dual x) const {
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
      Var v = t.slice(params, off, n);
      off += n;
      return v;
    };
    Dual h = x;
    std::size_t in = 1;
    for (std::size_t layer = 0; layer < 3; ++layer) {
      const std::size_t out = layer == 2 ? 1 : 4;
      Var wl = t.softplus(take(in * out));
      Var bl = take(out);
      h = affine(t, h, wl, bl, out);
      h = apply(t, layer == 2 ? UnaryFn::Softplus : UnaryFn::Tanh, h);
      in = out;
    }
    return h;
  }
};

std::vector<double> random_vector(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = scale * rng.normal();
  return v;
}

}  // namespace

TEST(ForwardTau, Linear) {
  const auto [v, d] = forward_tau([](Tape& t, Dual x) { return add(t, scale(t, x, 3.0), lift(t, t.constant(2.0))); }, 1.5);
  EXPECT_DOUBLE_EQ(v, 6.5);
  EXPECT_DOUBLE_EQ(d, 3.0);
}

TEST(ForwardTau, SoftplusAtZero) {
  const auto [v, d] = forward_tau([](Tape& t, Dual x) { return apply(t, UnaryFn::Softplus, scale(t, x, 2.0)); }, 0.0);
  EXPECT_NEAR(v, std::log(2.0), 1e-15);
  EXPECT_NEAR(d, 1.0, 1e-15);
  const double h = 1e-6;
  const double fd = (softplus(2 * h) - softplus(-2 * h)) / (2 * h);
  EXPECT_NEAR(d, fd, 1e-8);
}

TEST(ForwardTau, ThreeLayerNetMatchesFiniteDifference) {
  const SmallNet net{random_vector(33, 3)};
  Rng rng(4);
  for (int k = 0; k < 20; ++k) {
    const double tau = 3.0 * rng.uniform();
    auto f = [&](Tape& t, Dual x) { return net.eval(t, t.constant(net.w), x); };
    const double d = forward_tau(f, tau).second;
    const double h = 1e-5;
    const double fd = (forward_tau(f, tau + h).first - forward_tau(f, tau - h).first) / (2 * h);
    EXPECT_NEAR(d, fd, 1e-6 * std::max(1.0, std::abs(d))) << "tau " << tau;
  }
}

TEST(GradLoss, SumOfSquares) {
  const std::vector<double> w{1.0, -2.0, 0.5};
  double value = 0.0;
  const auto g = grad_loss([](Tape& t, Var w) { return t.sum(t.square(w)); }, w, &value);
  EXPECT_DOUBLE_EQ(value, 5.25);
  EXPECT_EQ(g, (std::vector<double>{2.0, -4.0, 1.0}));
}

TEST(GradLoss, DeadInputIsExactlyZero) {
  const std::vector<double> w{0.3, 0.7};
  const auto g = grad_loss([](Tape& t, Var w) { return t.tanh(t.slice(w, 0, 1)); }, w);
  EXPECT_EQ(g[1], 0.0);
  EXPECT_NE(g[0], 0.0);
}

TEST(GradLoss, NonFiniteLoss) {
  const std::vector<double> w{-1.0};
  EXPECT_EQ(testing_util::kind_of([&] { grad_loss([](Tape& t, Var w) { return t.log(w); }, w); }),
            ErrorKind::NonFinite);
}

// -log(dPhi/dtau) + Phi on a two-unit net; gradient flows back through the derivative channel.
TEST(GradLoss, LogHazardTermMatchesFiniteDifference) {
  // layout: w1(2) b1(2) w2(2) b2(1)
  auto loss = [](Tape& t, Var w) {
    const double tau = 0.8;
    auto phi = [&](Dual x) {
      Dual h = affine(t, x, t.softplus(t.slice(w, 0, 2)), t.slice(w, 2, 2), 2);
      h = apply(t, UnaryFn::Tanh, h);
      h = affine(t, h, t.softplus(t.slice(w, 4, 2)), t.slice(w, 6, 1), 1);
      return apply(t, UnaryFn::Softplus, h);
    };
    Dual y = phi(Dual{t.constant(tau), t.constant(1.0)});
    return t.add(t.scale(t.log(y.dtau), -1.0), y.value);
  };
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto w = random_vector(7, seed);
    const auto g = grad_loss(loss, w);
    const auto fd = finite_difference([&](const std::vector<double>& x) {
      Tape t;
      return t.scalar(loss(t, t.constant(x)));
    }, w);
    EXPECT_TRUE(grad_close(g, fd)) << "seed " << seed;
  }
}

TEST(GradLoss, Linearity) {
  const auto w = random_vector(5, 8);
  auto l1 = [](Tape& t, Var w) { return t.sum(t.tanh(w)); };
  auto l2 = [](Tape& t, Var w) { return t.sum(t.mul(t.softplus(w), t.exp(t.scale(w, 0.3)))); };
  const auto g1 = grad_loss(l1, w);
  const auto g2 = grad_loss(l2, w);
  const auto g = grad_loss([&](Tape& t, Var w) { return t.add(t.scale(l1(t, w), 2.5), t.scale(l2(t, w), -0.75)); }, w);
  for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(g[i], 2.5 * g1[i] - 0.75 * g2[i], 1e-10);
}

TEST(GradLoss, Deterministic) {
  const SmallNet net{random_vector(33, 12)};
  auto loss = [&](Tape& t, Var w) {
    Dual y = net.eval(t, w, Dual{t.constant(0.4), t.constant(1.0)});
    return t.add(t.log(y.dtau), y.value);
  };
  EXPECT_EQ(grad_loss(loss, net.w), grad_loss(loss, net.w));
}

TEST(GradLoss, EveryPrimitiveMatchesFiniteDifference) {
  struct Case {
    const char* name;
    std::function<Var(Tape&, Var)> f;
    bool positive;
  };
  const std::vector<Case> cases = {
      {"tanh", [](Tape& t, Var w) { return t.tanh(w); }, false},
      {"softplus", [](Tape& t, Var w) { return t.softplus(w); }, false},
      {"sigmoid", [](Tape& t, Var w) { return t.sigmoid(w); }, false},
      {"exp", [](Tape& t, Var w) { return t.exp(w); }, false},
      {"log", [](Tape& t, Var w) { return t.log(w); }, true},
      {"log_floor", [](Tape& t, Var w) { return t.log_floor(w, 1e-12); }, true},
      {"square", [](Tape& t, Var w) { return t.square(w); }, false},
      {"reciprocal", [](Tape& t, Var w) { return t.reciprocal(w); }, true},
      {"relu", [](Tape& t, Var w) { return t.relu(w); }, false},
      {"scale", [](Tape& t, Var w) { return t.scale(w, -1.7); }, false},
      {"shift", [](Tape& t, Var w) { return t.shift(w, 0.4); }, false},
      {"add", [](Tape& t, Var w) { return t.add(t.slice(w, 0, 2), t.slice(w, 2, 2)); }, false},
      {"sub", [](Tape& t, Var w) { return t.sub(t.slice(w, 0, 2), t.slice(w, 2, 2)); }, false},
      {"mul", [](Tape& t, Var w) { return t.mul(t.slice(w, 0, 2), t.slice(w, 2, 2)); }, false},
      {"matvec", [](Tape& t, Var w) { return t.matvec(t.slice(w, 0, 2), t.slice(w, 0, 4), 2); }, false},
      {"concat", [](Tape& t, Var w) { return t.concat(t.exp(t.slice(w, 0, 1)), t.slice(w, 1, 3)); }, false},
      {"broadcast", [](Tape& t, Var w) { return t.mul(t.broadcast(t.slice(w, 3, 1), 4), w); }, false},
  };
  Rng rng(21);
  for (const auto& c : cases) {
    for (int k = 0; k < 100; ++k) {
      std::vector<double> w(4);
      for (double& x : w) {
        x = 2.0 * rng.normal();
        if (c.positive) x = std::abs(x) + 0.05;
        if (std::string(c.name) == "relu" && std::abs(x) < 1e-3) x = 0.5;
      }
      // Random projection weights turn the vector output into a scalar loss.
      std::vector<double> proj(4);
      for (double& x : proj) x = rng.normal();
      auto loss = [&](Tape& t, Var v) {
        Var y = c.f(t, v);
        Var p = t.constant(std::span<const double>(proj.data(), t.size(y)));
        return t.sum(t.mul(y, p));
      };
      const auto g = grad_loss(loss, w);
      const auto fd = finite_difference([&](const std::vector<double>& x) {
        Tape t;
        return t.scalar(loss(t, t.constant(x)));
      }, w);
      ASSERT_TRUE(grad_close(g, fd)) << c.name << " point " << k;
    }
  }
}

TEST(Tape, ShapeMismatch) {
  Tape t;
  Var a = t.constant(std::vector<double>{1, 2});
  Var b = t.constant(std::vector<double>{1, 2, 3});
  EXPECT_EQ(testing_util::kind_of([&] { t.add(a, b); }), ErrorKind::ShapeMismatch);
}

TEST(Softplus, StableForLargeArguments) {
  EXPECT_EQ(softplus(1000.0), 1000.0);
  EXPECT_GT(softplus(-700.0), 0.0);
  EXPECT_NEAR(softplus_inverse(softplus(0.3)), 0.3, 1e-15);
  EXPECT_NEAR(softplus_inverse(1e-20), std::log(1e-20), 1e-9);
}
