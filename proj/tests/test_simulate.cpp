#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "bnhp/simulate.hpp"
#include "helpers.hpp"

using namespace bnhp;
using testing_util::kind_of;

TEST(Poisson, CountNearRateTimesHorizon) {
  const auto seq = simulate_poisson(1.0, 80000.0, 7);
  EXPECT_NEAR(static_cast<double>(seq.size()), 80000.0, 3.0 * std::sqrt(80000.0));
  EXPECT_GT(seq.times().front(), 0.0);
  EXPECT_LE(seq.times().back(), 80000.0);
}

TEST(Poisson, DeterministicAndValidated) {
  EXPECT_EQ(simulate_poisson(2.0, 10000.0, 11).times(), simulate_poisson(2.0, 10000.0, 11).times());
  EXPECT_NE(simulate_poisson(2.0, 100.0, 11).times(), simulate_poisson(2.0, 100.0, 12).times());
  EXPECT_EQ(kind_of([] { simulate_poisson(1.0, 0.0, 1); }), ErrorKind::InvalidParam);
  EXPECT_EQ(kind_of([] { simulate_poisson(0.0, 1.0, 1); }), ErrorKind::InvalidParam);
}

TEST(Poisson, KolmogorovSmirnovAgainstExponential) {
  const double rate = 1.5;
  auto taus = inter_arrivals(simulate_poisson(rate, 10000.0, 5)).taus;
  ASSERT_GE(taus.size(), 10000u);
  std::sort(taus.begin(), taus.end());
  const double n = static_cast<double>(taus.size());
  double d = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    const double cdf = -std::expm1(-rate * taus[i]);
    d = std::max({d, (i + 1) / n - cdf, cdf - i / n});
  }
  // Critical value at significance 0.001: 1.95 / sqrt(n).
  EXPECT_LT(d, 1.95 / std::sqrt(n));
}

TEST(HawkesIntensity, KernelEvaluation) {
  const HawkesParams p;
  const std::vector<double> none;
  EXPECT_EQ(hawkes_intensity(p, none, 3.0), 0.05);
  const std::vector<double> one{0.0};
  const double just_after = std::nextafter(0.0, 1.0);
  EXPECT_NEAR(hawkes_intensity(p, one, just_after), 8.45, 1e-12);
  EXPECT_NEAR(hawkes_intensity(p, one, 1e4), 0.05, 1e-15);
  EXPECT_NEAR(hawkes_intensity(p, one, 0.5), 0.05 + 0.4 * std::exp(-0.5) + 8.0 * std::exp(-10.0), 1e-12);
}

TEST(HawkesParams, Validation) {
  HawkesParams p;
  EXPECT_DOUBLE_EQ(p.stationary_rate(), 0.25);
  p.alphas = {0.5, 0.5};
  EXPECT_EQ(kind_of([&] { p.validate(); }), ErrorKind::NonStationary);
  EXPECT_EQ(kind_of([&] { simulate_hawkes(p, 10.0, 1); }), ErrorKind::NonStationary);
  p.alphas = {0.1};
  EXPECT_EQ(kind_of([&] { p.validate(); }), ErrorKind::InvalidParam);
  p = HawkesParams{};
  p.mu = 0.0;
  EXPECT_EQ(kind_of([&] { p.validate(); }), ErrorKind::InvalidParam);
}

TEST(Hawkes, LongRunRateMatchesStationaryRate) {
  const HawkesParams p;
  double total = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto seq = simulate_hawkes(p, 40000.0, seed);
    EXPECT_LE(seq.times().back(), 40000.0);
    total += static_cast<double>(seq.size());
  }
  // Single runs are overdispersed (count sd about 500 at branching ratio 0.8); the average is not.
  EXPECT_NEAR(total / 10.0, 10000.0, 1000.0);
}

TEST(Hawkes, Deterministic) {
  const HawkesParams p;
  EXPECT_EQ(simulate_hawkes(p, 2000.0, 3).times(), simulate_hawkes(p, 2000.0, 3).times());
}

TEST(Hawkes, ZeroExcitationIsPoisson) {
  HawkesParams p;
  p.mu = 0.5;
  p.alphas = {0.0, 0.0};
  const auto taus = inter_arrivals(simulate_hawkes(p, 40000.0, 9)).taus;
  const double n = static_cast<double>(taus.size());
  double mean = 0.0;
  for (double t : taus) mean += t;
  mean /= n;
  // Exponential: standard deviation equals the mean.
  EXPECT_NEAR(mean, 2.0, 3.0 * 2.0 / std::sqrt(n));
}

TEST(Hawkes, ZeroExcitationCountsMatchPoissonCounts) {
  HawkesParams p;
  p.mu = 1.0;
  p.alphas = {0.0, 0.0};
  const int runs = 50;
  auto moments = [&](auto&& sim) {
    double s = 0.0, s2 = 0.0;
    for (int r = 0; r < runs; ++r) {
      const double c = static_cast<double>(sim(static_cast<std::uint64_t>(r + 100)).size());
      s += c;
      s2 += c * c;
    }
    const double m = s / runs;
    return std::pair{m, s2 / runs - m * m};
  };
  const auto [mh, vh] = moments([&](std::uint64_t s) { return simulate_hawkes(p, 500.0, s); });
  const auto [mp, vp] = moments([&](std::uint64_t s) { return simulate_poisson(1.0, 500.0, s); });
  const double se = std::sqrt((vh + vp) / runs);
  EXPECT_NEAR(mh, mp, 3.0 * se);
  EXPECT_NEAR(mh, 500.0, 3.0 * std::sqrt(500.0 / runs));
}

TEST(RandomWalk, StepsAreGaussian) {
  const auto base = simulate_poisson(1.0, 5000.0, 2);
  const auto walked = with_random_walk(base, {40.7, -74.0}, 0.05, 4);
  ASSERT_TRUE(walked.has_locations());
  EXPECT_EQ(walked.times(), base.times());
  const auto& locs = *walked.locations();
  double s2 = 0.0;
  Location prev{40.7, -74.0};
  for (const auto& l : locs) {
    s2 += (l.lat - prev.lat) * (l.lat - prev.lat);
    prev = l;
  }
  EXPECT_NEAR(std::sqrt(s2 / locs.size()), 0.05, 0.003);
  EXPECT_EQ(with_random_walk(base, {0, 0}, 0.05, 4).locations(), with_random_walk(base, {0, 0}, 0.05, 4).locations());
  EXPECT_EQ(kind_of([&] { with_random_walk(base, {0, 0}, -1.0, 4); }), ErrorKind::InvalidParam);
}
