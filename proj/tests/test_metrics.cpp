#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "bnhp/baselines.hpp"
#include "bnhp/metrics.hpp"
#include "bnhp/simulate.hpp"
#include "helpers.hpp"

using namespace bnhp;
using testing_util::kind_of;

namespace {

TimePrediction point(double mean, double sigma, std::vector<double> k = {1, 2, 5}) {
  TimePrediction p;
  p.mean = mean;
  p.sigma = sigma;
  p.k_levels = k;
  for (double kk : k) p.bounds.push_back({mean - kk * sigma, mean + kk * sigma});
  return p;
}

}  // namespace

TEST(Mnll, UnitPoissonOnItsOwnData) {
  const auto taus = inter_arrivals(simulate_poisson(1.0, 10000.0, 3)).taus;
  std::vector<double> logd;
  for (double t : taus) logd.push_back(-t);  // log(1 * exp(-t))
  EXPECT_NEAR(mnll(logd), 1.0, 0.05);
}

TEST(Mnll, UnitDensityAndGuard) {
  EXPECT_EQ(mnll(std::vector<double>(5, 0.0)), 0.0);
  EXPECT_EQ(kind_of([] { mnll(std::vector<double>{0.0, -INFINITY}); }), ErrorKind::NonFinite);
  EXPECT_EQ(kind_of([] { mnll(std::vector<double>{}); }), ErrorKind::EmptyData);
}

TEST(Mae, HandValues) {
  EXPECT_EQ(mae(std::vector<double>{1, 3}, std::vector<double>{2, 2}), 1.0);
  EXPECT_EQ(mae(std::vector<double>{1, 3}, std::vector<double>{1, 3}), 0.0);
  EXPECT_EQ(mae(std::vector<double>{101, 103}, std::vector<double>{102, 102}), 1.0);
  EXPECT_EQ(kind_of([] { mae(std::vector<double>{1}, std::vector<double>{1, 2}); }), ErrorKind::LengthMismatch);
}

TEST(Pic, Counting) {
  const std::vector<TimePrediction> p{point(0, 1), point(0, 1), point(0, 1), point(0, 1)};
  EXPECT_EQ(pic_at_k(p, std::vector<double>{0.5, -1.0, 1.5, 3.0}, 1.0), 0.5);
  EXPECT_EQ(pic_at_k(p, std::vector<double>{0.5, -1.0, 1.5, 3.0}, 2.0), 0.75);
  EXPECT_EQ(kind_of([&] { pic_at_k(p, std::vector<double>{0, 0, 0, 0}, 3.0); }), ErrorKind::MissingLevel);
}

TEST(Pic, ZeroSigmaAndHugeK) {
  const std::vector<TimePrediction> flat{point(1, 0), point(2, 0)};
  EXPECT_EQ(pic_at_k(flat, std::vector<double>{1.3, 2.0000001}, 1.0), 0.0);
  const std::vector<TimePrediction> wide{point(1, 0.1, {1e9}), point(2, 0.1, {1e9})};
  EXPECT_EQ(pic_at_k(wide, std::vector<double>{1e6, -1e6}, 1e9), 1.0);
}

TEST(Pic, SpatialNeedsBothCoordinates) {
  const std::vector<TimePrediction> lat{point(0, 1), point(0, 1)};
  const std::vector<TimePrediction> lon{point(0, 1), point(0, 1)};
  // First event: lat inside, lon outside. Second: both inside.
  EXPECT_EQ(pic_at_k_spatial(lat, lon, std::vector<double>{0.5, 0.5}, std::vector<double>{2.0, -0.5}, 1.0), 0.5);
  EXPECT_EQ(pic_at_k_spatial(lat, lon, std::vector<double>{0.5, 0.5}, std::vector<double>{2.0, -0.5}, 2.0), 1.0);
}

TEST(Pil, HandValues) {
  const std::vector<TimePrediction> zero{point(1, 0), point(5, 0)};
  EXPECT_EQ(pil(zero).mean, 0.0);
  EXPECT_EQ(pil(zero).variance, 0.0);
  const std::vector<TimePrediction> p{point(0, 1), point(0, 3)};
  EXPECT_DOUBLE_EQ(pil(p).mean, 4.0);
  EXPECT_DOUBLE_EQ(pil(p).variance, 4.0);
  EXPECT_DOUBLE_EQ(pil(p, 2.0).mean, 8.0);
}

TEST(Quantile, LinearInterpolation) {
  EXPECT_EQ(quantile({4, 1, 3, 2}, 0.0), 1.0);
  EXPECT_EQ(quantile({4, 1, 3, 2}, 1.0), 4.0);
  EXPECT_DOUBLE_EQ(quantile({4, 1, 3, 2}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({10, 20}, 0.25), 12.5);
}

TEST(AvgPil, ConstantSigmaIsFlat) {
  const std::vector<double> ad{0.3, 1.2, 0.1, 2.0, 0.7};
  const std::vector<double> sig(5, 0.4);
  for (const auto& row : avg_pil_quantile(ad, sig, default_quantiles())) EXPECT_DOUBLE_EQ(row.avg_pil, 0.8);
}

TEST(AvgPil, RankAlignedIsNonDecreasing) {
  std::vector<double> ad, sig;
  Rng rng(2);
  for (int i = 0; i < 200; ++i) {
    const double x = rng.exponential(1.0);
    ad.push_back(x);
    sig.push_back(std::sqrt(x) + 0.1);
  }
  const auto table = avg_pil_quantile(ad, sig, default_quantiles());
  ASSERT_EQ(table.size(), 10u);
  for (std::size_t i = 1; i < table.size(); ++i) EXPECT_GE(table[i].avg_pil, table[i - 1].avg_pil);
  double all = 0.0;
  for (double s : sig) all += 2.0 * s;
  EXPECT_NEAR(table.back().avg_pil, all / 200.0, 1e-12);
  EXPECT_EQ(table.back().count, 200u);
  EXPECT_EQ(kind_of([] { avg_pil_quantile(std::vector<double>{1}, std::vector<double>{1, 2}, default_quantiles()); }),
            ErrorKind::LengthMismatch);
}

TEST(Spearman, HandValues) {
  const std::vector<double> x{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{2, 1, 4, 3}), 0.6);
  EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{2, 4, 6, 8}), 1.0);
  EXPECT_DOUBLE_EQ(spearman(x, std::vector<double>{-1, -2, -3, -4}), -1.0);
  EXPECT_EQ(kind_of([&] { spearman(x, std::vector<double>{1, 1, 1, 1}); }), ErrorKind::ZeroVariance);
  EXPECT_EQ(kind_of([&] { spearman(x, std::vector<double>{1, 2}); }), ErrorKind::LengthMismatch);
}

TEST(Spearman, InvariantUnderMonotoneMaps) {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x, y;
    const double a = 0.5 + rng.uniform();
    for (int i = 0; i < 50; ++i) {
      x.push_back(rng.normal());
      y.push_back(std::exp(a * x.back()) + std::atan(x.back()));
    }
    EXPECT_NEAR(spearman(x, y), 1.0, 1e-12);
  }
}

TEST(Spearman, TiesGetAverageRanks) {
  EXPECT_EQ(average_ranks(std::vector<double>{10, 20, 20, 5}), (std::vector<double>{2, 3.5, 3.5, 1}));
}

TEST(Report, JsonRoundTripAndPicMonotone) {
  std::vector<PredictionRecord> recs;
  Rng rng(8);
  for (std::size_t i = 0; i < 50; ++i) {
    PredictionRecord r{"s", i, static_cast<double>(i) + rng.normal(), point(static_cast<double>(i), 0.5 + rng.uniform())};
    r.prediction.log_density = -1.0 - rng.uniform();
    recs.push_back(r);
  }
  const auto rep = evaluate_time(recs, "bnhp");
  EXPECT_EQ(rep.n_events, 50u);
  EXPECT_LE(rep.pic_at(1), rep.pic_at(2));
  EXPECT_LE(rep.pic_at(2), rep.pic_at(5));
  EXPECT_TRUE(std::isfinite(rep.spearman_ad_pil));
  const auto back = MetricsReport::from_json(rep.to_json());
  EXPECT_EQ(back.to_json(), rep.to_json());
  EXPECT_EQ(back.mnll, rep.mnll);
  std::ostringstream table;
  const std::vector<MetricsReport> reps{rep};
  print_table(table, reps);
  EXPECT_NE(table.str().find("bnhp"), std::string::npos);
}

TEST(Report, ConstantSigmaLeavesSpearmanUndefined) {
  std::vector<PredictionRecord> recs;
  for (std::size_t i = 0; i < 10; ++i) recs.push_back({"s", i, i + 0.3 * (1 + i % 3), point(static_cast<double>(i), 0.0)});
  const auto rep = evaluate_time(recs, "shp");
  EXPECT_TRUE(std::isnan(rep.spearman_ad_pil));
  EXPECT_TRUE(std::isnan(rep.mnll));
  EXPECT_EQ(rep.pic_at(1), 0.0);
}

// The generating model scores no worse than a fitted SHP on fresh data.
TEST(Mnll, TrueModelBoundsFittedBaseline) {
  const auto train = simulate_poisson(1.0, 5000.0, 21);
  const auto test = simulate_poisson(1.0, 5000.0, 22);
  const auto fit = shp_fit(train.times(), 5000.0);
  const std::vector<HawkesExpFit> fits{fit};
  const auto recs = hawkes_rolling_predict(fits, test, 0, test.size(), 1.0);
  const auto taus = inter_arrivals(test).taus;
  std::vector<double> diff;
  double mean = 0.0;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    diff.push_back(-recs[i].prediction.log_density - taus[i]);
    mean += diff.back();
  }
  const double n = static_cast<double>(diff.size());
  mean /= n;
  double var = 0.0;
  for (double d : diff) var += (d - mean) * (d - mean);
  const double se = std::sqrt(var / n) / std::sqrt(n);
  // mean = MNLL(SHP) - MNLL(truth)
  EXPECT_GE(mean, -3.0 * se);
}
