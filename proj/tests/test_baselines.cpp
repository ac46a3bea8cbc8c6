#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>

#include "bnhp/baselines.hpp"
#include "bnhp/simulate.hpp"
#include "helpers.hpp"

using namespace bnhp;
using testing_util::kind_of;

namespace {

// Composite Simpson on [a, b] with n (even) panels.
double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  const double h = (b - a) / n;
  double s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

// Intensity at t from the events strictly before t (left limit at an event time).
double intensity(const ExpHawkes& p, std::span<const double> times, double t, bool include_t = false) {
  double v = p.mu;
  for (double tj : times) {
    if (tj > t || (tj == t && !include_t)) break;
    v += p.alpha * p.beta * std::exp(-p.beta * (t - tj));
  }
  return v;
}

// Integral of g(lambda(t)) over [0, T], split at the events so each piece is smooth.
// On a piece (a, b] the events up to and including a are active.
double integrate_pieces(const ExpHawkes& p, std::span<const double> times, double T,
                        const std::function<double(double)>& g) {
  double total = 0.0;
  double a = 0.0;
  std::vector<double> cuts(times.begin(), times.end());
  cuts.push_back(T);
  for (double b : cuts) {
    if (b > a) {
      const auto active = std::upper_bound(times.begin(), times.end(), a) - times.begin();
      const auto past = times.first(static_cast<std::size_t>(active));
      total += simpson([&](double t) { return g(intensity(p, past, t, true)); }, a, b);
    }
    a = b;
  }
  return total;
}

}  // namespace

TEST(ShpLoglik, ZeroExcitationIsPoisson) {
  const auto seq = testing_util::poisson_events(100, 1);
  const double T = seq.times().back() + 1.0;
  const ExpHawkes p{0.8, 0.0, 3.0};
  EXPECT_NEAR(shp_loglik(p, seq.times(), T), 100.0 * std::log(0.8) - 0.8 * T, 1e-9);
}

TEST(ShpLoglik, TwoEventsAgainstQuadrature) {
  const std::vector<double> t{1.0, 2.0};
  const ExpHawkes p{1.0, 0.5, 1.0};
  const double expected = std::log(intensity(p, t, 1.0)) + std::log(intensity(p, t, 2.0)) -
                          integrate_pieces(p, t, 3.0, [](double l) { return l; });
  EXPECT_NEAR(shp_loglik(p, t, 3.0), expected, 1e-9);
  // log(1) + log(1 + 0.5 e^-1) - (3 + 0.5 (1 - e^-2) + 0.5 (1 - e^-1))
  EXPECT_NEAR(shp_loglik(p, t, 3.0),
              std::log(1.0 + 0.5 * std::exp(-1.0)) - 3.0 - 0.5 * (1 - std::exp(-2.0)) - 0.5 * (1 - std::exp(-1.0)),
              1e-12);
}

TEST(ShpLoglik, RecursionMatchesDirectSum) {
  HawkesParams hp;
  hp.mu = 0.3;
  hp.alphas = {0.6};
  hp.betas = {2.0};
  const auto seq = simulate_hawkes(hp, 400.0, 3);
  const std::vector<double> t(seq.times().begin(), seq.times().begin() + std::min<std::size_t>(200, seq.size()));
  for (const ExpHawkes p : {ExpHawkes{0.3, 0.6, 2.0}, ExpHawkes{1.1, 0.2, 0.1}, ExpHawkes{0.05, 0.9, 30.0}}) {
    EXPECT_NEAR(shp_loglik(p, t, t.back()), shp_loglik_direct(p, t, t.back()), 1e-10);
    EXPECT_NEAR(shp_loglik(p, t, t.back() + 5.0), shp_loglik_direct(p, t, t.back() + 5.0), 1e-10);
  }
}

TEST(ShpLoglik, GradientMatchesFiniteDifference) {
  const auto seq = testing_util::poisson_events(150, 2);
  const double T = seq.times().back();
  const ExpHawkes p{0.7, 0.3, 1.7};
  const auto g = shp_gradient(p, seq.times(), T);
  const auto fd = testing_util::finite_difference([&](const std::vector<double>& x) {
    return shp_loglik({x[0], x[1], x[2]}, seq.times(), T);
  }, {p.mu, p.alpha, p.beta});
  for (int i = 0; i < 3; ++i) EXPECT_TRUE(testing_util::close(g[i], fd[i], 1e-6, 1e-6)) << i;
}

TEST(ShpLoglik, InvalidParams) {
  const std::vector<double> t{1.0};
  EXPECT_EQ(kind_of([&] { shp_loglik({0.0, 0.1, 1.0}, t, 2.0); }), ErrorKind::InvalidParam);
  EXPECT_EQ(kind_of([&] { shp_loglik({1.0, 1.0, 1.0}, t, 2.0); }), ErrorKind::InvalidParam);
  EXPECT_EQ(kind_of([&] { shp_loglik({1.0, 0.1, -1.0}, t, 2.0); }), ErrorKind::InvalidParam);
}

TEST(ShpFit, RecoversSimulatedParameters) {
  HawkesParams hp;
  hp.mu = 0.2;
  hp.alphas = {0.5};
  hp.betas = {1.0};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto seq = simulate_hawkes(hp, 50000.0, seed);
    const auto fit = shp_fit(seq.times(), 50000.0);
    EXPECT_TRUE(fit.converged) << "seed " << seed;
    EXPECT_NEAR(fit.params.mu, 0.2, 0.15 * 0.2) << "seed " << seed;
    EXPECT_NEAR(fit.params.alpha, 0.5, 0.15 * 0.5) << "seed " << seed;
    EXPECT_NEAR(fit.params.beta, 1.0, 0.15) << "seed " << seed;
    EXPECT_NEAR(fit.nll, -shp_loglik(fit.params, seq.times(), 50000.0), 1e-6 * std::abs(fit.nll));
  }
}

TEST(ShpFit, PoissonDataHasSmallExcitation) {
  const auto seq = simulate_poisson(1.0, 5000.0, 4);
  const auto fit = shp_fit(seq.times(), 5000.0);
  EXPECT_LT(fit.params.alpha, 0.05);
  EXPECT_NEAR(fit.params.mu, 1.0, 0.1);
}

TEST(ShpFit, TooFewEvents) {
  const auto seq = testing_util::poisson_events(10, 1);
  EXPECT_EQ(kind_of([&] { shp_fit(seq.times(), seq.times().back()); }), ErrorKind::TooShort);
}

TEST(EhFit, PoissonMembers) {
  const auto seq = simulate_poisson(1.0, 3000.0, 6);
  const Observation obs{seq.times(), 3000.0};
  const auto fits = eh_fit(std::span(&obs, 1), EnsembleConfig::log_spaced());
  ASSERT_EQ(fits.size(), 10u);
  for (const auto& f : fits) {
    EXPECT_NEAR(f.params.mu, 1.0, 0.1);
    EXPECT_LT(f.params.alpha, 0.05);
    EXPECT_GE(f.params.alpha, 0.0);
  }
  EXPECT_NEAR(fits.front().params.beta, 0.001, 1e-15);
  EXPECT_NEAR(fits.back().params.beta, 0.1, 1e-15);
}

TEST(EhFit, RiskMatchesQuadrature) {
  HawkesParams hp;
  hp.mu = 0.5;
  hp.alphas = {0.5};
  hp.betas = {1.0};
  const auto seq = simulate_hawkes(hp, 1000.0, 8);
  const std::vector<double> t(seq.times().begin(), seq.times().begin() + 100);
  const double T = t.back() + 2.0;
  const Observation obs{t, T};
  for (const ExpHawkes p : {ExpHawkes{0.4, 0.3, 0.5}, ExpHawkes{0.9, 0.05, 0.01}}) {
    double sum = 0.0;
    for (double ti : t) sum += intensity(p, t, ti);
    const double quad = integrate_pieces(p, t, T, [](double l) { return l * l; }) - 2.0 * sum;
    EXPECT_NEAR(eh_risk(p, std::span(&obs, 1)), quad, 1e-6 * std::abs(quad));
  }
}

TEST(EhFit, SingleDecayAndValidation) {
  const auto seq = simulate_poisson(1.0, 500.0, 7);
  const Observation obs{seq.times(), 500.0};
  EnsembleConfig one{{0.05}};
  EXPECT_EQ(eh_fit(std::span(&obs, 1), one).size(), 1u);
  EXPECT_EQ(kind_of([] { EnsembleConfig{{0.1, 0.01}}.validate(); }), ErrorKind::InvalidParam);
  EXPECT_EQ(kind_of([] { EnsembleConfig{{}}.validate(); }), ErrorKind::InvalidParam);
  const auto short_seq = testing_util::poisson_events(20, 1);
  const Observation few{short_seq.times(), short_seq.times().back()};
  EXPECT_EQ(kind_of([&] { eh_fit(std::span(&few, 1), one); }), ErrorKind::TooShort);
}

TEST(EhFit, MinimizesConvexRisk) {
  HawkesParams hp;
  hp.mu = 0.3;
  hp.alphas = {0.4};
  hp.betas = {0.05};
  const auto seq = simulate_hawkes(hp, 4000.0, 9);
  const Observation obs{seq.times(), 4000.0};
  const auto data = std::span(&obs, 1);
  const EnsembleConfig cfg{{0.02, 0.05}};
  const auto fits = eh_fit(data, cfg);
  Rng rng(3);
  for (const auto& f : fits) {
    const ExpHawkes best = f.params;
    const double r0 = eh_risk(best, data);
    EXPECT_NEAR(f.nll, r0, 1e-9 * std::abs(r0));
    for (int k = 0; k < 50; ++k) {
      // Random starts inside the feasible box all score no better than the closed form.
      ExpHawkes q = best;
      q.mu = std::max(1e-6, best.mu * (1.0 + 0.5 * rng.normal()));
      q.alpha = std::clamp(best.alpha + 0.2 * rng.normal(), 0.0, 0.99);
      EXPECT_GE(eh_risk(q, data), r0 - 1e-8 * std::abs(r0));
      // Convexity along the segment to the random point.
      ExpHawkes mid{0.5 * (q.mu + best.mu), 0.5 * (q.alpha + best.alpha), best.beta};
      EXPECT_LE(eh_risk(mid, data), 0.5 * (eh_risk(q, data) + r0) + 1e-8 * std::abs(r0));
    }
  }
}

TEST(EhPredict, PoissonMemberMedian) {
  const std::vector<HawkesExpFit> one{{ExpHawkes{1.0, 0.0, 0.01}, true, 0.0, 0}};
  const std::vector<double> none;
  const std::vector<double> k{1.0};
  const auto p = eh_predict(one, none, k, 1.0);
  EXPECT_NEAR(p.mean, std::log(2.0), 1e-8);
  EXPECT_EQ(p.sigma, 0.0);
  const std::vector<HawkesExpFit> same(4, one.front());
  const std::vector<double> hist{0.5, 1.7, 2.0};
  const auto q = eh_predict(same, hist, k, 1.0);
  EXPECT_EQ(q.sigma, 0.0);
  EXPECT_NEAR(q.mean, 2.0 + std::log(2.0), 1e-8);
}

TEST(EhPredict, PhiMatchesQuadrature) {
  Rng rng(4);
  std::vector<double> hist;
  double now = 0.0;
  for (int i = 0; i < 30; ++i) hist.push_back(now += rng.exponential(2.0));
  const ExpHawkes p{0.4, 0.6, 1.3};
  double S = 0.0;
  for (double tj : hist) S += std::exp(-p.beta * (hist.back() - tj));
  for (double tau : {0.01, 0.3, 2.0, 7.5}) {
    const double quad = simpson([&](double s) {
      double v = p.mu;
      for (double tj : hist) v += p.alpha * p.beta * std::exp(-p.beta * (hist.back() + s - tj));
      return v;
    }, 0.0, tau);
    EXPECT_NEAR(hawkes_phi(p, S, tau), quad, 1e-8);
    EXPECT_NEAR(hawkes_hazard(p, S, tau), p.mu + p.alpha * p.beta * S * std::exp(-p.beta * tau), 1e-14);
  }
}

TEST(EhPredict, RollingMatchesSinglePrediction) {
  const auto seq = testing_util::poisson_events(60, 5);
  const std::vector<HawkesExpFit> fits{{ExpHawkes{0.8, 0.3, 0.5}, true, 0.0, 0}, {ExpHawkes{0.6, 0.4, 2.0}, true, 0.0, 0}};
  const PredictConfig cfg;
  const auto recs = hawkes_rolling_predict(fits, seq, 40, 60, 1.0, cfg);
  ASSERT_EQ(recs.size(), 20u);
  for (const auto& r : recs) {
    const std::span<const double> hist(seq.times().data(), r.event_index);
    const auto p = eh_predict(fits, hist, cfg.k_levels, 1.0, cfg);
    EXPECT_NEAR(r.prediction.mean, p.mean, 1e-9 * p.mean);
    EXPECT_GT(r.prediction.sigma, 0.0);
    EXPECT_TRUE(std::isfinite(r.prediction.log_density));
  }
}

TEST(HomogPoisson, RateAndClosedFormMnll) {
  std::vector<double> t;
  std::vector<Location> locs;
  for (int i = 1; i <= 100; ++i) {
    t.push_back(0.5 * i);
    locs.push_back({40.0 + 0.01 * (i % 7), -74.0 + 0.02 * (i % 5)});
  }
  const std::vector<EventSequence> train{EventSequence("a", t, locs)};
  const auto m = st_homog_poisson_fit(train);
  EXPECT_DOUBLE_EQ(m.rate, 2.0);
  EXPECT_NEAR(m.area(), 0.06 * 0.08, 1e-15);
  const auto taus = inter_arrivals(train[0]).taus;
  double mnll = 0.0, mean_tau = 0.0;
  for (double tau : taus) {
    mnll -= m.log_density_time(tau);
    mean_tau += tau;
  }
  mnll /= taus.size();
  mean_tau /= taus.size();
  EXPECT_NEAR(mnll, -std::log(m.rate) + m.rate * mean_tau, 1e-9);
  EXPECT_EQ(kind_of([] { st_homog_poisson_fit(std::vector<EventSequence>{}); }), ErrorKind::EmptyData);
}

TEST(HomogPoisson, DegenerateBoxStaysFinite) {
  const std::vector<EventSequence> train{
      EventSequence("a", {1.0, 2.0, 3.0}, std::vector<Location>(3, Location{10.0, 20.0}))};
  const auto m = st_homog_poisson_fit(train);
  EXPECT_GT(m.area(), 0.0);
  EXPECT_TRUE(std::isfinite(m.log_density_space()));
  const std::vector<double> k{1.0};
  const auto recs = st_homog_poisson_predict(m, train[0], 1, 3, k);
  ASSERT_EQ(recs.size(), 2u);
  EXPECT_NEAR(recs[0].prediction.time.mean, 1.0 + std::log(2.0) / m.rate, 1e-12);
  EXPECT_EQ(recs[0].prediction.location.lat.mean, 10.0);
  EXPECT_EQ(recs[0].prediction.time.sigma, 0.0);
  EXPECT_TRUE(std::isfinite(recs[1].prediction.location.log_density));
}

TEST(StNhp, IdenticalToZeroDropoutStTrain) {
  const auto seq = with_random_walk(testing_util::poisson_events(200, 3), {40.7, -74.0}, 0.05, 3);
  const auto c = split_counts(seq.size(), {});
  const auto tw = make_windows(seq, 5, 0, c.train);
  const auto vw = make_windows(seq, 5, c.train, c.train + c.valid);
  const StModel m = StModel::initialize({4, 2, 6, 5, 1.0}, fit_scaling(tw), fit_spatial_scaling(tw), 3, 6);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr = 1e-3;
  cfg.batch_size = 32;
  const auto a = st_nhp_train(m, tw, vw, cfg);
  const auto b = st_train(m, tw, vw, DropoutSpec::none(), cfg);
  EXPECT_EQ(a.model, b.model);

  PredictConfig pc;
  pc.samples = 10;
  const auto recs = st_nhp_predict(a.model, seq, c.train + c.valid, seq.size(), pc, 1);
  ASSERT_EQ(recs.size(), c.test);
  double mnll = 0.0;
  for (const auto& r : recs) {
    EXPECT_EQ(r.prediction.time.sigma, 0.0);
    EXPECT_EQ(r.prediction.location.lat.sigma, 0.0);
    EXPECT_EQ(r.prediction.location.lon.sigma, 0.0);
    mnll -= r.prediction.time.log_density + r.prediction.location.log_density;
  }
  EXPECT_TRUE(std::isfinite(mnll));
}
