#include "bnhp/simulate.hpp"

#include <cassert>
#include <cmath>
#include <numeric>

#include "bnhp/error.hpp"
#include "bnhp/rng.hpp"

namespace bnhp {

double HawkesParams::branching_ratio() const {
  return std::accumulate(alphas.begin(), alphas.end(), 0.0);
}

double HawkesParams::stationary_rate() const { return mu / (1.0 - branching_ratio()); }

void HawkesParams::validate() const {
  require(std::isfinite(mu) && mu > 0.0, ErrorKind::InvalidParam, "mu must be positive");
  require(alphas.size() == betas.size(), ErrorKind::InvalidParam,
          "alphas and betas must have equal length");
  for (double a : alphas) {
    require(std::isfinite(a) && a >= 0.0, ErrorKind::InvalidParam, "alphas must be non-negative");
  }
  for (double b : betas) {
    require(std::isfinite(b) && b > 0.0, ErrorKind::InvalidParam, "betas must be positive");
  }
  require(branching_ratio() < 1.0, ErrorKind::NonStationary,
          "sum of alphas is " + std::to_string(branching_ratio()) + "; must be < 1");
}

EventSequence simulate_poisson(double rate, double horizon, std::uint64_t seed, std::string id) {
  require(std::isfinite(rate) && rate > 0.0, ErrorKind::InvalidParam, "rate must be positive");
  require(std::isfinite(horizon) && horizon > 0.0, ErrorKind::InvalidParam, "horizon must be positive");
  Rng rng(seed);
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(rate * horizon * 1.1) + 16);
  double t = 0.0;
  while (true) {
    t += rng.exponential(rate);
    if (t > horizon) break;
    if (!times.empty() && !(t > times.back())) continue;  // gap below double resolution
    times.push_back(t);
  }
  return EventSequence(std::move(id), std::move(times));
}

double hawkes_intensity(const HawkesParams& params, std::span<const double> history, double t) {
  double lambda = params.mu;
  for (double ti : history) {
    if (!(ti < t)) continue;
    for (std::size_t j = 0; j < params.alphas.size(); ++j) {
      lambda += params.alphas[j] * params.betas[j] * std::exp(-params.betas[j] * (t - ti));
    }
  }
  return lambda;
}

EventSequence simulate_hawkes(const HawkesParams& params, double horizon, std::uint64_t seed,
                              std::string id) {
  params.validate();
  require(std::isfinite(horizon) && horizon > 0.0, ErrorKind::InvalidParam, "horizon must be positive");
  Rng rng(seed);
  const std::size_t K = params.alphas.size();
  // excitation[j] = sum over past events of alpha_j beta_j exp(-beta_j (t - t_i)) at the current t
  std::vector<double> excitation(K, 0.0);
  std::vector<double> times;
  double t = 0.0;
  auto total = [&] {
    return params.mu + std::accumulate(excitation.begin(), excitation.end(), 0.0);
  };
  while (true) {
    const double bound = total();
    const double dt = rng.exponential(bound);
    t += dt;
    if (t > horizon) break;
    for (std::size_t j = 0; j < K; ++j) excitation[j] *= std::exp(-params.betas[j] * dt);
    const double lambda = total();
    assert(lambda <= bound * (1.0 + 1e-12) && "thinning bound below the true intensity");
    if (rng.uniform() * bound <= lambda) {
      if (!times.empty() && !(t > times.back())) continue;
      times.push_back(t);
      for (std::size_t j = 0; j < K; ++j) excitation[j] += params.alphas[j] * params.betas[j];
    }
  }
  return EventSequence(std::move(id), std::move(times));
}

EventSequence with_random_walk(const EventSequence& seq, Location start, double step, std::uint64_t seed) {
  require(std::isfinite(step) && step >= 0.0, ErrorKind::InvalidParam, "walk step must be >= 0");
  Rng rng(seed);
  std::vector<Location> locs;
  locs.reserve(seq.size());
  Location x = start;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    x.lat += step * rng.normal();
    x.lon += step * rng.normal();
    locs.push_back(x);
  }
  return EventSequence(seq.id(), seq.times(), std::move(locs), seq.offset());
}

}  // namespace bnhp
