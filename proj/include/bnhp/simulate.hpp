#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bnhp/events.hpp"

namespace bnhp {

/// Baseline plus a sum of exponential kernels alpha_j * beta_j * exp(-beta_j * lag).
/// The alpha_j are branching ratios: each kernel integrates to alpha_j.
struct HawkesParams {
  double mu = 0.05;
  std::vector<double> alphas{0.4, 0.4};
  std::vector<double> betas{1.0, 20.0};

  double branching_ratio() const;
  double stationary_rate() const;  ///< mu / (1 - sum alphas)
  void validate() const;           ///< InvalidParam / NonStationary
};

EventSequence simulate_poisson(double rate, double horizon, std::uint64_t seed,
                               std::string id = "poisson");

/// Conditional intensity at `t` given the events in `history` strictly before t.
double hawkes_intensity(const HawkesParams& params, std::span<const double> history, double t);

/// Ogata thinning, dominated by the intensity just after the current point.
EventSequence simulate_hawkes(const HawkesParams& params, double horizon, std::uint64_t seed,
                              std::string id = "hawkes");

/// Copy of `seq` with locations from a Gaussian random walk: each event moves
/// both coordinates by independent N(0, step^2) from the previous location.
EventSequence with_random_walk(const EventSequence& seq, Location start, double step, std::uint64_t seed);

}  // namespace bnhp
