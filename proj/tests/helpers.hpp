#pragma once

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <vector>

#include "bnhp/diffkernel.hpp"
#include "bnhp/error.hpp"
#include "bnhp/events.hpp"
#include "bnhp/nhp.hpp"
#include "bnhp/rng.hpp"
#include "bnhp/simulate.hpp"
#include "bnhp/spatial.hpp"

namespace testing_util {

using namespace bnhp;

inline EventSequence from_taus(const std::vector<double>& taus, std::string id = "s") {
  std::vector<double> t(taus.size());
  std::partial_sum(taus.begin(), taus.end(), t.begin());
  return EventSequence(std::move(id), std::move(t));
}

/// Random unit-ish inter-arrivals.
inline EventSequence random_sequence(std::size_t n, std::uint64_t seed, bool with_locations = false) {
  Rng rng(seed);
  std::vector<double> t;
  std::vector<Location> locs;
  double now = 0.0;
  Location x{40.7, -74.0};
  for (std::size_t i = 0; i < n; ++i) {
    now += rng.exponential(1.0);
    t.push_back(now);
    x.lat += 0.05 * rng.normal();
    x.lon += 0.05 * rng.normal();
    locs.push_back(x);
  }
  if (with_locations) return EventSequence("r", std::move(t), std::move(locs));
  return EventSequence("r", std::move(t));
}

/// First n events of a unit-rate Poisson process.
inline EventSequence poisson_events(std::size_t n, std::uint64_t seed) {
  const double horizon = static_cast<double>(n) + 10.0 * std::sqrt(static_cast<double>(n)) + 50.0;
  const auto seq = simulate_poisson(1.0, horizon, seed);
  return seq.slice(0, std::min(n, seq.size()));
}

/// Small model with raw parameters jittered so nothing sits at its initial value.
inline NhpModel toy_model(std::size_t hidden, std::size_t layers, std::size_t units, std::size_t M,
                          std::uint64_t seed, double jitter = 0.3) {
  NhpArchitecture arch;
  arch.hidden = hidden;
  arch.layers = layers;
  arch.units = units;
  arch.truncation = M;
  NhpModel m = NhpModel::initialize(arch, {1.0, 50.0}, seed);
  auto flat = m.flatten();
  Rng rng(derive_seed(seed, 99));
  for (double& v : flat) v += jitter * rng.normal();
  m.unflatten(flat);
  return m;
}

/// One-layer hazard net whose output is c * tau + 40 (other inputs carry weight
/// softplus(-1000) = 0), so Phi(tau) = c tau and lambda = c to rounding.
inline NhpModel linear_hazard_model(double c, std::size_t hidden, std::size_t M, double bias = 40.0) {
  NhpModel m = toy_model(hidden, 1, 1, M, 1);
  auto& layer = m.hazard_net.layers.front();
  for (double& r : layer.raw_weights.data) r = -1000.0;
  layer.raw_weights(0, 0) = ad::softplus_inverse(c);
  layer.bias(0, 0) = bias;
  m.scaling = {1.0, 1.0};
  return m;
}

/// Central differences of f at x, step h.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double dn = f(x);
    x[i] = keep;
    g[i] = (up - dn) / (2.0 * h);
  }
  return g;
}

/// Kind of the bnhp::Error thrown by f, or nullopt if f returns normally.
inline std::optional<ErrorKind> kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return std::nullopt;
}

inline bool close(double a, double b, double abs_tol, double rel_tol) {
  return std::abs(a - b) <= std::max(abs_tol, rel_tol * std::max(std::abs(a), std::abs(b)));
}

}  // namespace testing_util
