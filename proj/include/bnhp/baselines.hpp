#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bnhp/events.hpp"
#include "bnhp/metrics.hpp"
#include "bnhp/predict.hpp"
#include "bnhp/spatial.hpp"

namespace bnhp {

/// One-kernel exponential Hawkes: lambda(t) = mu + alpha beta sum exp(-beta (t - t_j)).
struct ExpHawkes {
  double mu = 1.0;
  double alpha = 0.0;
  double beta = 1.0;

  void validate() const;  ///< InvalidParam unless mu > 0, alpha in [0, 1), beta > 0
  friend bool operator==(const ExpHawkes&, const ExpHawkes&) = default;
};

struct HawkesExpFit {
  ExpHawkes params;
  bool converged = false;
  double nll = 0.0;  ///< negative log-likelihood (or least-squares risk for ensemble members)
  std::size_t iterations = 0;

  friend bool operator==(const HawkesExpFit&, const HawkesExpFit&) = default;
};

/// Events observed on [0, horizon].
struct Observation {
  std::span<const double> times;
  double horizon = 0.0;
};

/// Exponential-Hawkes log-likelihood by the O(N) recursion.
double shp_loglik(const ExpHawkes& p, std::span<const double> times, double horizon);

/// Same quantity by the O(N^2) direct intensity sum.
double shp_loglik_direct(const ExpHawkes& p, std::span<const double> times, double horizon);

/// Gradient of shp_loglik with respect to (mu, alpha, beta).
std::vector<double> shp_gradient(const ExpHawkes& p, std::span<const double> times, double horizon);

struct ShpFitOptions {
  std::size_t max_iter = 200;
  double grad_tol = 1e-6;  ///< on the projected gradient of the per-event mean log-likelihood
  std::size_t min_events = 50;
};

/// Multi-start projected Newton on (log mu, alpha, log beta) with alpha boxed to
/// [0, 1 - 1e-9]. A fit that misses grad_tol is returned with converged = false.
HawkesExpFit shp_fit(std::span<const Observation> data, const ShpFitOptions& options = {});
HawkesExpFit shp_fit(std::span<const double> times, double horizon, const ShpFitOptions& options = {});

struct EnsembleConfig {
  std::vector<double> decays;  ///< one member per decay

  /// n values log-spaced over [lo, hi].
  static EnsembleConfig log_spaced(std::size_t n = 10, double lo = 0.001, double hi = 0.1);
  void validate() const;
};

/// Least-squares risk  int lambda^2 - 2 sum lambda(t_i)  of one member.
double eh_risk(const ExpHawkes& p, std::span<const Observation> data);

/// For each decay, minimizes the risk over (mu, alpha) >= 0 in closed form.
std::vector<HawkesExpFit> eh_fit(std::span<const Observation> data, const EnsembleConfig& cfg);

/// Phi(tau) = mu tau + alpha S (1 - exp(-beta tau)) with S = sum_j exp(-beta (t_N - t_j)).
double hawkes_phi(const ExpHawkes& p, double excitation, double tau);
double hawkes_hazard(const ExpHawkes& p, double excitation, double tau);

/// Per-member median next time, aggregated like MC samples. `history` holds
/// the event times up to and including the anchor t_N; `start` seeds the bracket.
TimePrediction eh_predict(std::span<const HawkesExpFit> fits, std::span<const double> history,
                          std::span<const double> k_levels, double start, const PredictConfig& cfg = {});

/// One-step-ahead predictions for events [begin, end) of `seq` using all
/// actual earlier events. A single fit gives the SHP predictor.
std::vector<PredictionRecord> hawkes_rolling_predict(std::span<const HawkesExpFit> fits, const EventSequence& seq,
                                                     std::size_t begin, std::size_t end, double start,
                                                     const PredictConfig& cfg = {});

/// Constant rate in time, uniform over the training bounding box in space.
struct StHomogPoisson {
  double rate = 1.0;
  double lat_min = 0.0, lat_max = 0.0, lon_min = 0.0, lon_max = 0.0;

  static constexpr double kMinExtent = 1e-4;  ///< degrees; keeps a degenerate box finite
  double area() const;
  double log_density_space() const { return -std::log(area()); }
  double log_density_time(double tau) const { return std::log(rate) - rate * tau; }

  friend bool operator==(const StHomogPoisson&, const StHomogPoisson&) = default;
};

/// Sequences are the training parts; each is observed on [0, its last event].
StHomogPoisson st_homog_poisson_fit(std::span<const EventSequence> train);

/// Median ln2 / rate after the previous event, box centre; sigma 0.
std::vector<StRecord> st_homog_poisson_predict(const StHomogPoisson& model, const EventSequence& seq,
                                               std::size_t begin, std::size_t end,
                                               std::span<const double> k_levels);

/// ST-BNHP with every drop probability 0.
StTrainResult st_nhp_train(const StModel& initial, std::span<const Window> train_windows,
                           std::span<const Window> valid_windows, const TrainConfig& cfg);

/// Deterministic network, location taken as mu: every sigma is 0.
std::vector<StRecord> st_nhp_predict(const StModel& model, const EventSequence& seq, std::size_t begin,
                                     std::size_t end, const PredictConfig& cfg, std::uint64_t seed);

}  // namespace bnhp
