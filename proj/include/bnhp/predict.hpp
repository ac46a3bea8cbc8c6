#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <iosfwd>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bnhp/bayes.hpp"
#include "bnhp/events.hpp"
#include "bnhp/nhp.hpp"

namespace bnhp {

struct PredictConfig {
  std::size_t samples = 50;                 ///< S
  std::vector<double> k_levels{1.0, 2.0, 5.0};
  double bisect_tol = 1e-8;
  std::size_t bisect_max_iter = 200;
  /// Reuse the same S masks at every step of a rolling prediction instead of
  /// drawing fresh ones per step.
  bool persist_masks = false;
  std::size_t threads = 1;

  void validate() const;
};

/// Lag where a monotone phi with phi(0) = 0 crosses `target`. The bracket is
/// grown by doubling from `start` (at most 60 times, else NoBracket), then
/// bisected until |phi - target| <= tol (MaxIter otherwise).
double bisect_median(const std::function<double(double)>& phi, double start, double tol,
                     std::size_t max_iter, double target = std::numbers::ln2);

/// MC aggregate of S sampled point predictions. Also used for ensembles.
struct TimePrediction {
  std::vector<double> samples;
  double mean = 0.0;
  double sigma = 0.0;  ///< population standard deviation of the samples
  std::vector<double> k_levels;
  std::vector<std::pair<double, double>> bounds;  ///< (mean - k sigma, mean + k sigma) per k level
  /// log of the sample-averaged predictive density at the realised lag; NaN if not scored.
  double log_density = std::numeric_limits<double>::quiet_NaN();
  /// Samples left out because their Phi never reached log 2 (median at infinity).
  std::size_t unbracketed = 0;

  std::pair<double, double> interval(double k) const;  ///< MissingLevel if k was not requested
};

/// Mean, population sigma and k bounds of `samples`.
TimePrediction aggregate(std::vector<double> samples, std::span<const double> k_levels);

/// log((1/S) sum exp(terms)), computed stably.
double log_mean_exp(std::span<const double> terms);

/// One MC prediction step: for each sample, draw masks from derive_seed(seed, s),
/// bisect Phi at log 2 and add the anchor time. A sample whose Phi stays below
/// log 2 is left out of the time aggregate but still scored for density;
/// NoBracket only if no sample brackets.
TimePrediction predict_next(const NhpModel& model, const Window& window, const DropoutSpec& spec,
                            const PredictConfig& cfg, std::uint64_t seed);

/// Same, sharing precomputed effective weights.
TimePrediction predict_next(const EffectiveNhp& eff, const MaskShapes& shapes, const Window& window,
                            const DropoutSpec& spec, const PredictConfig& cfg, std::uint64_t seed);

struct PredictionRecord {
  std::string sequence_id;
  std::size_t event_index = 0;
  double actual_time = 0.0;
  TimePrediction prediction;
};

/// One-step-ahead predictions for events [begin, end) of `seq`, each from the
/// actual preceding M events. Step i uses seed derive_seed(seed, i) unless masks persist.
std::vector<PredictionRecord> rolling_predict(const NhpModel& model, const EventSequence& seq,
                                              std::size_t begin, std::size_t end, const DropoutSpec& spec,
                                              const PredictConfig& cfg, std::uint64_t seed);

/// Seed for prediction step `event_index`.
std::uint64_t step_seed(std::uint64_t seed, std::size_t event_index, bool persist);

std::string k_label(double k);

/// sequence_id,event_index,actual_time,pred_mean,pred_sigma,lo_k1,hi_k1,...
void write_predictions_csv(std::ostream& out, std::span<const PredictionRecord> records);
/// sequence_id,event_index,log_density
void write_density_csv(std::ostream& out, std::span<const PredictionRecord> records);

/// Inverse of write_predictions_csv; samples are not stored, so they come back empty.
std::vector<PredictionRecord> read_predictions_csv(std::istream& in);
/// Fills log_density of matching (sequence_id, event_index) records; MissingLevel if one is absent.
void read_density_csv(std::istream& in, std::vector<PredictionRecord>& records);

}  // namespace bnhp
