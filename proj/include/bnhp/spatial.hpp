#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bnhp/bayes.hpp"
#include "bnhp/events.hpp"
#include "bnhp/metrics.hpp"
#include "bnhp/nhp.hpp"
#include "bnhp/predict.hpp"

namespace bnhp {

/// Per-dimension standardization of locations, fitted on training data.
struct SpatialScaling {
  double mean_lat = 0.0;
  double mean_lon = 0.0;
  double std_lat = 1.0;
  double std_lon = 1.0;

  friend bool operator==(const SpatialScaling&, const SpatialScaling&) = default;
};

/// Feed-forward head (h, M previous locations) -> diagonal Gaussian over the
/// next location. One tanh hidden layer; outputs are (d_lat, d_lon, s_lat, s_lon)
/// in standardized units with mu = last location + std * d and
/// sigma = std * softplus(s) + sigma_floor.
struct SpatialHead {
  Tensor w1;  ///< (H + 2M) x units
  Tensor b1;  ///< 1 x units
  Tensor w2;  ///< units x 4
  Tensor b2;  ///< 1 x 4
  SpatialScaling scaling;
  double sigma_floor = 1e-4;

  static SpatialHead initialize(std::size_t hidden, std::size_t truncation, std::size_t units,
                                SpatialScaling scaling, std::uint64_t seed);
  std::size_t units() const noexcept { return b1.cols; }
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
  std::size_t parameter_count() const;

  friend bool operator==(const SpatialHead&, const SpatialHead&) = default;
};

struct StModel {
  NhpModel temporal;
  SpatialHead spatial;

  static StModel initialize(const NhpArchitecture& arch, InputScaling scaling, SpatialScaling spatial_scaling,
                            std::uint64_t seed, std::size_t spatial_units = 32);
  std::vector<double> flatten() const;  ///< temporal parameters, then spatial
  void unflatten(std::span<const double> flat);
  std::size_t parameter_count() const;

  friend bool operator==(const StModel&, const StModel&) = default;
};

MaskShapes mask_shapes(const StModel& model);

/// SchemaError if a window has no locations.
SpatialScaling fit_spatial_scaling(std::span<const Window> train);

struct Gaussian2 {
  double mu_lat = 0.0;
  double mu_lon = 0.0;
  double sigma_lat = 1.0;
  double sigma_lon = 1.0;
};

/// Sum over both dimensions of log N(x_d; mu_d, sigma_d^2).
double gaussian_log_density(const Gaussian2& g, const Location& x);

Gaussian2 spatial_gaussian(const SpatialHead& head, std::span<const double> h,
                           std::span<const Location> prev_locs, const MaskSet* masks = nullptr);

double spatial_log_density(const SpatialHead& head, std::span<const double> h,
                           std::span<const Location> prev_locs, const Location& x,
                           const MaskSet* masks = nullptr);

struct StLikelihood {
  double value = 0.0;     ///< temporal + spatial
  double temporal = 0.0;
  double spatial = 0.0;
  std::size_t clamped = 0;
  std::vector<double> gradient;  ///< d value / d StModel::flatten()
};

/// Joint log-likelihood. `masks` is empty, shared, or one per window.
StLikelihood st_log_likelihood(const StModel& model, std::span<const Window> windows,
                               std::span<const MaskSet> masks = {}, bool with_gradient = false,
                               std::size_t threads = 1);

/// Sum of squares of the spatial head's weights and biases.
double spatial_l2_penalty(const SpatialHead& head, std::vector<double>* grad = nullptr);

struct StTrainResult {
  StModel model;
  LossTrace trace;
};

StTrainResult st_train(const StModel& initial, std::span<const Window> train_windows,
                       std::span<const Window> valid_windows, const DropoutSpec& spec, const TrainConfig& cfg);

struct LocationPrediction {
  TimePrediction lat;
  TimePrediction lon;
  double log_density = kNaN;  ///< log of the sample-averaged spatial density at the actual location
};

struct StPrediction {
  TimePrediction time;
  LocationPrediction location;
};

/// Per MC pass: draw masks, compute (mu, sigma) and draw one location from the
/// Gaussian (or take mu when `mu_only`). The Gaussian draws use
/// derive_seed(derive_seed(seed, s), 1).
LocationPrediction predict_location(const StModel& model, const Window& window, const DropoutSpec& spec,
                                    const PredictConfig& cfg, std::uint64_t seed, bool mu_only = false);

/// Time and location from the same S sampled networks.
StPrediction predict_st(const StModel& model, const Window& window, const DropoutSpec& spec,
                        const PredictConfig& cfg, std::uint64_t seed, bool mu_only = false);

struct StRecord {
  std::string sequence_id;
  std::size_t event_index = 0;
  double actual_time = 0.0;
  Location actual_location;
  StPrediction prediction;
};

std::vector<StRecord> rolling_predict_st(const StModel& model, const EventSequence& seq, std::size_t begin,
                                         std::size_t end, const DropoutSpec& spec, const PredictConfig& cfg,
                                         std::uint64_t seed, bool mu_only = false);

/// Temporal columns, then actual_lat,actual_lon,pred_lat,pred_lon,sigma_lat,sigma_lon
/// and lat_lo_k*,lat_hi_k*,lon_lo_k*,lon_hi_k* per k.
void write_st_predictions_csv(std::ostream& out, std::span<const StRecord> records);
/// sequence_id,event_index,log_density_time,log_density_space
void write_st_density_csv(std::ostream& out, std::span<const StRecord> records);
std::vector<StRecord> read_st_predictions_csv(std::istream& in);
void read_st_density_csv(std::istream& in, std::vector<StRecord>& records);

/// Temporal metrics plus MAE lat/lon and spatial PIC; mnll = temporal + spatial MNLL.
MetricsReport evaluate_st(std::span<const StRecord> records, const std::string& model,
                          std::span<const double> quantiles = {});

}  // namespace bnhp
