#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "bnhp/predict.hpp"

namespace bnhp {

/// Mean of -log density. NonFinite if any log density is not finite.
double mnll(std::span<const double> log_densities);

double mae(std::span<const double> predicted, std::span<const double> actual);

/// Fraction of events with lo(k) <= actual <= hi(k).
double pic_at_k(std::span<const TimePrediction> predictions, std::span<const double> actual, double k);

/// Both coordinates must fall inside their bounds.
double pic_at_k_spatial(std::span<const TimePrediction> lat, std::span<const TimePrediction> lon,
                        std::span<const double> actual_lat, std::span<const double> actual_lon, double k);

struct PilStats {
  double mean = 0.0;
  double variance = 0.0;  ///< population
};

/// Statistics of 2 k sigma over the predictions.
PilStats pil(std::span<const TimePrediction> predictions, double k = 1.0);

/// Linear interpolation between order statistics at h = (n - 1) q.
double quantile(std::vector<double> values, double q);

struct QuantileRow {
  double q = 0.0;
  double avg_pil = 0.0;
  std::size_t count = 0;
};

/// For each q: mean of 2 sigma over events whose absolute deviation is at most the q-quantile.
std::vector<QuantileRow> avg_pil_quantile(std::span<const double> abs_devs, std::span<const double> sigmas,
                                          std::span<const double> quantiles);

std::vector<double> average_ranks(std::span<const double> x);

/// Pearson correlation of average ranks. ZeroVariance if either input is constant.
double spearman(std::span<const double> x, std::span<const double> y);

std::vector<double> default_quantiles();  ///< 0.1, 0.2, ..., 1.0

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct MetricsReport {
  std::string model;
  std::size_t n_events = 0;
  double mnll = kNaN;           ///< joint for spatio-temporal models
  double mnll_temporal = kNaN;
  double mnll_spatial = kNaN;
  bool mnll_comparable = true;
  double mae_time = kNaN;
  double mae_lat = kNaN;
  double mae_lon = kNaN;
  std::vector<std::pair<double, double>> pic;          ///< (k, fraction), temporal
  std::vector<std::pair<double, double>> pic_spatial;  ///< (k, fraction)
  double pil_mean = 0.0;
  double pil_var = 0.0;
  double spearman_ad_pil = kNaN;  ///< NaN when PIL or AD is constant
  std::vector<QuantileRow> quantile_table;

  double pic_at(double k) const;  ///< MissingLevel if absent
  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
};

/// Temporal metrics over rolling predictions. Uses log_density when every
/// record carries one; otherwise mnll stays NaN.
MetricsReport evaluate_time(std::span<const PredictionRecord> records, const std::string& model,
                            std::span<const double> quantiles = {});

/// Aligned text table, one row per report.
void print_table(std::ostream& out, std::span<const MetricsReport> reports);

}  // namespace bnhp
