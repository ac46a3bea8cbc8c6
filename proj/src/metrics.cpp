#include "bnhp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "bnhp/error.hpp"

namespace bnhp {

namespace {

void same_length(std::size_t a, std::size_t b, const char* what) {
  require(a == b, ErrorKind::LengthMismatch,
          std::string(what) + ": lengths differ (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
}

bool covers(const TimePrediction& p, double actual, double k) {
  const auto [lo, hi] = p.interval(k);
  return lo <= actual && actual <= hi;
}

}  // namespace

double mnll(std::span<const double> log_densities) {
  require(!log_densities.empty(), ErrorKind::EmptyData, "MNLL needs at least one event");
  double s = 0.0;
  for (std::size_t i = 0; i < log_densities.size(); ++i) {
    require(std::isfinite(log_densities[i]), ErrorKind::NonFinite,
            "log density of event " + std::to_string(i) + " is not finite");
    s -= log_densities[i];
  }
  return s / static_cast<double>(log_densities.size());
}

double mae(std::span<const double> predicted, std::span<const double> actual) {
  same_length(predicted.size(), actual.size(), "mae");
  require(!actual.empty(), ErrorKind::EmptyData, "MAE needs at least one event");
  double s = 0.0;
  for (std::size_t i = 0; i < actual.size(); ++i) s += std::abs(predicted[i] - actual[i]);
  return s / static_cast<double>(actual.size());
}

double pic_at_k(std::span<const TimePrediction> predictions, std::span<const double> actual, double k) {
  same_length(predictions.size(), actual.size(), "pic_at_k");
  require(!actual.empty(), ErrorKind::EmptyData, "PIC needs at least one event");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < actual.size(); ++i) hit += covers(predictions[i], actual[i], k) ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(actual.size());
}

double pic_at_k_spatial(std::span<const TimePrediction> lat, std::span<const TimePrediction> lon,
                        std::span<const double> actual_lat, std::span<const double> actual_lon, double k) {
  same_length(lat.size(), actual_lat.size(), "pic_at_k_spatial");
  same_length(lon.size(), actual_lon.size(), "pic_at_k_spatial");
  same_length(lat.size(), lon.size(), "pic_at_k_spatial");
  require(!lat.empty(), ErrorKind::EmptyData, "PIC needs at least one event");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < lat.size(); ++i) {
    hit += (covers(lat[i], actual_lat[i], k) && covers(lon[i], actual_lon[i], k)) ? 1 : 0;
  }
  return static_cast<double>(hit) / static_cast<double>(lat.size());
}

PilStats pil(std::span<const TimePrediction> predictions, double k) {
  require(!predictions.empty(), ErrorKind::EmptyData, "PIL needs at least one prediction");
  const double n = static_cast<double>(predictions.size());
  double s = 0.0;
  for (const auto& p : predictions) s += 2.0 * k * p.sigma;
  PilStats out;
  out.mean = s / n;
  double ss = 0.0;
  for (const auto& p : predictions) {
    const double d = 2.0 * k * p.sigma - out.mean;
    ss += d * d;
  }
  out.variance = ss / n;
  return out;
}

double quantile(std::vector<double> values, double q) {
  require(!values.empty(), ErrorKind::EmptyData, "quantile of nothing");
  require(q >= 0.0 && q <= 1.0, ErrorKind::InvalidParam, "quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = static_cast<double>(values.size() - 1) * q;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<QuantileRow> avg_pil_quantile(std::span<const double> abs_devs, std::span<const double> sigmas,
                                          std::span<const double> quantiles) {
  same_length(abs_devs.size(), sigmas.size(), "avg_pil_quantile");
  require(!abs_devs.empty(), ErrorKind::EmptyData, "avg_pil_quantile needs at least one event");
  std::vector<QuantileRow> out;
  const std::vector<double> ad(abs_devs.begin(), abs_devs.end());
  for (double q : quantiles) {
    const double cut = quantile(ad, q);
    double s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < ad.size(); ++i) {
      if (ad[i] <= cut) {
        s += 2.0 * sigmas[i];
        ++n;
      }
    }
    out.push_back({q, s / static_cast<double>(n), n});
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> r(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = rank;
    i = j + 1;
  }
  return r;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  same_length(x.size(), y.size(), "spearman");
  require(x.size() >= 2, ErrorKind::EmptyData, "spearman needs at least two points");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  require(sxx > 0.0 && syy > 0.0, ErrorKind::ZeroVariance, "spearman: an input is constant");
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> default_quantiles() {
  std::vector<double> q;
  for (int i = 1; i <= 10; ++i) q.push_back(i / 10.0);
  return q;
}

double MetricsReport::pic_at(double k) const {
  for (const auto& [kk, v] : pic) {
    if (kk == k) return v;
  }
  fail(ErrorKind::MissingLevel, "report has no PIC at k = " + format_double(k));
}

namespace {

nlohmann::json num(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

double num_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return kNaN;
  return j.at(key).get<double>();
}

nlohmann::json pic_json(const std::vector<std::pair<double, double>>& pic) {
  nlohmann::json o = nlohmann::json::object();
  for (const auto& [k, v] : pic) o[k_label(k)] = v;
  return o;
}

std::vector<std::pair<double, double>> pic_from(const nlohmann::json& j) {
  std::vector<std::pair<double, double>> out;
  for (auto it = j.begin(); it != j.end(); ++it) out.emplace_back(std::stod(it.key()), it.value().get<double>());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["model"] = model;
  j["n_events"] = n_events;
  j["mnll"] = num(mnll);
  j["mnll_temporal"] = num(mnll_temporal);
  j["mnll_spatial"] = num(mnll_spatial);
  j["mnll_comparable"] = mnll_comparable;
  j["mae_time"] = num(mae_time);
  j["mae_lat"] = num(mae_lat);
  j["mae_lon"] = num(mae_lon);
  j["pic"] = pic_json(pic);
  j["pic_spatial"] = pic_json(pic_spatial);
  j["pil_mean"] = num(pil_mean);
  j["pil_var"] = num(pil_var);
  j["spearman_ad_pil"] = num(spearman_ad_pil);
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : quantile_table) rows.push_back({{"q", r.q}, {"avg_pil", num(r.avg_pil)}, {"count", r.count}});
  j["quantile_table"] = rows;
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("metrics report: ") + e.what());
  }
  MetricsReport r;
  r.model = j.value("model", "");
  r.n_events = j.value("n_events", std::size_t{0});
  r.mnll = num_from(j, "mnll");
  r.mnll_temporal = num_from(j, "mnll_temporal");
  r.mnll_spatial = num_from(j, "mnll_spatial");
  r.mnll_comparable = j.value("mnll_comparable", true);
  r.mae_time = num_from(j, "mae_time");
  r.mae_lat = num_from(j, "mae_lat");
  r.mae_lon = num_from(j, "mae_lon");
  if (j.contains("pic")) r.pic = pic_from(j["pic"]);
  if (j.contains("pic_spatial")) r.pic_spatial = pic_from(j["pic_spatial"]);
  r.pil_mean = num_from(j, "pil_mean");
  r.pil_var = num_from(j, "pil_var");
  r.spearman_ad_pil = num_from(j, "spearman_ad_pil");
  if (j.contains("quantile_table")) {
    for (const auto& row : j["quantile_table"]) {
      r.quantile_table.push_back({row.at("q").get<double>(), num_from(row, "avg_pil"),
                                  row.value("count", std::size_t{0})});
    }
  }
  return r;
}

MetricsReport evaluate_time(std::span<const PredictionRecord> records, const std::string& model,
                            std::span<const double> quantiles) {
  require(!records.empty(), ErrorKind::EmptyData, "no predictions to evaluate");
  MetricsReport r;
  r.model = model;
  r.n_events = records.size();
  std::vector<TimePrediction> preds;
  std::vector<double> actual, mean, ad, sig, ld;
  bool have_density = true;
  for (const auto& rec : records) {
    preds.push_back(rec.prediction);
    actual.push_back(rec.actual_time);
    mean.push_back(rec.prediction.mean);
    ad.push_back(std::abs(rec.prediction.mean - rec.actual_time));
    sig.push_back(rec.prediction.sigma);
    ld.push_back(rec.prediction.log_density);
    have_density = have_density && !std::isnan(rec.prediction.log_density);
  }
  if (have_density) {
    r.mnll_temporal = mnll(ld);
    r.mnll = r.mnll_temporal;
  }
  r.mae_time = mae(mean, actual);
  for (double k : records.front().prediction.k_levels) r.pic.emplace_back(k, pic_at_k(preds, actual, k));
  const PilStats p = pil(preds, 1.0);
  r.pil_mean = p.mean;
  r.pil_var = p.variance;
  if (records.size() >= 2) {
    try {
      r.spearman_ad_pil = spearman(ad, sig);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::ZeroVariance) throw;
    }
  }
  const auto qs = quantiles.empty() ? default_quantiles() : std::vector<double>(quantiles.begin(), quantiles.end());
  r.quantile_table = avg_pil_quantile(ad, sig, qs);
  return r;
}

void print_table(std::ostream& out, std::span<const MetricsReport> reports) {
  auto cell = [](double v, int prec = 4) {
    if (!std::isfinite(v)) return std::string("-");
    std::ostringstream s;
    s << std::fixed << std::setprecision(prec) << v;
    return s.str();
  };
  std::vector<double> ks;
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.pic) {
      if (std::find(ks.begin(), ks.end(), k) == ks.end()) ks.push_back(k);
    }
  }
  std::sort(ks.begin(), ks.end());
  std::vector<std::string> head{"model", "N", "MNLL", "MAE"};
  for (double k : ks) head.push_back("PIC@" + k_label(k));
  head.insert(head.end(), {"PIL", "PIL var", "Spearman"});
  const bool spatial = std::any_of(reports.begin(), reports.end(), [](const MetricsReport& r) {
    return std::isfinite(r.mae_lat);
  });
  if (spatial) {
    head.insert(head.end(), {"MAE lat", "MAE lon"});
    for (double k : ks) head.push_back("sPIC@" + k_label(k));
  }
  std::vector<std::vector<std::string>> rows{head};
  for (const auto& r : reports) {
    std::vector<std::string> row{r.model, std::to_string(r.n_events),
                                 cell(r.mnll) + (r.mnll_comparable ? "" : "*"), cell(r.mae_time)};
    for (double k : ks) {
      double v = kNaN;
      for (const auto& [kk, p] : r.pic) if (kk == k) v = p;
      row.push_back(cell(v, 3));
    }
    row.insert(row.end(), {cell(r.pil_mean), cell(r.pil_var), cell(r.spearman_ad_pil, 3)});
    if (spatial) {
      row.insert(row.end(), {cell(r.mae_lat), cell(r.mae_lon)});
      for (double k : ks) {
        double v = kNaN;
        for (const auto& [kk, p] : r.pic_spatial) if (kk == k) v = p;
        row.push_back(cell(v, 3));
      }
    }
    rows.push_back(std::move(row));
  }
  std::vector<std::size_t> width(head.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out << (c == 0 ? std::left : std::right) << std::setw(static_cast<int>(width[c])) << row[c]
          << (c + 1 == row.size() ? "\n" : "  ");
    }
  }
}

}  // namespace bnhp
