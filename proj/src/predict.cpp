#include "bnhp/predict.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>

#include "bnhp/error.hpp"
#include "bnhp/rng.hpp"
#include "bnhp/table.hpp"

namespace bnhp {

void PredictConfig::validate() const {
  require(samples >= 1, ErrorKind::InvalidParam, "samples must be >= 1");
  require(!k_levels.empty(), ErrorKind::InvalidParam, "at least one k level is required");
  for (double k : k_levels) require(std::isfinite(k) && k > 0.0, ErrorKind::InvalidParam, "k levels must be positive");
  require(bisect_tol > 0.0, ErrorKind::InvalidParam, "bisect_tol must be > 0");
  require(bisect_max_iter >= 1, ErrorKind::InvalidParam, "bisect_max_iter must be >= 1");
  require(threads >= 1, ErrorKind::InvalidParam, "threads must be >= 1");
}

double bisect_median(const std::function<double(double)>& phi, double start, double tol,
                     std::size_t max_iter, double target) {
  require(start > 0.0 && std::isfinite(start), ErrorKind::InvalidParam, "bracket start must be positive");
  double lo = 0.0;
  double hi = start;
  double f = phi(hi);
  for (int doublings = 0; f < target; ++doublings) {
    require(doublings < 60, ErrorKind::NoBracket,
            "cumulative hazard stays below target after 60 doublings");
    require(std::isfinite(f), ErrorKind::NonFinite, "cumulative hazard is not finite");
    lo = hi;
    hi *= 2.0;
    f = phi(hi);
  }
  if (std::abs(f - target) <= tol) return hi;
  for (std::size_t it = 0; it < max_iter; ++it) {
    const double mid = lo + 0.5 * (hi - lo);
    const double fm = phi(mid);
    require(std::isfinite(fm), ErrorKind::NonFinite, "cumulative hazard is not finite");
    if (std::abs(fm - target) <= tol) return mid;
    (fm < target ? lo : hi) = mid;
  }
  fail(ErrorKind::MaxIter, "bisection did not reach tolerance in " + std::to_string(max_iter) + " iterations");
}

std::pair<double, double> TimePrediction::interval(double k) const {
  for (std::size_t i = 0; i < k_levels.size(); ++i) {
    if (k_levels[i] == k) return bounds[i];
  }
  fail(ErrorKind::MissingLevel, "no interval at k = " + format_double(k));
}

TimePrediction aggregate(std::vector<double> samples, std::span<const double> k_levels) {
  require(!samples.empty(), ErrorKind::EmptyData, "no samples to aggregate");
  TimePrediction p;
  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi) {
    // Identical samples: summation rounding must not leak into mean or sigma.
    p.mean = *lo;
    p.sigma = 0.0;
  } else {
    const double n = static_cast<double>(samples.size());
    double sum = 0.0;
    for (double s : samples) sum += s;
    p.mean = sum / n;
    double ss = 0.0;
    for (double s : samples) ss += (s - p.mean) * (s - p.mean);
    p.sigma = std::sqrt(ss / n);
  }
  p.samples = std::move(samples);
  p.k_levels.assign(k_levels.begin(), k_levels.end());
  for (double k : k_levels) p.bounds.emplace_back(p.mean - k * p.sigma, p.mean + k * p.sigma);
  return p;
}

double log_mean_exp(std::span<const double> terms) {
  require(!terms.empty(), ErrorKind::EmptyData, "log_mean_exp of nothing");
  const double m = *std::max_element(terms.begin(), terms.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - m);
  return m + std::log(s / static_cast<double>(terms.size()));
}

TimePrediction predict_next(const EffectiveNhp& eff, const MaskShapes& shapes, const Window& window,
                            const DropoutSpec& spec, const PredictConfig& cfg, std::uint64_t seed) {
  std::vector<double> times;
  std::vector<double> dens(cfg.samples);
  times.reserve(cfg.samples);
  std::size_t unbracketed = 0;
  for (std::size_t s = 0; s < cfg.samples; ++s) {
    MaskSet masks;
    const bool masked = !spec.deterministic();
    if (masked) masks = sample_masks(spec, shapes, derive_seed(seed, s));
    ConditionalHazard ch(eff, window, masked ? &masks : nullptr);
    try {
      const double tau = bisect_median([&](double x) { return ch.phi(x); }, eff.scaling.tau_scaler,
                                       cfg.bisect_tol, cfg.bisect_max_iter);
      times.push_back(window.anchor_time + tau);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NoBracket) {
        throw Error(e.kind(), e.message() + " (MC sample " + std::to_string(s) + ", event " +
                                  std::to_string(window.target_index) + ")");
      }
      ++unbracketed;
    }
    const auto [phi, lambda] = ch.phi_and_hazard(window.target_tau);
    dens[s] = std::log(std::max(lambda, kHazardFloor)) - phi;
  }
  require(!times.empty(), ErrorKind::NoBracket,
          "no MC sample reaches log 2 for event " + std::to_string(window.target_index));
  TimePrediction p = aggregate(std::move(times), cfg.k_levels);
  p.log_density = log_mean_exp(dens);
  p.unbracketed = unbracketed;
  return p;
}

TimePrediction predict_next(const NhpModel& model, const Window& window, const DropoutSpec& spec,
                            const PredictConfig& cfg, std::uint64_t seed) {
  spec.validate();
  cfg.validate();
  const EffectiveNhp eff = EffectiveNhp::from(model);
  return predict_next(eff, MaskShapes::of(model), window, spec, cfg, seed);
}

std::uint64_t step_seed(std::uint64_t seed, std::size_t event_index, bool persist) {
  return persist ? seed : derive_seed(seed, event_index);
}

std::vector<PredictionRecord> rolling_predict(const NhpModel& model, const EventSequence& seq,
                                              std::size_t begin, std::size_t end, const DropoutSpec& spec,
                                              const PredictConfig& cfg, std::uint64_t seed) {
  spec.validate();
  cfg.validate();
  const auto windows = make_windows(seq, model.truncation, begin, end);
  require(!windows.empty(), ErrorKind::TooShort,
          "sequence " + seq.id() + " has no predictable events in the requested range");
  const EffectiveNhp eff = EffectiveNhp::from(model);
  const MaskShapes shapes = MaskShapes::of(model);
  std::vector<PredictionRecord> out(windows.size());
  parallel_chunks(windows.size(), cfg.threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Window& w = windows[i];
      out[i] = {seq.id(), w.target_index, seq.times()[w.target_index],
                predict_next(eff, shapes, w, spec, cfg, step_seed(seed, w.target_index, cfg.persist_masks))};
    }
  });
  return out;
}

std::string k_label(double k) { return format_double(k); }

void write_predictions_csv(std::ostream& out, std::span<const PredictionRecord> records) {
  out << "sequence_id,event_index,actual_time,pred_mean,pred_sigma";
  if (!records.empty()) {
    for (double k : records.front().prediction.k_levels) out << ",lo_k" << k_label(k) << ",hi_k" << k_label(k);
  }
  out << '\n';
  for (const auto& r : records) {
    const auto& p = r.prediction;
    out << r.sequence_id << ',' << r.event_index << ',' << format_double(r.actual_time) << ','
        << format_double(p.mean) << ',' << format_double(p.sigma);
    for (const auto& [lo, hi] : p.bounds) out << ',' << format_double(lo) << ',' << format_double(hi);
    out << '\n';
  }
}

void write_density_csv(std::ostream& out, std::span<const PredictionRecord> records) {
  out << "sequence_id,event_index,log_density\n";
  for (const auto& r : records) {
    out << r.sequence_id << ',' << r.event_index << ',' << format_double(r.prediction.log_density) << '\n';
  }
}

std::vector<PredictionRecord> read_predictions_csv(std::istream& in) {
  const CsvTable t = read_table(in);
  const std::size_t c_id = t.column("sequence_id"), c_idx = t.column("event_index"),
                    c_act = t.column("actual_time"), c_mean = t.column("pred_mean"),
                    c_sig = t.column("pred_sigma");
  std::vector<double> ks;
  std::vector<std::pair<std::size_t, std::size_t>> cols;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    const std::string& h = t.header[c];
    if (h.rfind("lo_k", 0) != 0) continue;
    const std::string label = h.substr(4);
    ks.push_back(std::stod(label));
    cols.emplace_back(c, t.column("hi_k" + label));
  }
  std::vector<PredictionRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    PredictionRecord rec;
    rec.sequence_id = t.rows[r][c_id];
    rec.event_index = static_cast<std::size_t>(t.number(r, c_idx));
    rec.actual_time = t.number(r, c_act);
    rec.prediction.mean = t.number(r, c_mean);
    rec.prediction.sigma = t.number(r, c_sig);
    rec.prediction.k_levels = ks;
    for (auto [lo, hi] : cols) rec.prediction.bounds.emplace_back(t.number(r, lo), t.number(r, hi));
    out.push_back(std::move(rec));
  }
  return out;
}

void read_density_csv(std::istream& in, std::vector<PredictionRecord>& records) {
  const CsvTable t = read_table(in);
  const std::size_t c_id = t.column("sequence_id"), c_idx = t.column("event_index"),
                    c_ld = t.column("log_density");
  std::map<std::pair<std::string, std::size_t>, double> by_key;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    by_key[{t.rows[r][c_id], static_cast<std::size_t>(t.number(r, c_idx))}] = t.number(r, c_ld);
  }
  for (auto& rec : records) {
    auto it = by_key.find({rec.sequence_id, rec.event_index});
    require(it != by_key.end(), ErrorKind::MissingLevel,
            "no density for " + rec.sequence_id + " event " + std::to_string(rec.event_index));
    rec.prediction.log_density = it->second;
  }
}

}  // namespace bnhp
