#include "bnhp/baselines.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

#include "bnhp/error.hpp"

namespace bnhp {

void ExpHawkes::validate() const {
  require(std::isfinite(mu) && mu > 0.0, ErrorKind::InvalidParam, "mu must be > 0");
  require(std::isfinite(alpha) && alpha >= 0.0 && alpha < 1.0, ErrorKind::InvalidParam, "alpha must lie in [0, 1)");
  require(std::isfinite(beta) && beta > 0.0, ErrorKind::InvalidParam, "beta must be > 0");
}

namespace {

void check_observation(std::span<const double> times, double horizon) {
  require(std::isfinite(horizon), ErrorKind::InvalidParam, "horizon must be finite");
  for (std::size_t i = 0; i < times.size(); ++i) {
    require(i == 0 || times[i] > times[i - 1], ErrorKind::NonIncreasing, "event times must increase");
  }
  require(times.empty() || horizon >= times.back(), ErrorKind::InvalidParam, "horizon precedes the last event");
}

struct LogLikParts {
  double value = 0.0;
  std::array<double, 3> grad{};  // d/d(mu, alpha, beta)
};

LogLikParts loglik_parts(const ExpHawkes& p, std::span<const double> t, double T, bool with_grad) {
  LogLikParts out;
  double A = 0.0, B = 0.0;  // A_i and dA_i/dbeta
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (i > 0) {
      const double d = t[i] - t[i - 1];
      const double e = std::exp(-p.beta * d);
      B = e * (B - d * (1.0 + A));
      A = e * (1.0 + A);
    }
    const double lam = p.mu + p.alpha * p.beta * A;
    out.value += std::log(lam);
    const double tail = std::exp(-p.beta * (T - t[i]));
    out.value -= p.alpha * (1.0 - tail);
    if (with_grad) {
      out.grad[0] += 1.0 / lam;
      out.grad[1] += p.beta * A / lam - (1.0 - tail);
      out.grad[2] += p.alpha * (A + p.beta * B) / lam - p.alpha * (T - t[i]) * tail;
    }
  }
  out.value -= p.mu * T;
  out.grad[0] -= T;
  return out;
}

}  // namespace

double shp_loglik(const ExpHawkes& p, std::span<const double> times, double horizon) {
  p.validate();
  check_observation(times, horizon);
  return loglik_parts(p, times, horizon, false).value;
}

double shp_loglik_direct(const ExpHawkes& p, std::span<const double> times, double horizon) {
  p.validate();
  check_observation(times, horizon);
  double ll = -p.mu * horizon;
  for (std::size_t i = 0; i < times.size(); ++i) {
    double lam = p.mu;
    for (std::size_t j = 0; j < i; ++j) lam += p.alpha * p.beta * std::exp(-p.beta * (times[i] - times[j]));
    ll += std::log(lam) - p.alpha * (1.0 - std::exp(-p.beta * (horizon - times[i])));
  }
  return ll;
}

std::vector<double> shp_gradient(const ExpHawkes& p, std::span<const double> times, double horizon) {
  p.validate();
  check_observation(times, horizon);
  const auto g = loglik_parts(p, times, horizon, true).grad;
  return {g[0], g[1], g[2]};
}

// ---- SHP fit -------------------------------------------------------------------

namespace {

constexpr double kAlphaMax = 1.0 - 1e-9;

struct FitProblem {
  std::span<const Observation> data;
  double n = 0.0;

  ExpHawkes params(const std::array<double, 3>& u) const { return {std::exp(u[0]), u[1], std::exp(u[2])}; }

  /// Mean log-likelihood per event and its gradient in theta = (mu, alpha, beta).
  double eval(const ExpHawkes& p, std::array<double, 3>* grad) const {
    double v = 0.0;
    std::array<double, 3> g{};
    for (const auto& o : data) {
      auto parts = loglik_parts(p, o.times, o.horizon, grad != nullptr);
      v += parts.value;
      for (int k = 0; k < 3; ++k) g[k] += parts.grad[k];
    }
    if (grad) {
      for (int k = 0; k < 3; ++k) (*grad)[k] = g[k] / n;
    }
    return v / n;
  }

  /// Gradient in u = (log mu, alpha, log beta).
  std::array<double, 3> grad_u(const std::array<double, 3>& u) const {
    const ExpHawkes p = params(u);
    std::array<double, 3> g{};
    eval(p, &g);
    return {p.mu * g[0], g[1], p.beta * g[2]};
  }
};

bool alpha_blocked(double alpha, double g_alpha) {
  return (alpha <= 0.0 && g_alpha < 0.0) || (alpha >= kAlphaMax && g_alpha > 0.0);
}

double projected_norm(const ExpHawkes& p, const std::array<double, 3>& g) {
  const double ga = alpha_blocked(p.alpha, g[1]) ? 0.0 : g[1];
  return std::sqrt(g[0] * g[0] + ga * ga + g[2] * g[2]);
}

/// Solves M x = b for symmetric positive definite M (n <= 3) by Cholesky; false if not PD.
bool cholesky_solve(std::vector<std::vector<double>> M, std::vector<double> b, std::vector<double>& x) {
  const std::size_t n = b.size();
  for (std::size_t j = 0; j < n; ++j) {
    double d = M[j][j];
    for (std::size_t k = 0; k < j; ++k) d -= M[j][k] * M[j][k];
    if (!(d > 0.0)) return false;
    M[j][j] = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = M[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= M[i][k] * M[j][k];
      M[i][j] = s / M[j][j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= M[i][k] * b[k];
    b[i] /= M[i][i];
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) b[i] -= M[k][i] * b[k];
    b[i] /= M[i][i];
  }
  x = std::move(b);
  return true;
}

HawkesExpFit newton_from(const FitProblem& prob, ExpHawkes start, const ShpFitOptions& opt) {
  std::array<double, 3> u{std::log(start.mu), std::clamp(start.alpha, 0.0, kAlphaMax), std::log(start.beta)};
  auto f = [&](const std::array<double, 3>& v) { return prob.eval(prob.params(v), nullptr); };
  double fu = f(u);
  HawkesExpFit fit;
  for (std::size_t it = 0; it < opt.max_iter; ++it) {
    fit.iterations = it;
    const ExpHawkes p = prob.params(u);
    std::array<double, 3> gt{};
    prob.eval(p, &gt);
    if (projected_norm(p, gt) < opt.grad_tol) {
      fit.converged = true;
      break;
    }
    const auto g = prob.grad_u(u);
    // Hessian by differencing the analytic gradient; one-sided at the alpha bounds.
    std::array<std::array<double, 3>, 3> H{};
    for (int j = 0; j < 3; ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(u[j]));
      auto up = u, dn = u;
      up[j] += h;
      dn[j] -= h;
      double span = 2.0 * h;
      if (j == 1 && dn[1] < 0.0) {
        dn = u;
        span = h;
      } else if (j == 1 && up[1] > kAlphaMax) {
        up = u;
        span = h;
      }
      const auto gp = prob.grad_u(up), gm = prob.grad_u(dn);
      for (int i = 0; i < 3; ++i) H[i][j] = (gp[i] - gm[i]) / span;
    }
    std::vector<int> free{0, 2};
    if (!alpha_blocked(u[1], g[1])) free.insert(free.begin() + 1, 1);
    const std::size_t n = free.size();
    std::vector<double> rhs(n), d;
    double scale = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      rhs[a] = g[free[a]];
      for (std::size_t b = 0; b < n; ++b) scale = std::max(scale, std::abs(H[free[a]][free[b]]));
    }
    // Ascent direction from (-H + nu I) d = g, with nu raised until PD.
    double nu = 0.0;
    for (int tries = 0;; ++tries) {
      std::vector<std::vector<double>> M(n, std::vector<double>(n));
      for (std::size_t a = 0; a < n; ++a) {
        for (std::size_t b = 0; b < n; ++b) M[a][b] = -0.5 * (H[free[a]][free[b]] + H[free[b]][free[a]]);
        M[a][a] += nu;
      }
      if (cholesky_solve(M, rhs, d)) break;
      nu = nu == 0.0 ? 1e-8 * (1.0 + scale) : nu * 10.0;
      if (tries > 60) {
        d = rhs;  // fall back to the gradient
        break;
      }
    }
    std::array<double, 3> dir{};
    double slope = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
      dir[free[a]] = d[a];
      slope += d[a] * rhs[a];
    }
    // Keep steps in log mu / log beta moderate.
    const double big = std::max(std::abs(dir[0]), std::abs(dir[2]));
    double step = big > 2.0 ? 2.0 / big : 1.0;
    bool moved = false;
    for (int ls = 0; ls < 50; ++ls, step *= 0.5) {
      std::array<double, 3> cand{u[0] + step * dir[0], std::clamp(u[1] + step * dir[1], 0.0, kAlphaMax),
                                 u[2] + step * dir[2]};
      const double fc = f(cand);
      if (std::isfinite(fc) && fc >= fu + 1e-4 * step * slope) {
        u = cand;
        fu = fc;
        moved = true;
        break;
      }
    }
    if (!moved) {
      fit.iterations = it + 1;
      break;
    }
    fit.iterations = it + 1;
  }
  const ExpHawkes p = prob.params(u);
  std::array<double, 3> gt{};
  fu = prob.eval(p, &gt);
  fit.converged = projected_norm(p, gt) < opt.grad_tol;
  fit.params = p;
  fit.nll = -fu * prob.n;
  return fit;
}

}  // namespace

HawkesExpFit shp_fit(std::span<const Observation> data, const ShpFitOptions& options) {
  double n = 0.0, T = 0.0;
  for (const auto& o : data) {
    check_observation(o.times, o.horizon);
    n += static_cast<double>(o.times.size());
    T += o.horizon;
  }
  require(n >= static_cast<double>(options.min_events), ErrorKind::TooShort,
          "Hawkes fit needs at least " + std::to_string(options.min_events) + " events");
  require(T > 0.0, ErrorKind::InvalidParam, "observation window has zero length");
  FitProblem prob{data, n};
  const double rate = n / T;
  HawkesExpFit best;
  best.nll = std::numeric_limits<double>::infinity();
  for (double a0 : {0.1, 0.5}) {
    for (double b0 : {0.5, 5.0}) {
      HawkesExpFit fit = newton_from(prob, {(1.0 - a0) * rate, a0, b0 * rate}, options);
      if (fit.nll < best.nll || (fit.nll == best.nll && fit.converged && !best.converged)) best = fit;
    }
  }
  return best;
}

HawkesExpFit shp_fit(std::span<const double> times, double horizon, const ShpFitOptions& options) {
  const Observation o{times, horizon};
  return shp_fit(std::span<const Observation>(&o, 1), options);
}

// ---- ensemble ------------------------------------------------------------------

EnsembleConfig EnsembleConfig::log_spaced(std::size_t n, double lo, double hi) {
  require(n >= 1 && lo > 0.0 && hi >= lo, ErrorKind::InvalidParam, "invalid decay range");
  EnsembleConfig c;
  for (std::size_t i = 0; i < n; ++i) {
    const double f = n == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(n - 1);
    c.decays.push_back(lo * std::pow(hi / lo, f));
  }
  return c;
}

void EnsembleConfig::validate() const {
  require(!decays.empty(), ErrorKind::InvalidParam, "ensemble needs at least one decay");
  for (std::size_t i = 0; i < decays.size(); ++i) {
    require(std::isfinite(decays[i]) && decays[i] > 0.0, ErrorKind::InvalidParam, "decays must be positive");
    require(i == 0 || decays[i] > decays[i - 1], ErrorKind::InvalidParam, "decays must increase");
  }
}

namespace {

/// Sufficient statistics of the least-squares risk for one decay.
struct RiskStats {
  double T = 0.0, N = 0.0, G1 = 0.0, G2 = 0.0, SA = 0.0;
};

RiskStats risk_stats(double beta, std::span<const Observation> data) {
  RiskStats s;
  for (const auto& o : data) {
    check_observation(o.times, o.horizon);
    const auto& t = o.times;
    double A = 0.0, sumA = 0.0, tail = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      if (i > 0) A = std::exp(-beta * (t[i] - t[i - 1])) * (1.0 + A);
      sumA += A;
      tail += std::exp(-beta * (o.horizon - t[i]));
    }
    const double n = static_cast<double>(t.size());
    s.T += o.horizon;
    s.N += n;
    s.G1 += n - tail;
    s.G2 += 0.5 * beta * (n + 2.0 * sumA - tail * tail);
    s.SA += sumA;
  }
  return s;
}

double risk_value(const RiskStats& s, double mu, double alpha, double beta) {
  return mu * mu * s.T + 2.0 * mu * alpha * s.G1 + alpha * alpha * s.G2 - 2.0 * s.N * mu -
         2.0 * alpha * beta * s.SA;
}

}  // namespace

double eh_risk(const ExpHawkes& p, std::span<const Observation> data) {
  return risk_value(risk_stats(p.beta, data), p.mu, p.alpha, p.beta);
}

std::vector<HawkesExpFit> eh_fit(std::span<const Observation> data, const EnsembleConfig& cfg) {
  cfg.validate();
  double n = 0.0;
  for (const auto& o : data) n += static_cast<double>(o.times.size());
  require(n >= 50.0, ErrorKind::TooShort, "ensemble fit needs at least 50 events");
  std::vector<HawkesExpFit> out;
  for (double beta : cfg.decays) {
    const RiskStats s = risk_stats(beta, data);
    require(s.T > 0.0, ErrorKind::InvalidParam, "observation window has zero length");
    const double c2 = beta * s.SA;
    const double det = s.T * s.G2 - s.G1 * s.G1;
    require(s.G2 > 0.0 && det > 1e-12 * s.T * s.G2, ErrorKind::DegenerateDesign,
            "least-squares system is singular for decay " + format_double(beta));
    double mu = (s.N * s.G2 - s.G1 * c2) / det;
    double alpha = (s.T * c2 - s.G1 * s.N) / det;
    // Active set: clamp alpha to its box and re-solve for mu, then clamp mu.
    if (alpha < 0.0 || alpha > kAlphaMax) {
      alpha = std::clamp(alpha, 0.0, kAlphaMax);
      mu = (s.N - s.G1 * alpha) / s.T;
    }
    if (mu <= 0.0) {
      mu = 0.0;
      alpha = std::clamp(c2 / s.G2, 0.0, kAlphaMax);
    }
    // A zero baseline would leave Phi bounded; keep a tiny positive floor.
    mu = std::max(mu, 1e-12 * s.N / s.T);
    HawkesExpFit fit;
    fit.params = {mu, alpha, beta};
    fit.converged = true;
    fit.nll = risk_value(s, mu, alpha, beta);
    out.push_back(fit);
  }
  return out;
}

double hawkes_phi(const ExpHawkes& p, double excitation, double tau) {
  return p.mu * tau - p.alpha * excitation * std::expm1(-p.beta * tau);
}

double hawkes_hazard(const ExpHawkes& p, double excitation, double tau) {
  return p.mu + p.alpha * p.beta * excitation * std::exp(-p.beta * tau);
}

namespace {

/// sum_j exp(-beta (t_N - t_j)) over the history, including t_N itself.
double excitation_at_end(double beta, std::span<const double> history) {
  double s = 0.0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    s = (i == 0 ? 0.0 : std::exp(-beta * (history[i] - history[i - 1])) * s) + 1.0;
  }
  return s;
}

TimePrediction hawkes_step(std::span<const HawkesExpFit> fits, std::span<const double> excitation, double anchor,
                           double actual_tau, std::span<const double> k_levels, double start,
                           const PredictConfig& cfg) {
  std::vector<double> times, dens;
  for (std::size_t m = 0; m < fits.size(); ++m) {
    const ExpHawkes& p = fits[m].params;
    const double S = excitation[m];
    times.push_back(anchor + bisect_median([&](double x) { return hawkes_phi(p, S, x); }, start, cfg.bisect_tol,
                                           cfg.bisect_max_iter));
    if (std::isfinite(actual_tau)) {
      dens.push_back(std::log(hawkes_hazard(p, S, actual_tau)) - hawkes_phi(p, S, actual_tau));
    }
  }
  TimePrediction out = aggregate(std::move(times), k_levels);
  if (!dens.empty()) out.log_density = log_mean_exp(dens);
  return out;
}

}  // namespace

TimePrediction eh_predict(std::span<const HawkesExpFit> fits, std::span<const double> history,
                          std::span<const double> k_levels, double start, const PredictConfig& cfg) {
  require(!fits.empty(), ErrorKind::EmptyData, "no fitted members");
  std::vector<double> S;
  for (const auto& f : fits) S.push_back(excitation_at_end(f.params.beta, history));
  const double anchor = history.empty() ? 0.0 : history.back();
  return hawkes_step(fits, S, anchor, std::numeric_limits<double>::quiet_NaN(), k_levels, start, cfg);
}

std::vector<PredictionRecord> hawkes_rolling_predict(std::span<const HawkesExpFit> fits, const EventSequence& seq,
                                                     std::size_t begin, std::size_t end, double start,
                                                     const PredictConfig& cfg) {
  require(!fits.empty(), ErrorKind::EmptyData, "no fitted members");
  require(begin < end && end <= seq.size(), ErrorKind::TooShort, "no events to predict in " + seq.id());
  const auto& t = seq.times();
  std::vector<double> S(fits.size(), 0.0);
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < end; ++i) {
    if (i >= begin) {
      const double anchor = i == 0 ? 0.0 : t[i - 1];
      out.push_back({seq.id(), i, t[i], hawkes_step(fits, S, anchor, t[i] - anchor, cfg.k_levels, start, cfg)});
    }
    // Fold event i into each member's excitation.
    for (std::size_t m = 0; m < fits.size(); ++m) {
      S[m] = (i == 0 ? 0.0 : std::exp(-fits[m].params.beta * (t[i] - t[i - 1])) * S[m]) + 1.0;
    }
  }
  return out;
}

// ---- spatio-temporal baselines ---------------------------------------------------

double StHomogPoisson::area() const {
  return std::max(lat_max - lat_min, kMinExtent) * std::max(lon_max - lon_min, kMinExtent);
}

StHomogPoisson st_homog_poisson_fit(std::span<const EventSequence> train) {
  double n = 0.0, T = 0.0;
  StHomogPoisson m;
  m.lat_min = m.lon_min = std::numeric_limits<double>::infinity();
  m.lat_max = m.lon_max = -std::numeric_limits<double>::infinity();
  for (const auto& s : train) {
    if (s.empty()) continue;
    require(s.has_locations(), ErrorKind::SchemaError, "sequence " + s.id() + " has no lat/lon columns");
    n += static_cast<double>(s.size());
    T += s.times().back();
    for (const auto& x : *s.locations()) {
      m.lat_min = std::min(m.lat_min, x.lat);
      m.lat_max = std::max(m.lat_max, x.lat);
      m.lon_min = std::min(m.lon_min, x.lon);
      m.lon_max = std::max(m.lon_max, x.lon);
    }
  }
  require(n > 0.0 && T > 0.0, ErrorKind::EmptyData, "homogeneous Poisson fit needs training events");
  m.rate = n / T;
  return m;
}

std::vector<StRecord> st_homog_poisson_predict(const StHomogPoisson& model, const EventSequence& seq,
                                               std::size_t begin, std::size_t end,
                                               std::span<const double> k_levels) {
  require(seq.has_locations(), ErrorKind::SchemaError, "sequence " + seq.id() + " has no lat/lon columns");
  require(begin < end && end <= seq.size(), ErrorKind::TooShort, "no events to predict in " + seq.id());
  const auto& t = seq.times();
  const auto& locs = *seq.locations();
  const double c_lat = 0.5 * (model.lat_min + model.lat_max);
  const double c_lon = 0.5 * (model.lon_min + model.lon_max);
  std::vector<StRecord> out;
  for (std::size_t i = begin; i < end; ++i) {
    const double anchor = i == 0 ? 0.0 : t[i - 1];
    StRecord r{seq.id(), i, t[i], locs[i], {}};
    r.prediction.time = aggregate({anchor + std::numbers::ln2 / model.rate}, k_levels);
    r.prediction.time.log_density = model.log_density_time(t[i] - anchor);
    r.prediction.location.lat = aggregate({c_lat}, k_levels);
    r.prediction.location.lon = aggregate({c_lon}, k_levels);
    r.prediction.location.log_density = model.log_density_space();
    out.push_back(std::move(r));
  }
  return out;
}

StTrainResult st_nhp_train(const StModel& initial, std::span<const Window> train_windows,
                           std::span<const Window> valid_windows, const TrainConfig& cfg) {
  return st_train(initial, train_windows, valid_windows, DropoutSpec::none(), cfg);
}

std::vector<StRecord> st_nhp_predict(const StModel& model, const EventSequence& seq, std::size_t begin,
                                     std::size_t end, const PredictConfig& cfg, std::uint64_t seed) {
  return rolling_predict_st(model, seq, begin, end, DropoutSpec::none(), cfg, seed, true);
}

}  // namespace bnhp
