#include "bnhp/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <map>
#include <numbers>
#include <ostream>

#include "bnhp/error.hpp"
#include "bnhp/rng.hpp"
#include "bnhp/table.hpp"

namespace bnhp {

using ad::Tape;
using ad::Var;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;  // log(2 pi)

void fill_glorot(Tensor& t, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
  for (double& v : t.data) v = r * (2.0 * rng.uniform() - 1.0);
}

void require_locations(const Window& w) {
  require(w.has_locations() && !w.prev_locations.empty(), ErrorKind::SchemaError,
          "spatial model needs lat and lon for every event (event " + std::to_string(w.target_index) + ")");
}

std::vector<double> standardized(const SpatialScaling& s, std::span<const Location> prev) {
  std::vector<double> x;
  x.reserve(2 * prev.size());
  for (const auto& p : prev) {
    x.push_back((p.lat - s.mean_lat) / s.std_lat);
    x.push_back((p.lon - s.mean_lon) / s.std_lon);
  }
  return x;
}

std::span<const double> spatial_mask(const MaskSet* m) {
  if (!m || m->spatial.empty()) return {};
  return m->spatial.front();
}

struct HeadBinding {
  Var w1, b1, w2, b2;
};

HeadBinding bind_head(Tape& tape, const SpatialHead& head, std::span<const double> flat, std::span<double> sink) {
  const bool grad = !sink.empty();
  std::size_t pos = 0;
  auto block = [&](std::size_t n) {
    std::span<const double> v = flat.subspan(pos, n);
    Var out = grad ? tape.parameter(v, sink.subspan(pos, n)) : tape.external(v);
    pos += n;
    return out;
  };
  HeadBinding b;
  b.w1 = block(head.w1.size());
  b.b1 = block(head.b1.size());
  b.w2 = block(head.w2.size());
  b.b2 = block(head.b2.size());
  return b;
}

struct HeadVars {
  Var mu;     ///< (lat, lon)
  Var sigma;  ///< (lat, lon)
};

HeadVars head_on_tape(Tape& tape, const SpatialHead& head, const HeadBinding& b, Var h,
                      std::span<const Location> prev, const MaskSet* masks) {
  const auto& s = head.scaling;
  Var x = tape.concat(h, tape.constant(standardized(s, prev)));
  require(tape.size(x) == head.w1.rows, ErrorKind::ShapeMismatch,
          "spatial head input width does not match h size + 2M");
  Var z = tape.matvec(x, b.w1, head.units());
  if (auto m = spatial_mask(masks); !m.empty()) z = tape.mul(z, tape.external(m));
  z = tape.tanh(tape.add(z, b.b1));
  Var out = tape.add(tape.matvec(z, b.w2, 4), b.b2);
  const Location& last = prev.back();
  const double scale[2] = {s.std_lat, s.std_lon};
  const double base[2] = {last.lat, last.lon};
  Var stds = tape.constant(scale);
  Var mu = tape.add(tape.constant(base), tape.mul(stds, tape.slice(out, 0, 2)));
  Var sigma = tape.shift(tape.mul(stds, tape.softplus(tape.slice(out, 2, 2))), head.sigma_floor);
  return {mu, sigma};
}

Var gaussian_term(Tape& tape, const HeadVars& g, const Location& x) {
  const double xv[2] = {x.lat, x.lon};
  Var z = tape.mul(tape.sub(tape.constant(xv), g.mu), tape.reciprocal(g.sigma));
  Var per_dim = tape.sub(tape.scale(tape.square(z), -0.5), tape.log(g.sigma));
  return tape.shift(tape.sum(per_dim), -kLog2Pi);
}

Gaussian2 read_gaussian(const Tape& tape, const HeadVars& g) {
  auto mu = tape.value(g.mu);
  auto sd = tape.value(g.sigma);
  return {mu[0], mu[1], sd[0], sd[1]};
}

}  // namespace

// ---- model -------------------------------------------------------------------

SpatialHead SpatialHead::initialize(std::size_t hidden, std::size_t truncation, std::size_t units,
                                    SpatialScaling scaling, std::uint64_t seed) {
  require(units >= 1 && truncation >= 1, ErrorKind::InvalidParam, "invalid spatial head shape");
  require(scaling.std_lat > 0.0 && scaling.std_lon > 0.0, ErrorKind::InvalidParam,
          "spatial scaling needs positive std");
  Rng rng(seed);
  SpatialHead h;
  h.w1 = Tensor(hidden + 2 * truncation, units);
  h.b1 = Tensor(1, units);
  h.w2 = Tensor(units, 4);
  h.b2 = Tensor(1, 4);
  fill_glorot(h.w1, rng);
  fill_glorot(h.w2, rng);
  h.scaling = scaling;
  return h;
}

std::vector<double> SpatialHead::flatten() const {
  std::vector<double> f;
  f.reserve(parameter_count());
  for (const Tensor* t : {&w1, &b1, &w2, &b2}) f.insert(f.end(), t->data.begin(), t->data.end());
  return f;
}

void SpatialHead::unflatten(std::span<const double> flat) {
  require(flat.size() == parameter_count(), ErrorKind::ShapeMismatch, "spatial parameter size mismatch");
  std::size_t pos = 0;
  for (Tensor* t : {&w1, &b1, &w2, &b2}) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(pos), t->size(), t->data.begin());
    pos += t->size();
  }
}

std::size_t SpatialHead::parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

StModel StModel::initialize(const NhpArchitecture& arch, InputScaling scaling, SpatialScaling spatial_scaling,
                            std::uint64_t seed, std::size_t spatial_units) {
  StModel m;
  m.temporal = NhpModel::initialize(arch, scaling, seed);
  m.spatial = SpatialHead::initialize(arch.hidden, arch.truncation, spatial_units, spatial_scaling,
                                      derive_seed(seed, 1));
  return m;
}

std::vector<double> StModel::flatten() const {
  auto f = temporal.flatten();
  auto s = spatial.flatten();
  f.insert(f.end(), s.begin(), s.end());
  return f;
}

void StModel::unflatten(std::span<const double> flat) {
  require(flat.size() == parameter_count(), ErrorKind::ShapeMismatch, "parameter vector size mismatch");
  const std::size_t n = temporal.parameter_count();
  temporal.unflatten(flat.first(n));
  spatial.unflatten(flat.subspan(n));
}

std::size_t StModel::parameter_count() const { return temporal.parameter_count() + spatial.parameter_count(); }

MaskShapes mask_shapes(const StModel& model) {
  MaskShapes s = MaskShapes::of(model.temporal);
  s.spatial = {model.spatial.units()};
  return s;
}

SpatialScaling fit_spatial_scaling(std::span<const Window> train) {
  require(!train.empty(), ErrorKind::EmptyData, "no training windows");
  double n = 0.0, sl = 0.0, so = 0.0, ql = 0.0, qo = 0.0;
  for (const auto& w : train) {
    require_locations(w);
    const Location& x = *w.target_location;
    n += 1.0;
    sl += x.lat;
    so += x.lon;
  }
  SpatialScaling s;
  s.mean_lat = sl / n;
  s.mean_lon = so / n;
  for (const auto& w : train) {
    const Location& x = *w.target_location;
    ql += (x.lat - s.mean_lat) * (x.lat - s.mean_lat);
    qo += (x.lon - s.mean_lon) * (x.lon - s.mean_lon);
  }
  // A constant coordinate would give std 0; fall back to 1 degree.
  s.std_lat = ql > 0.0 ? std::sqrt(ql / n) : 1.0;
  s.std_lon = qo > 0.0 ? std::sqrt(qo / n) : 1.0;
  return s;
}

double gaussian_log_density(const Gaussian2& g, const Location& x) {
  require(g.sigma_lat > 0.0 && g.sigma_lon > 0.0, ErrorKind::InvalidParam, "sigma must be positive");
  const double zl = (x.lat - g.mu_lat) / g.sigma_lat;
  const double zo = (x.lon - g.mu_lon) / g.sigma_lon;
  const double v = -kLog2Pi - std::log(g.sigma_lat) - std::log(g.sigma_lon) - 0.5 * (zl * zl + zo * zo);
  require(std::isfinite(v), ErrorKind::NonFinite, "spatial log density is not finite");
  return v;
}

Gaussian2 spatial_gaussian(const SpatialHead& head, std::span<const double> h,
                           std::span<const Location> prev_locs, const MaskSet* masks) {
  require(!prev_locs.empty(), ErrorKind::SchemaError, "spatial head needs previous locations");
  const auto flat = head.flatten();
  Tape tape;
  HeadBinding b = bind_head(tape, head, flat, {});
  HeadVars g = head_on_tape(tape, head, b, tape.external(h), prev_locs, masks);
  return read_gaussian(tape, g);
}

double spatial_log_density(const SpatialHead& head, std::span<const double> h,
                           std::span<const Location> prev_locs, const Location& x, const MaskSet* masks) {
  return gaussian_log_density(spatial_gaussian(head, h, prev_locs, masks), x);
}

double spatial_l2_penalty(const SpatialHead& head, std::vector<double>* grad) {
  const auto flat = head.flatten();
  if (grad) grad->assign(flat.size(), 0.0);
  double s = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    s += flat[i] * flat[i];
    if (grad) (*grad)[i] = 2.0 * flat[i];
  }
  return s;
}

// ---- likelihood ----------------------------------------------------------------

namespace {

struct StPartial {
  double temporal = 0.0;
  double spatial = 0.0;
  std::size_t clamped = 0;
  std::vector<double> eff_grad;
  std::vector<double> head_grad;
};

StPartial st_sum(const EffectiveNhp& eff, const SpatialHead& head, std::span<const double> head_flat,
                 std::span<const Window> windows, const std::function<const MaskSet*(std::size_t)>& mask_of,
                 bool with_grad, std::size_t threads) {
  threads = std::max<std::size_t>(1, std::min(threads, windows.size()));
  std::vector<StPartial> parts(threads);
  parallel_chunks(windows.size(), threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    StPartial& p = parts[c];
    if (with_grad) {
      p.eff_grad.assign(eff.values.size(), 0.0);
      p.head_grad.assign(head_flat.size(), 0.0);
    }
    Tape tape;
    for (std::size_t i = b; i < e; ++i) {
      const Window& w = windows[i];
      require_locations(w);
      require(w.taus.size() == eff.truncation, ErrorKind::ShapeMismatch,
              "window length differs from truncation depth");
      const MaskSet* m = mask_of(i);
      tape.clear();
      NhpBinding tb = bind_params(tape, eff, p.eff_grad);
      HeadBinding hb = bind_head(tape, head, head_flat, p.head_grad);
      Var h = encode_on_tape(tape, eff, tb, w.taus, m);
      bool clamped = false;
      Var t_term = window_log_density(tape, eff, tb, h, w.target_tau, w.anchor_time, m, &clamped);
      Var s_term = gaussian_term(tape, head_on_tape(tape, head, hb, h, w.prev_locations, m), *w.target_location);
      const double tv = tape.scalar(t_term);
      const double sv = tape.scalar(s_term);
      require(std::isfinite(tv) && std::isfinite(sv), ErrorKind::NonFinite,
              "log-likelihood term for event " + std::to_string(w.target_index) + " is not finite");
      p.temporal += tv;
      p.spatial += sv;
      p.clamped += clamped ? 1 : 0;
      if (with_grad) tape.backward(tape.add(t_term, s_term));
    }
  });
  StPartial total = std::move(parts[0]);
  for (std::size_t c = 1; c < parts.size(); ++c) {
    total.temporal += parts[c].temporal;
    total.spatial += parts[c].spatial;
    total.clamped += parts[c].clamped;
    for (std::size_t i = 0; i < total.eff_grad.size(); ++i) total.eff_grad[i] += parts[c].eff_grad[i];
    for (std::size_t i = 0; i < total.head_grad.size(); ++i) total.head_grad[i] += parts[c].head_grad[i];
  }
  return total;
}

std::vector<double> st_raw_gradient(const StModel& model, const EffectiveNhp& eff, const StPartial& p) {
  auto g = eff.raw_gradient(model.temporal, p.eff_grad);
  g.insert(g.end(), p.head_grad.begin(), p.head_grad.end());
  return g;
}

}  // namespace

StLikelihood st_log_likelihood(const StModel& model, std::span<const Window> windows,
                               std::span<const MaskSet> masks, bool with_gradient, std::size_t threads) {
  require(!windows.empty(), ErrorKind::EmptyData, "st_log_likelihood needs at least one window");
  require(masks.empty() || masks.size() == 1 || masks.size() == windows.size(), ErrorKind::ShapeMismatch,
          "masks must be empty, shared, or one per window");
  const EffectiveNhp eff = EffectiveNhp::from(model.temporal);
  const auto head_flat = model.spatial.flatten();
  auto mask_of = [&](std::size_t i) -> const MaskSet* {
    return masks.empty() ? nullptr : &masks[masks.size() == 1 ? 0 : i];
  };
  StPartial p = st_sum(eff, model.spatial, head_flat, windows, mask_of, with_gradient, threads);
  StLikelihood out;
  out.temporal = p.temporal;
  out.spatial = p.spatial;
  out.value = p.temporal + p.spatial;
  out.clamped = p.clamped;
  if (with_gradient) out.gradient = st_raw_gradient(model, eff, p);
  return out;
}

// ---- training ------------------------------------------------------------------

namespace {

constexpr std::uint64_t kValidationStream = 0x76616c6964ULL;

class StObjective final : public Objective {
 public:
  StObjective(const StModel& m, std::span<const Window> train, std::span<const Window> valid,
              const DropoutSpec& spec, const TrainConfig& cfg)
      : model_(m), train_(train), valid_(valid), spec_(spec), shapes_(mask_shapes(m)), cfg_(cfg) {}

  std::size_t train_size() const override { return train_.size(); }
  std::vector<double> parameters() const override { return model_.flatten(); }
  void set_parameters(std::span<const double> flat) override { model_.unflatten(flat); }

  BatchLoss batch_loss(std::span<const std::size_t> examples, std::uint64_t mask_seed) override {
    const EffectiveNhp eff = EffectiveNhp::from(model_.temporal);
    const auto head_flat = model_.spatial.flatten();
    batch_.clear();
    masks_.clear();
    for (std::size_t k = 0; k < examples.size(); ++k) {
      batch_.push_back(train_[examples[k]]);
      masks_.push_back(sample_masks(spec_, shapes_, derive_seed(mask_seed, k)));
    }
    StPartial p = st_sum(eff, model_.spatial, head_flat, batch_, [&](std::size_t i) { return &masks_[i]; },
                         true, cfg_.threads);
    BatchLoss bl;
    bl.nll = -(p.temporal + p.spatial);
    bl.clamped = p.clamped;
    bl.gradient = st_raw_gradient(model_, eff, p);
    for (double& g : bl.gradient) g = -g;
    return bl;
  }

  double penalty(std::vector<double>* grad) const override {
    std::vector<double> tg, sg;
    const double v = l2_penalty(model_.temporal, grad ? &tg : nullptr) +
                     spatial_l2_penalty(model_.spatial, grad ? &sg : nullptr);
    if (grad) {
      *grad = std::move(tg);
      grad->insert(grad->end(), sg.begin(), sg.end());
    }
    return v;
  }

  double validation_mnll() override {
    if (valid_.empty()) return std::numeric_limits<double>::quiet_NaN();
    const bool masked = !spec_.deterministic();
    if (masked && valid_masks_.empty()) {
      const std::uint64_t s = derive_seed(cfg_.seed, kValidationStream);
      for (std::size_t i = 0; i < valid_.size(); ++i) valid_masks_.push_back(sample_masks(spec_, shapes_, derive_seed(s, i)));
    }
    const EffectiveNhp eff = EffectiveNhp::from(model_.temporal);
    const auto head_flat = model_.spatial.flatten();
    StPartial p = st_sum(eff, model_.spatial, head_flat, valid_,
                         [&](std::size_t i) { return masked ? &valid_masks_[i] : nullptr; }, false, cfg_.threads);
    return -(p.temporal + p.spatial) / static_cast<double>(valid_.size());
  }

  const StModel& model() const { return model_; }

 private:
  StModel model_;
  std::span<const Window> train_;
  std::span<const Window> valid_;
  DropoutSpec spec_;
  MaskShapes shapes_;
  TrainConfig cfg_;
  std::vector<Window> batch_;
  std::vector<MaskSet> masks_;
  std::vector<MaskSet> valid_masks_;
};

}  // namespace

StTrainResult st_train(const StModel& initial, std::span<const Window> train_windows,
                       std::span<const Window> valid_windows, const DropoutSpec& spec, const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (cfg.epochs == 0) return {initial, {}};
  require(!train_windows.empty(), ErrorKind::EmptyData, "training needs at least one window");
  for (const auto& w : train_windows) require_locations(w);
  StObjective obj(initial, train_windows, valid_windows, spec, cfg);
  LossTrace trace = optimize(obj, cfg);
  return {obj.model(), std::move(trace)};
}

// ---- prediction ----------------------------------------------------------------

namespace {

StPrediction st_step(const StModel& model, const EffectiveNhp& eff, std::span<const double> head_flat,
                     const MaskShapes& shapes, const Window& w, const DropoutSpec& spec, const PredictConfig& cfg,
                     std::uint64_t seed, bool mu_only, bool want_time) {
  require_locations(w);
  const std::size_t S = cfg.samples;
  std::vector<double> times, lats(S), lons(S), t_dens(S), s_dens(S);
  std::size_t unbracketed = 0;
  Tape tape;
  for (std::size_t s = 0; s < S; ++s) {
    MaskSet masks;
    const bool masked = !spec.deterministic();
    if (masked) masks = sample_masks(spec, shapes, derive_seed(seed, s));
    const MaskSet* m = masked ? &masks : nullptr;
    ConditionalHazard ch(eff, w, m);
    if (want_time) {
      try {
        times.push_back(w.anchor_time + bisect_median([&](double x) { return ch.phi(x); },
                                                      eff.scaling.tau_scaler, cfg.bisect_tol,
                                                      cfg.bisect_max_iter));
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::NoBracket) throw;
        ++unbracketed;
      }
      const auto [phi, lambda] = ch.phi_and_hazard(w.target_tau);
      t_dens[s] = std::log(std::max(lambda, kHazardFloor)) - phi;
    }
    tape.clear();
    HeadBinding hb = bind_head(tape, model.spatial, head_flat, {});
    const Gaussian2 g =
        read_gaussian(tape, head_on_tape(tape, model.spatial, hb, tape.external(ch.hidden()), w.prev_locations, m));
    if (mu_only) {
      lats[s] = g.mu_lat;
      lons[s] = g.mu_lon;
    } else {
      Rng rng(derive_seed(derive_seed(seed, s), 1));
      lats[s] = g.mu_lat + g.sigma_lat * rng.normal();
      lons[s] = g.mu_lon + g.sigma_lon * rng.normal();
    }
    s_dens[s] = gaussian_log_density(g, *w.target_location);
  }
  StPrediction out;
  if (want_time) {
    require(!times.empty(), ErrorKind::NoBracket,
            "no MC sample reaches log 2 for event " + std::to_string(w.target_index));
    out.time = aggregate(std::move(times), cfg.k_levels);
    out.time.log_density = log_mean_exp(t_dens);
    out.time.unbracketed = unbracketed;
  }
  out.location.lat = aggregate(std::move(lats), cfg.k_levels);
  out.location.lon = aggregate(std::move(lons), cfg.k_levels);
  out.location.log_density = log_mean_exp(s_dens);
  return out;
}

}  // namespace

LocationPrediction predict_location(const StModel& model, const Window& window, const DropoutSpec& spec,
                                    const PredictConfig& cfg, std::uint64_t seed, bool mu_only) {
  spec.validate();
  cfg.validate();
  const EffectiveNhp eff = EffectiveNhp::from(model.temporal);
  return st_step(model, eff, model.spatial.flatten(), mask_shapes(model), window, spec, cfg, seed, mu_only, false)
      .location;
}

StPrediction predict_st(const StModel& model, const Window& window, const DropoutSpec& spec,
                        const PredictConfig& cfg, std::uint64_t seed, bool mu_only) {
  spec.validate();
  cfg.validate();
  const EffectiveNhp eff = EffectiveNhp::from(model.temporal);
  return st_step(model, eff, model.spatial.flatten(), mask_shapes(model), window, spec, cfg, seed, mu_only, true);
}

std::vector<StRecord> rolling_predict_st(const StModel& model, const EventSequence& seq, std::size_t begin,
                                         std::size_t end, const DropoutSpec& spec, const PredictConfig& cfg,
                                         std::uint64_t seed, bool mu_only) {
  spec.validate();
  cfg.validate();
  require(seq.has_locations(), ErrorKind::SchemaError, "sequence " + seq.id() + " has no lat/lon columns");
  const auto windows = make_windows(seq, model.temporal.truncation, begin, end);
  require(!windows.empty(), ErrorKind::TooShort,
          "sequence " + seq.id() + " has no predictable events in the requested range");
  const EffectiveNhp eff = EffectiveNhp::from(model.temporal);
  const auto head_flat = model.spatial.flatten();
  const MaskShapes shapes = mask_shapes(model);
  std::vector<StRecord> out(windows.size());
  parallel_chunks(windows.size(), cfg.threads, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) {
      const Window& w = windows[i];
      out[i] = {seq.id(), w.target_index, seq.times()[w.target_index], *w.target_location,
                st_step(model, eff, head_flat, shapes, w, spec, cfg,
                        step_seed(seed, w.target_index, cfg.persist_masks), mu_only, true)};
    }
  });
  return out;
}

// ---- files -------------------------------------------------------------------

void write_st_predictions_csv(std::ostream& out, std::span<const StRecord> records) {
  std::vector<double> ks;
  if (!records.empty()) ks = records.front().prediction.time.k_levels;
  out << "sequence_id,event_index,actual_time,pred_mean,pred_sigma";
  for (double k : ks) out << ",lo_k" << k_label(k) << ",hi_k" << k_label(k);
  out << ",actual_lat,actual_lon,pred_lat,pred_lon,sigma_lat,sigma_lon";
  for (double k : ks) {
    out << ",lat_lo_k" << k_label(k) << ",lat_hi_k" << k_label(k) << ",lon_lo_k" << k_label(k) << ",lon_hi_k"
        << k_label(k);
  }
  out << '\n';
  auto f = [](double v) { return format_double(v); };
  for (const auto& r : records) {
    const auto& t = r.prediction.time;
    const auto& lat = r.prediction.location.lat;
    const auto& lon = r.prediction.location.lon;
    out << r.sequence_id << ',' << r.event_index << ',' << f(r.actual_time) << ',' << f(t.mean) << ','
        << f(t.sigma);
    for (const auto& [lo, hi] : t.bounds) out << ',' << f(lo) << ',' << f(hi);
    out << ',' << f(r.actual_location.lat) << ',' << f(r.actual_location.lon) << ',' << f(lat.mean) << ','
        << f(lon.mean) << ',' << f(lat.sigma) << ',' << f(lon.sigma);
    for (std::size_t i = 0; i < lat.bounds.size(); ++i) {
      out << ',' << f(lat.bounds[i].first) << ',' << f(lat.bounds[i].second) << ',' << f(lon.bounds[i].first)
          << ',' << f(lon.bounds[i].second);
    }
    out << '\n';
  }
}

void write_st_density_csv(std::ostream& out, std::span<const StRecord> records) {
  out << "sequence_id,event_index,log_density_time,log_density_space\n";
  for (const auto& r : records) {
    out << r.sequence_id << ',' << r.event_index << ',' << format_double(r.prediction.time.log_density) << ','
        << format_double(r.prediction.location.log_density) << '\n';
  }
}

std::vector<StRecord> read_st_predictions_csv(std::istream& in) {
  const CsvTable t = read_table(in);
  const std::size_t c_id = t.column("sequence_id"), c_idx = t.column("event_index"),
                    c_act = t.column("actual_time"), c_mean = t.column("pred_mean"), c_sig = t.column("pred_sigma"),
                    c_alat = t.column("actual_lat"), c_alon = t.column("actual_lon"), c_plat = t.column("pred_lat"),
                    c_plon = t.column("pred_lon"), c_slat = t.column("sigma_lat"), c_slon = t.column("sigma_lon");
  struct KCols {
    double k;
    std::size_t lo, hi, lat_lo, lat_hi, lon_lo, lon_hi;
  };
  std::vector<KCols> ks;
  for (const auto& h : t.header) {
    if (h.rfind("lo_k", 0) != 0) continue;
    const std::string l = h.substr(4);
    ks.push_back({std::stod(l), t.column("lo_k" + l), t.column("hi_k" + l), t.column("lat_lo_k" + l),
                  t.column("lat_hi_k" + l), t.column("lon_lo_k" + l), t.column("lon_hi_k" + l)});
  }
  std::vector<StRecord> out;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    StRecord rec;
    rec.sequence_id = t.rows[r][c_id];
    rec.event_index = static_cast<std::size_t>(t.number(r, c_idx));
    rec.actual_time = t.number(r, c_act);
    rec.actual_location = {t.number(r, c_alat), t.number(r, c_alon)};
    auto& tp = rec.prediction.time;
    auto& lat = rec.prediction.location.lat;
    auto& lon = rec.prediction.location.lon;
    tp.mean = t.number(r, c_mean);
    tp.sigma = t.number(r, c_sig);
    lat.mean = t.number(r, c_plat);
    lat.sigma = t.number(r, c_slat);
    lon.mean = t.number(r, c_plon);
    lon.sigma = t.number(r, c_slon);
    for (const auto& k : ks) {
      tp.k_levels.push_back(k.k);
      lat.k_levels.push_back(k.k);
      lon.k_levels.push_back(k.k);
      tp.bounds.emplace_back(t.number(r, k.lo), t.number(r, k.hi));
      lat.bounds.emplace_back(t.number(r, k.lat_lo), t.number(r, k.lat_hi));
      lon.bounds.emplace_back(t.number(r, k.lon_lo), t.number(r, k.lon_hi));
    }
    out.push_back(std::move(rec));
  }
  return out;
}

void read_st_density_csv(std::istream& in, std::vector<StRecord>& records) {
  const CsvTable t = read_table(in);
  const std::size_t c_id = t.column("sequence_id"), c_idx = t.column("event_index"),
                    c_t = t.column("log_density_time"), c_s = t.column("log_density_space");
  std::map<std::pair<std::string, std::size_t>, std::pair<double, double>> by_key;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    by_key[{t.rows[r][c_id], static_cast<std::size_t>(t.number(r, c_idx))}] = {t.number(r, c_t), t.number(r, c_s)};
  }
  for (auto& rec : records) {
    auto it = by_key.find({rec.sequence_id, rec.event_index});
    require(it != by_key.end(), ErrorKind::MissingLevel,
            "no density for " + rec.sequence_id + " event " + std::to_string(rec.event_index));
    rec.prediction.time.log_density = it->second.first;
    rec.prediction.location.log_density = it->second.second;
  }
}

MetricsReport evaluate_st(std::span<const StRecord> records, const std::string& model,
                          std::span<const double> quantiles) {
  require(!records.empty(), ErrorKind::EmptyData, "no predictions to evaluate");
  std::vector<PredictionRecord> time;
  std::vector<TimePrediction> lat, lon;
  std::vector<double> alat, alon, plat, plon, sd;
  bool have_density = true;
  for (const auto& r : records) {
    time.push_back({r.sequence_id, r.event_index, r.actual_time, r.prediction.time});
    lat.push_back(r.prediction.location.lat);
    lon.push_back(r.prediction.location.lon);
    alat.push_back(r.actual_location.lat);
    alon.push_back(r.actual_location.lon);
    plat.push_back(r.prediction.location.lat.mean);
    plon.push_back(r.prediction.location.lon.mean);
    sd.push_back(r.prediction.location.log_density);
    have_density = have_density && !std::isnan(r.prediction.location.log_density);
  }
  MetricsReport rep = evaluate_time(time, model, quantiles);
  rep.mae_lat = mae(plat, alat);
  rep.mae_lon = mae(plon, alon);
  for (double k : records.front().prediction.location.lat.k_levels) {
    rep.pic_spatial.emplace_back(k, pic_at_k_spatial(lat, lon, alat, alon, k));
  }
  if (have_density) {
    rep.mnll_spatial = mnll(sd);
    rep.mnll = rep.mnll_temporal + rep.mnll_spatial;
  } else {
    rep.mnll = kNaN;
  }
  return rep;
}

}  // namespace bnhp
