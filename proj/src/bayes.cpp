#include "bnhp/bayes.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <thread>

#include "bnhp/error.hpp"
#include "bnhp/events.hpp"
#include "bnhp/rng.hpp"

namespace bnhp {

namespace {

void check_prob(double p, const char* name) {
  require(std::isfinite(p) && p >= 0.0 && p < 1.0, ErrorKind::InvalidParam,
          std::string(name) + " must lie in [0, 1)");
}

std::vector<double> draw(Rng& rng, std::size_t n, double p, bool keep_one) {
  std::vector<double> m(n, 1.0);
  if (p == 0.0 || n == 0) return m;
  for (;;) {
    bool any = false;
    for (double& v : m) {
      v = rng.bernoulli(p) ? 0.0 : 1.0;
      any = any || v != 0.0;
    }
    if (any || !keep_one) return m;
  }
}

}  // namespace

void DropoutSpec::validate() const {
  check_prob(p_fnn, "p_fnn");
  check_prob(p_rnn_input, "p_rnn_input");
  check_prob(p_rnn_recurrent, "p_rnn_recurrent");
  require(std::isfinite(sigma_r) && sigma_r >= 0.0, ErrorKind::InvalidParam, "sigma_r must be >= 0");
}

MaskShapes MaskShapes::of(const NhpModel& model) {
  MaskShapes s;
  const auto& layers = model.hazard_net.layers;
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) s.fnn.push_back(layers[l].raw_weights.cols);
  s.rnn_input = model.encoder.input_weights.rows;
  s.rnn_recurrent = model.encoder.recurrent_weights.rows;
  return s;
}

MaskSet sample_masks(const DropoutSpec& spec, const MaskShapes& shapes, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  MaskSet m;
  m.seed = seed;
  for (std::size_t w : shapes.fnn) m.fnn.push_back(draw(rng, w, spec.p_fnn, true));
  m.rnn_input = draw(rng, shapes.rnn_input, spec.p_rnn_input, false);
  m.rnn_recurrent = draw(rng, shapes.rnn_recurrent, spec.p_rnn_recurrent, false);
  for (std::size_t w : shapes.spatial) m.spatial.push_back(draw(rng, w, spec.p_fnn, true));
  return m;
}

void TrainConfig::validate() const {
  require(std::isfinite(lr) && lr >= 0.0, ErrorKind::InvalidParam, "lr must be >= 0");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, ErrorKind::InvalidParam,
          "beta1 and beta2 must lie in [0, 1)");
  require(eps > 0.0, ErrorKind::InvalidParam, "eps must be > 0");
  require(std::isfinite(l2_lambda) && l2_lambda >= 0.0, ErrorKind::InvalidParam, "l2_lambda must be >= 0");
  require(batch_size >= 1, ErrorKind::InvalidParam, "batch_size must be >= 1");
  require(clip_norm >= 0.0, ErrorKind::InvalidParam, "clip_norm must be >= 0");
  require(threads >= 1, ErrorKind::InvalidParam, "threads must be >= 1");
}

// ---- optimizer ---------------------------------------------------------------

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(n, 0.0), v_(n, 0.0) {}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  require(params.size() == m_.size() && grad.size() == m_.size(), ErrorKind::ShapeMismatch,
          "Adam parameter size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

// ---- losses ------------------------------------------------------------------

double l2_penalty(const NhpModel& model, std::vector<double>* grad) {
  const auto flat = model.flatten();
  if (grad) grad->assign(flat.size(), 0.0);
  double sum = 0.0;
  std::size_t pos = 0;
  auto plain = [&](const Tensor& t) {
    for (double v : t.data) {
      sum += v * v;
      if (grad) (*grad)[pos] += 2.0 * v;
      ++pos;
    }
  };
  plain(model.encoder.input_weights);
  plain(model.encoder.recurrent_weights);
  plain(model.encoder.bias);
  for (const auto& l : model.hazard_net.layers) {
    for (double r : l.raw_weights.data) {
      const double w = ad::softplus(r);
      sum += w * w;
      if (grad) (*grad)[pos] += 2.0 * w * ad::sigmoid(r);
      ++pos;
    }
    plain(l.bias);
  }
  return sum;
}

void parallel_chunks(std::size_t n, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    fn(0, 0, n);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t c = 1; c < threads; ++c) {
      pool.emplace_back([&, c] {
        try {
          fn(c, n * c / threads, n * (c + 1) / threads);
        } catch (...) {
          errors[c] = std::current_exception();
        }
      });
    }
    try {
      fn(0, 0, n / threads);
    } catch (...) {
      errors[0] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

namespace {

struct Partial {
  double value = 0.0;
  std::size_t clamped = 0;
  std::vector<double> grad;
};

/// Sum of window log-densities under per-window masks, in effective space.
/// Chunk partials are reduced in chunk order, so results depend only on `threads`.
Partial nhp_sum(const EffectiveNhp& eff, std::span<const Window> windows,
                const std::function<const MaskSet*(std::size_t)>& mask_of, bool with_grad,
                std::size_t threads) {
  threads = std::max<std::size_t>(1, std::min(threads, windows.size()));
  std::vector<Partial> parts(threads);
  parallel_chunks(windows.size(), threads, [&](std::size_t c, std::size_t b, std::size_t e) {
    Partial& p = parts[c];
    if (with_grad) p.grad.assign(eff.values.size(), 0.0);
    ad::Tape tape;
    for (std::size_t i = b; i < e; ++i) {
      const Window& w = windows[i];
      require(w.taus.size() == eff.truncation, ErrorKind::ShapeMismatch,
              "window length differs from truncation depth");
      const MaskSet* m = mask_of(i);
      tape.clear();
      NhpBinding bound = bind_params(tape, eff, p.grad);
      ad::Var h = encode_on_tape(tape, eff, bound, w.taus, m);
      bool clamped = false;
      ad::Var term = window_log_density(tape, eff, bound, h, w.target_tau, w.anchor_time, m, &clamped);
      const double v = tape.scalar(term);
      require(std::isfinite(v), ErrorKind::NonFinite,
              "log-likelihood term for event " + std::to_string(w.target_index) + " is not finite");
      p.value += v;
      p.clamped += clamped ? 1 : 0;
      if (with_grad) tape.backward(term);
    }
  });
  Partial total = std::move(parts[0]);
  for (std::size_t c = 1; c < parts.size(); ++c) {
    total.value += parts[c].value;
    total.clamped += parts[c].clamped;
    for (std::size_t i = 0; i < total.grad.size(); ++i) total.grad[i] += parts[c].grad[i];
  }
  return total;
}

}  // namespace

double elbo_loss(const NhpModel& model, std::span<const Window> batch, std::span<const MaskSet> masks,
                 const TrainConfig& cfg, std::vector<double>* grad) {
  const auto ll = log_likelihood(model, batch, masks, grad != nullptr);
  std::vector<double> pgrad;
  const double pen = l2_penalty(model, grad ? &pgrad : nullptr);
  const double loss = -ll.value + cfg.l2_lambda * pen;
  require(std::isfinite(loss), ErrorKind::NonFinite, "ELBO loss is not finite");
  if (grad) {
    grad->resize(ll.gradient.size());
    for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] = -ll.gradient[i] + cfg.l2_lambda * pgrad[i];
  }
  return loss;
}

double mean_nll(const NhpModel& model, std::span<const Window> windows, std::size_t threads) {
  require(!windows.empty(), ErrorKind::EmptyData, "no windows to score");
  const EffectiveNhp eff = EffectiveNhp::from(model);
  auto p = nhp_sum(eff, windows, [](std::size_t) { return nullptr; }, false, threads);
  return -p.value / static_cast<double>(windows.size());
}

void LossTrace::write_csv(std::ostream& out) const {
  out << "epoch,train_elbo,valid_mnll\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << format_double(r.train_elbo) << ',' << format_double(r.valid_mnll) << '\n';
  }
}

// ---- training loop -----------------------------------------------------------

LossTrace optimize(Objective& obj, const TrainConfig& cfg) {
  cfg.validate();
  LossTrace trace;
  if (cfg.epochs == 0) return trace;
  const std::size_t n = obj.train_size();
  require(n > 0, ErrorKind::EmptyData, "no training examples");

  std::vector<double> params = obj.parameters();
  std::vector<double> best = params;
  double best_valid = std::numeric_limits<double>::infinity();
  Adam adam(params.size(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> pgrad;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng shuffle(derive_seed(cfg.seed, 2 * epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle.index(i)]);
    const std::uint64_t epoch_seed = derive_seed(cfg.seed, 2 * epoch + 1);

    double epoch_loss = 0.0;
    std::size_t clamped = 0;
    for (std::size_t b = 0; b < n; b += cfg.batch_size) {
      const std::size_t e = std::min(n, b + cfg.batch_size);
      std::span<const std::size_t> idx(order.data() + b, e - b);
      BatchLoss bl = obj.batch_loss(idx, derive_seed(epoch_seed, b));
      const double count = static_cast<double>(idx.size());
      const double pen = obj.penalty(&pgrad);
      const double loss = bl.nll / count + cfg.l2_lambda * pen;
      require(std::isfinite(loss), ErrorKind::Diverged,
              "training loss became non-finite at epoch " + std::to_string(epoch));
      std::vector<double>& g = bl.gradient;
      double norm2 = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) {
        g[i] = g[i] / count + cfg.l2_lambda * pgrad[i];
        norm2 += g[i] * g[i];
      }
      const double norm = std::sqrt(norm2);
      require(std::isfinite(norm), ErrorKind::Diverged,
              "gradient became non-finite at epoch " + std::to_string(epoch));
      if (cfg.clip_norm > 0.0 && norm > cfg.clip_norm) {
        const double s = cfg.clip_norm / norm;
        for (double& v : g) v *= s;
      }
      adam.step(params, g);
      obj.set_parameters(params);
      epoch_loss += bl.nll + count * cfg.l2_lambda * pen;
      clamped += bl.clamped;
    }
    require(static_cast<double>(clamped) <= cfg.max_clamped_fraction * static_cast<double>(n),
            ErrorKind::Diverged,
            "hazard floor hit for " + std::to_string(clamped) + " of " + std::to_string(n) +
                " training events in epoch " + std::to_string(epoch));

    LossRow row{epoch, epoch_loss / static_cast<double>(n), obj.validation_mnll()};
    trace.rows.push_back(row);
    if (std::isnan(row.valid_mnll) || row.valid_mnll < best_valid) {
      if (!std::isnan(row.valid_mnll)) best_valid = row.valid_mnll;
      best = params;
      trace.best_epoch = epoch;
    }
  }
  obj.set_parameters(best);
  return trace;
}

namespace {

constexpr std::uint64_t kValidationStream = 0x76616c6964ULL;

class NhpObjective final : public Objective {
 public:
  NhpObjective(const NhpModel& m, std::span<const Window> train, std::span<const Window> valid,
               const DropoutSpec& spec, const TrainConfig& cfg)
      : model_(m), train_(train), valid_(valid), spec_(spec), shapes_(MaskShapes::of(m)), cfg_(cfg) {}

  std::size_t train_size() const override { return train_.size(); }
  std::vector<double> parameters() const override { return model_.flatten(); }
  void set_parameters(std::span<const double> flat) override { model_.unflatten(flat); }

  BatchLoss batch_loss(std::span<const std::size_t> examples, std::uint64_t mask_seed) override {
    const EffectiveNhp eff = EffectiveNhp::from(model_);
    batch_.clear();
    masks_.clear();
    for (std::size_t k = 0; k < examples.size(); ++k) {
      batch_.push_back(train_[examples[k]]);
      masks_.push_back(sample_masks(spec_, shapes_, derive_seed(mask_seed, k)));
    }
    Partial p = nhp_sum(eff, batch_, [&](std::size_t i) { return &masks_[i]; }, true, cfg_.threads);
    BatchLoss bl;
    bl.nll = -p.value;
    bl.clamped = p.clamped;
    bl.gradient = eff.raw_gradient(model_, p.grad);
    for (double& g : bl.gradient) g = -g;
    return bl;
  }

  double penalty(std::vector<double>* grad) const override { return l2_penalty(model_, grad); }

  /// Scored under one fixed mask draw per window: kept weights are never
  /// rescaled, so the unmasked network is not one of the sampled networks.
  double validation_mnll() override {
    if (valid_.empty()) return std::numeric_limits<double>::quiet_NaN();
    if (spec_.deterministic()) return mean_nll(model_, valid_, cfg_.threads);
    if (valid_masks_.empty()) {
      const std::uint64_t s = derive_seed(cfg_.seed, kValidationStream);
      for (std::size_t i = 0; i < valid_.size(); ++i) valid_masks_.push_back(sample_masks(spec_, shapes_, derive_seed(s, i)));
    }
    const EffectiveNhp eff = EffectiveNhp::from(model_);
    Partial p = nhp_sum(eff, valid_, [&](std::size_t i) { return &valid_masks_[i]; }, false, cfg_.threads);
    return -p.value / static_cast<double>(valid_.size());
  }

  const NhpModel& model() const { return model_; }

 private:
  NhpModel model_;
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

TrainResult train(const NhpModel& initial, std::span<const Window> train_windows,
                  std::span<const Window> valid_windows, const DropoutSpec& spec, const TrainConfig& cfg) {
  spec.validate();
  cfg.validate();
  if (cfg.epochs == 0) return {initial, {}};
  require(!train_windows.empty(), ErrorKind::EmptyData, "training needs at least one window");
  NhpObjective obj(initial, train_windows, valid_windows, spec, cfg);
  LossTrace trace = optimize(obj, cfg);
  return {obj.model(), std::move(trace)};
}

}  // namespace bnhp
