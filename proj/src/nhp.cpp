#include "bnhp/nhp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "bnhp/error.hpp"
#include "bnhp/rng.hpp"

namespace bnhp {

using ad::Dual;
using ad::Tape;
using ad::Var;

namespace {

void fill_uniform(Tensor& t, double radius, double shift, Rng& rng) {
  for (double& v : t.data) v = shift + radius * (2.0 * rng.uniform() - 1.0);
}

/// Orthogonal H x H matrix: Gram-Schmidt on a Gaussian draw.
Tensor orthogonal(std::size_t n, Rng& rng) {
  Tensor q(n, n);
  for (double& v : q.data) v = rng.normal();
  for (std::size_t i = 0; i < n; ++i) {
    double* row = &q.data[i * n];
    for (std::size_t k = 0; k < i; ++k) {
      const double* prev = &q.data[k * n];
      const double d = std::inner_product(row, row + n, prev, 0.0);
      for (std::size_t j = 0; j < n; ++j) row[j] -= d * prev[j];
    }
    const double norm = std::sqrt(std::inner_product(row, row + n, row, 0.0));
    for (std::size_t j = 0; j < n; ++j) row[j] /= norm;
  }
  return q;
}

const MaskSet* active(const MaskSet* m) { return m; }

std::span<const double> fnn_mask(const MaskSet* masks, std::size_t layer) {
  if (!masks || layer >= masks->fnn.size()) return {};
  return masks->fnn[layer];
}

}  // namespace

NhpModel NhpModel::initialize(const NhpArchitecture& arch, InputScaling scaling, std::uint64_t seed) {
  require(arch.hidden >= 1 && arch.layers >= 1 && arch.units >= 1 && arch.truncation >= 1,
          ErrorKind::InvalidParam, "invalid architecture");
  require(arch.fnn_keep > 0.0 && arch.fnn_keep <= 1.0, ErrorKind::InvalidParam, "fnn_keep must lie in (0, 1]");
  require(scaling.tau_scaler > 0.0 && scaling.time_scaler > 0.0, ErrorKind::InvalidParam,
          "input scalers must be positive");
  Rng rng(seed);
  NhpModel m;
  m.truncation = arch.truncation;
  m.scaling = scaling;
  m.seed = seed;
  const std::size_t H = arch.hidden;
  m.encoder.input_weights = Tensor(1, H);
  fill_uniform(m.encoder.input_weights, std::sqrt(6.0 / static_cast<double>(1 + H)), 0.0, rng);
  m.encoder.recurrent_weights = orthogonal(H, rng);
  m.encoder.bias = Tensor(1, H);

  // Effective weights are centred so that, with the expected share of columns
  // kept, each hidden layer has unit gain and the tau slope of the output is
  // about one: tau enters with weight 1/3 and the output layer gains 3. The
  // output bias of 1 keeps the final softplus off its flat end.
  const double keep = arch.fnn_keep;
  std::size_t in = H + 2;
  for (std::size_t l = 0; l < arch.layers; ++l) {
    const bool last = l + 1 == arch.layers;
    const std::size_t out = last ? 1 : arch.units;
    HazardLayer layer{Tensor(in, out), Tensor(1, out)};
    const double radius = std::sqrt(6.0 / static_cast<double>(in + out));
    const double fan = static_cast<double>(in);
    const double mean = l == 0 ? 1.0 / fan : (last ? 3.0 : 1.0) / (keep * fan);
    fill_uniform(layer.raw_weights, radius, ad::softplus_inverse(mean), rng);
    if (l == 0) {
      for (std::size_t j = 0; j < out; ++j) {
        layer.raw_weights(0, j) += ad::softplus_inverse(1.0 / 3.0) - ad::softplus_inverse(mean);
      }
    }
    if (last) layer.bias.data.assign(out, 1.0);
    m.hazard_net.layers.push_back(std::move(layer));
    in = out;
  }
  return m;
}

std::vector<double> NhpModel::flatten() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  auto put = [&](const Tensor& t) { flat.insert(flat.end(), t.data.begin(), t.data.end()); };
  put(encoder.input_weights);
  put(encoder.recurrent_weights);
  put(encoder.bias);
  for (const auto& l : hazard_net.layers) {
    put(l.raw_weights);
    put(l.bias);
  }
  return flat;
}

void NhpModel::unflatten(std::span<const double> flat) {
  require(flat.size() == parameter_count(), ErrorKind::ShapeMismatch, "parameter vector size mismatch");
  std::size_t pos = 0;
  auto take = [&](Tensor& t) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(pos),
              flat.begin() + static_cast<std::ptrdiff_t>(pos + t.size()), t.data.begin());
    pos += t.size();
  };
  take(encoder.input_weights);
  take(encoder.recurrent_weights);
  take(encoder.bias);
  for (auto& l : hazard_net.layers) {
    take(l.raw_weights);
    take(l.bias);
  }
}

std::size_t NhpModel::parameter_count() const {
  std::size_t n = encoder.input_weights.size() + encoder.recurrent_weights.size() + encoder.bias.size();
  for (const auto& l : hazard_net.layers) n += l.raw_weights.size() + l.bias.size();
  return n;
}

InputScaling fit_scaling(std::span<const Window> train) {
  require(!train.empty(), ErrorKind::EmptyData, "no training windows");
  double sum = 0.0;
  double span = 0.0;
  for (const auto& w : train) {
    sum += w.target_tau;
    span = std::max(span, w.anchor_time + w.target_tau);
  }
  return {sum / static_cast<double>(train.size()), span};
}

// ---- effective parameters ---------------------------------------------------

namespace {

void append_net(EffectiveNhp& e, const MonotoneHazardNet& net) {
  e.widths.clear();
  e.layer_offsets.clear();
  e.widths.push_back(net.layers.front().raw_weights.rows);
  for (const auto& l : net.layers) {
    e.layer_offsets.push_back(e.values.size());
    for (double r : l.raw_weights.data) e.values.push_back(ad::softplus(r));
    e.values.insert(e.values.end(), l.bias.data.begin(), l.bias.data.end());
    e.widths.push_back(l.raw_weights.cols);
  }
}

}  // namespace

EffectiveNhp EffectiveNhp::from(const NhpModel& model) {
  EffectiveNhp e;
  e.hidden = model.encoder.hidden();
  e.truncation = model.truncation;
  e.scaling = model.scaling;
  e.has_encoder = true;
  const auto& enc = model.encoder;
  e.values.insert(e.values.end(), enc.input_weights.data.begin(), enc.input_weights.data.end());
  e.values.insert(e.values.end(), enc.recurrent_weights.data.begin(), enc.recurrent_weights.data.end());
  e.values.insert(e.values.end(), enc.bias.data.begin(), enc.bias.data.end());
  e.encoder_size = e.values.size();
  append_net(e, model.hazard_net);
  require(e.widths.front() == e.hidden + 2, ErrorKind::ShapeMismatch,
          "hazard network input width must be hidden size + 2");
  return e;
}

EffectiveNhp EffectiveNhp::from_net(const MonotoneHazardNet& net, std::size_t hidden, InputScaling scaling) {
  EffectiveNhp e;
  e.hidden = hidden;
  e.scaling = scaling;
  append_net(e, net);
  require(e.widths.front() == hidden + 2, ErrorKind::ShapeMismatch,
          "hazard network input width must be h size + 2");
  return e;
}

std::vector<double> EffectiveNhp::raw_gradient(const NhpModel& model,
                                               std::span<const double> effective_grad) const {
  require(effective_grad.size() == values.size(), ErrorKind::ShapeMismatch, "gradient size mismatch");
  std::vector<double> g(effective_grad.begin(), effective_grad.end());
  for (std::size_t l = 0; l < model.hazard_net.layers.size(); ++l) {
    const auto& raw = model.hazard_net.layers[l].raw_weights.data;
    const std::size_t off = layer_offsets[l];
    for (std::size_t i = 0; i < raw.size(); ++i) g[off + i] *= ad::sigmoid(raw[i]);
  }
  return g;
}

NhpBinding bind_params(Tape& tape, const EffectiveNhp& eff, std::span<double> grad_sink) {
  const bool grad = !grad_sink.empty();
  if (grad) {
    require(grad_sink.size() == eff.values.size(), ErrorKind::ShapeMismatch, "gradient sink size mismatch");
  }
  auto block = [&](std::size_t off, std::size_t n) {
    std::span<const double> v(eff.values.data() + off, n);
    return grad ? tape.parameter(v, grad_sink.subspan(off, n)) : tape.external(v);
  };
  NhpBinding b;
  const std::size_t H = eff.hidden;
  if (eff.has_encoder) {
    b.input_weights = block(0, H);
    b.recurrent_weights = block(H, H * H);
    b.bias = block(H + H * H, H);
  }
  for (std::size_t l = 0; l + 1 < eff.widths.size(); ++l) {
    const std::size_t in = eff.widths[l];
    const std::size_t out = eff.widths[l + 1];
    b.weights.push_back(block(eff.layer_offsets[l], in * out));
    b.biases.push_back(block(eff.layer_offsets[l] + in * out, out));
  }
  return b;
}

Var encode_on_tape(Tape& tape, const EffectiveNhp& eff, const NhpBinding& bound,
                   std::span<const double> taus, const MaskSet* masks, const StepObserver& observer) {
  require(eff.has_encoder, ErrorKind::ShapeMismatch, "model has no encoder");
  const std::size_t H = eff.hidden;
  const bool in_mask = masks && !masks->rnn_input.empty();
  const bool rec_mask = masks && !masks->rnn_recurrent.empty();
  if (in_mask) require(masks->rnn_input.size() == 1, ErrorKind::ShapeMismatch, "input mask size");
  if (rec_mask) require(masks->rnn_recurrent.size() == H, ErrorKind::ShapeMismatch, "recurrent mask size");
  const double in_keep = in_mask ? masks->rnn_input[0] : 1.0;
  Var rmask;
  if (rec_mask) rmask = tape.external(masks->rnn_recurrent);

  Var h;
  for (std::size_t k = 0; k < taus.size(); ++k) {
    const double x = in_keep * taus[k] / eff.scaling.tau_scaler;
    Var pre = tape.add(tape.matvec(tape.constant(x), bound.input_weights, H), bound.bias);
    if (h.valid()) {
      Var hin = rec_mask ? tape.mul(h, rmask) : h;
      pre = tape.add(pre, tape.matvec(hin, bound.recurrent_weights, H));
    }
    if (observer) {
      observer(k, rec_mask ? std::span<const double>(masks->rnn_recurrent) : std::span<const double>{});
    }
    h = tape.tanh(pre);
  }
  if (!h.valid()) h = tape.constant(std::vector<double>(H, 0.0));
  return h;
}

namespace {

Var net_input(Tape& tape, Var h, double tau_s, double t_s) {
  return tape.concat(tape.concat(tape.constant(tau_s), h), tape.constant(t_s));
}

}  // namespace

Var hazard_net_value(Tape& tape, const EffectiveNhp& eff, const NhpBinding& bound, Var h, double tau,
                     double t, const MaskSet* masks) {
  Var x = net_input(tape, h, tau / eff.scaling.tau_scaler, t / eff.scaling.time_scaler);
  const std::size_t L = bound.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t out = eff.widths[l + 1];
    Var z = tape.matvec(x, bound.weights[l], out);
    if (l + 1 < L) {
      auto m = fnn_mask(active(masks), l);
      if (!m.empty()) z = tape.mul(z, tape.external(m));
    }
    z = tape.add(z, bound.biases[l]);
    x = (l + 1 < L) ? tape.tanh(z) : z;
  }
  return x;
}

Dual hazard_net_dual(Tape& tape, const EffectiveNhp& eff, const NhpBinding& bound, Var h, double tau,
                     double t, const MaskSet* masks) {
  const std::size_t in = eff.widths.front();
  std::vector<double> seed(in, 0.0);
  seed[0] = 1.0 / eff.scaling.tau_scaler;
  Dual x{net_input(tape, h, tau / eff.scaling.tau_scaler, t / eff.scaling.time_scaler),
         tape.constant(seed)};
  const std::size_t L = bound.weights.size();
  for (std::size_t l = 0; l < L; ++l) {
    const std::size_t out = eff.widths[l + 1];
    Dual z{tape.matvec(x.value, bound.weights[l], out), tape.matvec(x.dtau, bound.weights[l], out)};
    if (l + 1 < L) {
      auto m = fnn_mask(active(masks), l);
      if (!m.empty()) {
        Var mv = tape.external(m);
        z = {tape.mul(z.value, mv), tape.mul(z.dtau, mv)};
      }
    }
    z.value = tape.add(z.value, bound.biases[l]);
    x = (l + 1 < L) ? ad::apply(tape, ad::UnaryFn::Tanh, z) : z;
  }
  return x;
}

Var window_log_density(Tape& tape, const EffectiveNhp& eff, const NhpBinding& bound, Var h, double tau,
                       double t, const MaskSet* masks, bool* clamped) {
  Dual out = ad::apply(tape, ad::UnaryFn::Softplus, hazard_net_dual(tape, eff, bound, h, tau, t, masks));
  Var base = tape.softplus(hazard_net_value(tape, eff, bound, h, 0.0, t, masks));
  Var phi = tape.sub(out.value, base);
  const double lambda = tape.scalar(out.dtau);
  if (clamped) *clamped = !(lambda >= kHazardFloor);
  return tape.sub(tape.log_floor(out.dtau, kHazardFloor), phi);
}

// ---- public value-level API ---------------------------------------------------

std::vector<double> encode_history(const RnnEncoder& encoder, const Window& window, const MaskSet* masks,
                                   InputScaling scaling, const StepObserver& observer) {
  const std::size_t H = encoder.hidden();
  require(encoder.input_weights.rows == 1 && encoder.input_weights.cols == H &&
              encoder.recurrent_weights.rows == H && encoder.recurrent_weights.cols == H,
          ErrorKind::ShapeMismatch, "encoder weight shapes inconsistent with hidden size");
  EffectiveNhp e;
  e.hidden = H;
  e.scaling = scaling;
  e.has_encoder = true;
  e.values.insert(e.values.end(), encoder.input_weights.data.begin(), encoder.input_weights.data.end());
  e.values.insert(e.values.end(), encoder.recurrent_weights.data.begin(), encoder.recurrent_weights.data.end());
  e.values.insert(e.values.end(), encoder.bias.data.begin(), encoder.bias.data.end());
  e.encoder_size = e.values.size();
  e.widths = {H + 2};
  Tape tape;
  NhpBinding b = bind_params(tape, e);
  Var h = encode_on_tape(tape, e, b, window.taus, masks, observer);
  auto v = tape.value(h);
  return {v.begin(), v.end()};
}

namespace {

void check_tau(double tau) {
  require(std::isfinite(tau) && tau >= 0.0, ErrorKind::InvalidParam, "tau must be finite and >= 0");
}

}  // namespace

double cumulative_hazard(const MonotoneHazardNet& net, std::span<const double> h, double t, double tau,
                         const MaskSet* masks, InputScaling scaling) {
  check_tau(tau);
  EffectiveNhp e = EffectiveNhp::from_net(net, h.size(), scaling);
  Tape tape;
  NhpBinding b = bind_params(tape, e);
  Var hv = tape.external(h);
  Var at = tape.softplus(hazard_net_value(tape, e, b, hv, tau, t, masks));
  Var at0 = tape.softplus(hazard_net_value(tape, e, b, hv, 0.0, t, masks));
  const double phi = tape.scalar(at) - tape.scalar(at0);
  require(std::isfinite(phi), ErrorKind::NonFinite, "cumulative hazard is not finite");
  return phi;
}

double hazard(const MonotoneHazardNet& net, std::span<const double> h, double t, double tau,
              const MaskSet* masks, InputScaling scaling) {
  check_tau(tau);
  EffectiveNhp e = EffectiveNhp::from_net(net, h.size(), scaling);
  Tape tape;
  NhpBinding b = bind_params(tape, e);
  Dual out = ad::apply(tape, ad::UnaryFn::Softplus,
                       hazard_net_dual(tape, e, b, tape.external(h), tau, t, masks));
  const double lambda = tape.scalar(out.dtau);
  require(std::isfinite(lambda), ErrorKind::NonFinite, "hazard is not finite");
  return lambda;
}

LikelihoodResult log_likelihood(const NhpModel& model, std::span<const Window> windows,
                                std::span<const MaskSet> masks, bool with_gradient) {
  require(!windows.empty(), ErrorKind::EmptyData, "log_likelihood needs at least one window");
  require(masks.empty() || masks.size() == 1 || masks.size() == windows.size(), ErrorKind::ShapeMismatch,
          "masks must be empty, shared, or one per window");
  const EffectiveNhp eff = EffectiveNhp::from(model);
  std::vector<double> eff_grad(with_gradient ? eff.values.size() : 0, 0.0);
  LikelihoodResult result;
  Tape tape;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const Window& w = windows[i];
    require(w.taus.size() == model.truncation, ErrorKind::ShapeMismatch,
            "window length " + std::to_string(w.taus.size()) + " differs from truncation depth " +
                std::to_string(model.truncation));
    const MaskSet* m = masks.empty() ? nullptr : &masks[masks.size() == 1 ? 0 : i];
    tape.clear();
    NhpBinding b = bind_params(tape, eff, eff_grad);
    Var h = encode_on_tape(tape, eff, b, w.taus, m);
    bool clamped = false;
    Var term = window_log_density(tape, eff, b, h, w.target_tau, w.anchor_time, m, &clamped);
    const double v = tape.scalar(term);
    require(std::isfinite(v), ErrorKind::NonFinite,
            "log-likelihood term for event " + std::to_string(w.target_index) + " is not finite");
    result.value += v;
    result.clamped += clamped ? 1 : 0;
    if (with_gradient) tape.backward(term);
  }
  if (with_gradient) result.gradient = eff.raw_gradient(model, eff_grad);
  return result;
}

// ---- ConditionalHazard ----------------------------------------------------------

ConditionalHazard::ConditionalHazard(const EffectiveNhp& eff, const Window& window, const MaskSet* masks)
    : eff_(&eff), masks_(masks), t_(window.anchor_time) {
  require(window.taus.size() == eff.truncation, ErrorKind::ShapeMismatch,
          "window length differs from truncation depth");
  NhpBinding b = bind_params(tape_, eff);
  Var h = encode_on_tape(tape_, eff, b, window.taus, masks);
  auto hv = tape_.value(h);
  h_.assign(hv.begin(), hv.end());
  tape_.clear();
  b = bind_params(tape_, eff);
  base_ = tape_.scalar(tape_.softplus(hazard_net_value(tape_, eff, b, tape_.external(h_), 0.0, t_, masks)));
}

double ConditionalHazard::phi(double tau) {
  tape_.clear();
  NhpBinding b = bind_params(tape_, *eff_);
  Var out = tape_.softplus(hazard_net_value(tape_, *eff_, b, tape_.external(h_), tau, t_, masks_));
  return tape_.scalar(out) - base_;
}

std::pair<double, double> ConditionalHazard::phi_and_hazard(double tau) {
  tape_.clear();
  NhpBinding b = bind_params(tape_, *eff_);
  Dual out = ad::apply(tape_, ad::UnaryFn::Softplus,
                       hazard_net_dual(tape_, *eff_, b, tape_.external(h_), tau, t_, masks_));
  return {tape_.scalar(out.value) - base_, tape_.scalar(out.dtau)};
}

}  // namespace bnhp
