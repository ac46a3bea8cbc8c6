#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "bnhp/diffkernel.hpp"
#include "bnhp/events.hpp"
#include "bnhp/masks.hpp"

namespace bnhp {

/// Dense row-major matrix; vectors are 1 x n.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const noexcept { return data.size(); }
  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

/// h_k = tanh(tau_k V + h_{k-1} U + b), scalar input, hidden size H.
struct RnnEncoder {
  Tensor input_weights;      ///< 1 x H
  Tensor recurrent_weights;  ///< H x H
  Tensor bias;               ///< 1 x H

  std::size_t hidden() const noexcept { return bias.cols; }
  friend bool operator==(const RnnEncoder&, const RnnEncoder&) = default;
};

struct HazardLayer {
  Tensor raw_weights;  ///< in x out; effective weight = softplus(raw)
  Tensor bias;         ///< 1 x out

  friend bool operator==(const HazardLayer&, const HazardLayer&) = default;
};

/// Feed-forward network over (tau, h, t) with strictly positive effective
/// weights, tanh hidden units and a softplus output, so its output is
/// positive and strictly increasing in tau.
struct MonotoneHazardNet {
  std::vector<HazardLayer> layers;

  std::size_t input_dim() const { return layers.front().raw_weights.rows; }
  std::size_t hidden_layers() const { return layers.size() - 1; }
  friend bool operator==(const MonotoneHazardNet&, const MonotoneHazardNet&) = default;
};

/// Standardization applied to network inputs.
struct InputScaling {
  double tau_scaler = 1.0;   ///< inter-arrivals are divided by this
  double time_scaler = 1.0;  ///< absolute times are divided by this

  friend bool operator==(const InputScaling&, const InputScaling&) = default;
};

struct NhpArchitecture {
  std::size_t hidden = 64;   ///< RNN units
  std::size_t layers = 5;    ///< weight layers in the hazard network
  std::size_t units = 16;    ///< units per hidden hazard layer
  std::size_t truncation = 20;
  /// Expected fraction of hazard columns kept under dropout; sets the initial
  /// weight scale so a sampled network starts with unit gain along tau.
  double fnn_keep = 1.0;
};

struct NhpModel {
  RnnEncoder encoder;
  MonotoneHazardNet hazard_net;
  std::size_t truncation = 20;  ///< M
  InputScaling scaling;
  std::uint64_t seed = 0;       ///< initialization seed

  static NhpModel initialize(const NhpArchitecture& arch, InputScaling scaling, std::uint64_t seed);

  /// Raw parameters flattened as V, U, b, then (W_l, b_l) per layer.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
  std::size_t parameter_count() const;

  friend bool operator==(const NhpModel&, const NhpModel&) = default;
};

/// Scaling derived from training windows: mean inter-arrival and the span of
/// absolute times.
InputScaling fit_scaling(std::span<const Window> train);

/// Per-step observer for the encoder: (step, recurrent mask in use).
using StepObserver = std::function<void(std::size_t, std::span<const double>)>;

std::vector<double> encode_history(const RnnEncoder& encoder, const Window& window,
                                   const MaskSet* masks = nullptr, InputScaling scaling = {},
                                   const StepObserver& observer = {});

/// Phi(tau) = net(tau, h, t) - net(0, h, t).
double cumulative_hazard(const MonotoneHazardNet& net, std::span<const double> h, double t,
                         double tau, const MaskSet* masks = nullptr, InputScaling scaling = {});

/// lambda(tau) = dPhi/dtau.
double hazard(const MonotoneHazardNet& net, std::span<const double> h, double t, double tau,
              const MaskSet* masks = nullptr, InputScaling scaling = {});

/// Hazard values below this are clamped inside the log and counted.
inline constexpr double kHazardFloor = 1e-12;

struct LikelihoodResult {
  double value = 0.0;
  std::size_t clamped = 0;   ///< events whose hazard hit kHazardFloor
  std::vector<double> gradient;  ///< d value / d raw params, when requested
};

/// Sum over windows of log lambda(tau_i) - Phi(tau_i). `masks` is empty (no
/// dropout), a single MaskSet shared by every window, or one per window.
LikelihoodResult log_likelihood(const NhpModel& model, std::span<const Window> windows,
                                std::span<const MaskSet> masks = {}, bool with_gradient = false);

// ---- lower-level machinery shared with training, prediction and the spatial head

/// Model parameters with softplus already applied to the hazard-network weights,
/// in the flat layout of NhpModel::flatten().
struct EffectiveNhp {
  std::vector<double> values;
  std::size_t hidden = 0;
  std::vector<std::size_t> widths;  ///< hazard-net layer widths, input first
  std::size_t truncation = 0;
  InputScaling scaling;
  bool has_encoder = false;
  std::size_t encoder_size = 0;           ///< leading entries holding V, U, b
  std::vector<std::size_t> layer_offsets; ///< start of W_l; b_l follows it

  static EffectiveNhp from(const NhpModel& model);
  /// Hazard network only (no encoder); `hidden` is the size of the h input.
  static EffectiveNhp from_net(const MonotoneHazardNet& net, std::size_t hidden, InputScaling scaling);
  /// Converts a gradient w.r.t. effective values into one w.r.t. raw parameters.
  std::vector<double> raw_gradient(const NhpModel& model, std::span<const double> effective_grad) const;
};

/// Vars for every parameter block of an EffectiveNhp on one tape.
struct NhpBinding {
  ad::Var input_weights;
  ad::Var recurrent_weights;
  ad::Var bias;
  std::vector<ad::Var> weights;
  std::vector<ad::Var> biases;
};

/// Binds effective values as constants, or as parameters accumulating into `grad_sink`.
NhpBinding bind_params(ad::Tape& tape, const EffectiveNhp& eff, std::span<double> grad_sink = {});

ad::Var encode_on_tape(ad::Tape& tape, const EffectiveNhp& eff, const NhpBinding& bound,
                       std::span<const double> taus, const MaskSet* masks,
                       const StepObserver& observer = {});

/// Raw network output (before the final softplus) at scaled tau, value only.
ad::Var hazard_net_value(ad::Tape& tape, const EffectiveNhp& eff, const NhpBinding& bound,
                         ad::Var h, double tau, double t, const MaskSet* masks);

/// Same with the tau-derivative channel.
ad::Dual hazard_net_dual(ad::Tape& tape, const EffectiveNhp& eff, const NhpBinding& bound,
                         ad::Var h, double tau, double t, const MaskSet* masks);

/// Per-window term log(max(lambda, floor)) - Phi on the tape; sets *clamped when the floor bites.
ad::Var window_log_density(ad::Tape& tape, const EffectiveNhp& eff, const NhpBinding& bound,
                           ad::Var h, double tau, double t, const MaskSet* masks, bool* clamped);

/// Phi and lambda for one window under one fixed network sample. Reuses an
/// internal tape; not thread-safe.
class ConditionalHazard {
 public:
  ConditionalHazard(const EffectiveNhp& eff, const Window& window, const MaskSet* masks);

  double phi(double tau);
  /// (Phi(tau), lambda(tau))
  std::pair<double, double> phi_and_hazard(double tau);
  std::span<const double> hidden() const noexcept { return h_; }

 private:
  const EffectiveNhp* eff_;
  const MaskSet* masks_;
  double t_ = 0.0;
  std::vector<double> h_;
  double base_ = 0.0;  ///< softplus(net(0))
  ad::Tape tape_;
};

}  // namespace bnhp
