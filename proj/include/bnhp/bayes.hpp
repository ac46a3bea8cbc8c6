#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "bnhp/masks.hpp"
#include "bnhp/nhp.hpp"

namespace bnhp {

/// Drop probabilities for MC dropout. Each unit is zeroed with probability p.
struct DropoutSpec {
  double p_fnn = 0.5;            ///< hazard-net hidden columns (also the spatial head)
  double p_rnn_input = 0.1;      ///< rows of V
  double p_rnn_recurrent = 0.1;  ///< rows of U
  double sigma_r = 1e-3;         ///< recorded only; masking is the small-variance limit

  void validate() const;
  bool deterministic() const noexcept { return p_fnn == 0.0 && p_rnn_input == 0.0 && p_rnn_recurrent == 0.0; }
  static DropoutSpec none() { return {0.0, 0.0, 0.0, 0.0}; }
};

struct MaskShapes {
  std::vector<std::size_t> fnn;      ///< width of each hidden hazard layer
  std::size_t rnn_input = 0;
  std::size_t rnn_recurrent = 0;
  std::vector<std::size_t> spatial;  ///< width of each hidden spatial layer

  static MaskShapes of(const NhpModel& model);
};

/// A hidden layer whose every column would be dropped is redrawn, so a sampled
/// network never loses its path from tau to the output.
MaskSet sample_masks(const DropoutSpec& spec, const MaskShapes& shapes, std::uint64_t seed);

struct TrainConfig {
  double lr = 1e-4;
  double beta1 = 0.90;
  double beta2 = 0.99;
  double eps = 1e-8;
  double l2_lambda = 0.001;
  std::size_t batch_size = 512;
  std::size_t epochs = 500;
  std::uint64_t seed = 11;
  double clip_norm = 10.0;       ///< 0 disables clipping
  std::size_t threads = 1;
  double max_clamped_fraction = 1e-3;

  void validate() const;
};

class Adam {
 public:
  Adam(std::size_t n, double lr, double beta1, double beta2, double eps);
  void step(std::span<double> params, std::span<const double> grad);
  std::size_t steps() const noexcept { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

/// Sum of squared effective weights (V, U, b and softplus of the hazard
/// weights plus hazard biases). Adds d penalty / d raw into `grad` if given.
double l2_penalty(const NhpModel& model, std::vector<double>* grad = nullptr);

/// -log_likelihood(batch under masks) + l2_lambda * l2_penalty. `grad`, when
/// given, receives the gradient w.r.t. the raw parameters.
double elbo_loss(const NhpModel& model, std::span<const Window> batch, std::span<const MaskSet> masks,
                 const TrainConfig& cfg, std::vector<double>* grad = nullptr);

/// Mean negative log-likelihood per window, masks off.
double mean_nll(const NhpModel& model, std::span<const Window> windows, std::size_t threads = 1);

struct LossRow {
  std::size_t epoch = 0;
  double train_elbo = 0.0;  ///< mean per-event loss over the epoch's batches
  double valid_mnll = 0.0;  ///< NaN without validation data
};

struct LossTrace {
  std::vector<LossRow> rows;
  std::size_t best_epoch = 0;  ///< 0 means the initial weights were kept

  void write_csv(std::ostream& out) const;
};

/// Loss over a batch of training examples, as used by the optimizer.
struct BatchLoss {
  double nll = 0.0;                ///< summed over the batch
  std::size_t clamped = 0;
  std::vector<double> gradient;    ///< of nll, w.r.t. raw parameters
};

/// What the generic training loop needs from a model.
class Objective {
 public:
  virtual ~Objective() = default;
  virtual std::size_t train_size() const = 0;
  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> flat) = 0;
  /// Masks for example i are drawn from derive_seed(mask_seed, i).
  virtual BatchLoss batch_loss(std::span<const std::size_t> examples, std::uint64_t mask_seed) = 0;
  virtual double penalty(std::vector<double>* grad) const = 0;
  /// NaN when there is no validation data.
  virtual double validation_mnll() = 0;
};

/// Adam on mean batch NLL + l2_lambda * penalty, shuffled mini-batches, global
/// norm clipping, best-validation weights restored at the end.
LossTrace optimize(Objective& objective, const TrainConfig& cfg);

struct TrainResult {
  NhpModel model;
  LossTrace trace;
};

TrainResult train(const NhpModel& initial, std::span<const Window> train_windows,
                  std::span<const Window> valid_windows, const DropoutSpec& spec, const TrainConfig& cfg);

/// Splits [0, n) into `threads` contiguous chunks and runs fn(chunk, begin, end)
/// on each; chunk 0 runs on the calling thread.
void parallel_chunks(std::size_t n, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn);

}  // namespace bnhp
