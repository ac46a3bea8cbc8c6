#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "bnhp/error.hpp"

namespace bnhp::ad {

/// Handle to a vector-valued node on a Tape. Only meaningful for the tape
/// that produced it, and only until that tape is cleared.
struct Var {
  std::uint32_t id = UINT32_MAX;
  bool valid() const noexcept { return id != UINT32_MAX; }
};

enum class Op : std::uint8_t {
  Constant,
  External,
  Parameter,
  Add,
  Sub,
  Mul,
  Scale,
  Shift,
  MatVec,
  Tanh,
  Softplus,
  Sigmoid,
  Log,
  LogFloor,
  Exp,
  Square,
  Reciprocal,
  Relu,
  Sum,
  Concat,
  Slice,
  Broadcast,
};

/// Define-by-run reverse-mode tape. Every primitive evaluates eagerly and
/// records its inputs; values live in one contiguous arena so a tape can be
/// cleared and reused without reallocating. Nodes are vectors of doubles.
///
/// Not thread-safe; use one tape per thread.
class Tape {
 public:
  Tape() = default;

  /// Owned copy, no gradient.
  Var constant(std::span<const double> values);
  Var constant(double value);
  /// Non-owning view of caller memory, no gradient. Memory must outlive use of the tape.
  Var external(std::span<const double> values);
  /// Non-owning view; backward() adds d(loss)/d(values) into `grad_sink`.
  Var parameter(std::span<const double> values, std::span<double> grad_sink);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var shift(Var a, double c);
  /// y = x W for row-major W of shape (x.size, cols).
  Var matvec(Var x, Var w, std::size_t cols);
  Var tanh(Var a);
  Var softplus(Var a);
  Var sigmoid(Var a);
  Var log(Var a);
  /// log(max(a, floor)); zero derivative where clamped.
  Var log_floor(Var a, double floor);
  Var exp(Var a);
  Var square(Var a);
  Var reciprocal(Var a);
  Var relu(Var a);
  Var sum(Var a);
  Var concat(Var a, Var b);
  Var slice(Var a, std::size_t begin, std::size_t count);
  /// Scalar node repeated n times.
  Var broadcast(Var scalar, std::size_t n);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t size(Var v) const { return nodes_[v.id].size; }
  Op op(Var v) const { return nodes_[v.id].op; }
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  std::size_t node_count() const noexcept { return nodes_.size(); }

  /// Reverse accumulation from a scalar node; parameter sinks receive seed * dloss/dparam.
  void backward(Var loss, double seed = 1.0);

  void clear();

 private:
  struct Node {
    Op op;
    bool needs_grad;
    std::uint32_t a;
    std::uint32_t b;
    std::uint32_t size;
    std::uint32_t cols;
    double aux;
    std::size_t offset;   // into arena_ when ext == nullptr
    const double* ext;
    double* sink;
    std::size_t adj;      // into adjoint_ when needs_grad
  };

  Var push(Op op, std::uint32_t a, std::uint32_t b, std::size_t size, bool needs_grad,
           std::uint32_t cols = 0, double aux = 0.0);
  const double* ptr(std::uint32_t id) const;
  double* mut(std::uint32_t id) { return arena_.data() + nodes_[id].offset; }
  void check_same_size(Var a, Var b, const char* what) const;
  Var unary(Op op, Var a);

  std::vector<Node> nodes_;
  std::vector<double> arena_;
  std::vector<double> adjoint_;
};

/// Value paired with its derivative along the tau input. Both components are
/// ordinary tape nodes, so reverse accumulation through `dtau` works unchanged.
struct Dual {
  Var value;
  Var dtau;
};

enum class UnaryFn { Tanh, Softplus, Sigmoid, Exp, Log, Square, Relu };

Dual apply(Tape& tape, UnaryFn fn, Dual x);
Dual add(Tape& tape, Dual a, Dual b);
Dual mul(Tape& tape, Dual a, Dual b);
Dual scale(Tape& tape, Dual a, double c);
/// x W + b, with the derivative channel passed through the linear map only.
Dual affine(Tape& tape, Dual x, Var w, Var b, std::size_t cols);
Dual concat(Tape& tape, Dual a, Dual b);
/// Input that does not depend on tau (zero derivative channel).
Dual lift(Tape& tape, Var v);

double softplus(double x) noexcept;
double sigmoid(double x) noexcept;
/// Inverse of softplus for y > 0.
double softplus_inverse(double y) noexcept;

/// Evaluates f at tau and returns (f(tau), df/dtau). `f` maps (Tape&, Dual) to a
/// size-1 Dual built from the supported primitives.
template <class F>
std::pair<double, double> forward_tau(F&& f, double tau) {
  Tape tape;
  Dual x{tape.constant(tau), tape.constant(1.0)};
  Dual y = f(tape, x);
  require(tape.size(y.value) == 1, ErrorKind::ShapeMismatch, "forward_tau expects a scalar function");
  return {tape.scalar(y.value), tape.scalar(y.dtau)};
}

/// Gradient of a scalar loss with respect to a flat weight vector. `loss` maps
/// (Tape&, Var weights) to a size-1 Var.
template <class F>
std::vector<double> grad_loss(F&& loss, std::span<const double> weights, double* value_out = nullptr) {
  Tape tape;
  std::vector<double> grad(weights.size(), 0.0);
  Var w = tape.parameter(weights, grad);
  Var l = loss(tape, w);
  require(tape.size(l) == 1, ErrorKind::ShapeMismatch, "grad_loss expects a scalar loss");
  const double v = tape.scalar(l);
  require(std::isfinite(v), ErrorKind::NonFinite, "loss is not finite");
  tape.backward(l);
  if (value_out) *value_out = v;
  return grad;
}

}  // namespace bnhp::ad
