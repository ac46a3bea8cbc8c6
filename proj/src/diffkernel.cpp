#include "bnhp/diffkernel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bnhp::ad {

double softplus(double x) noexcept {
  // max(x, 0) + log1p(exp(-|x|)) never overflows.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) noexcept {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_inverse(double y) noexcept {
  // log(exp(y) - 1) = y + log(1 - exp(-y))
  return y + std::log(-std::expm1(-y));
}

Var Tape::push(Op op, std::uint32_t a, std::uint32_t b, std::size_t size, bool needs_grad,
               std::uint32_t cols, double aux) {
  Node n{};
  n.op = op;
  n.needs_grad = needs_grad;
  n.a = a;
  n.b = b;
  n.size = static_cast<std::uint32_t>(size);
  n.cols = cols;
  n.aux = aux;
  n.offset = arena_.size();
  n.ext = nullptr;
  n.sink = nullptr;
  n.adj = 0;
  arena_.resize(arena_.size() + size);
  nodes_.push_back(n);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

const double* Tape::ptr(std::uint32_t id) const {
  const Node& n = nodes_[id];
  return n.ext ? n.ext : arena_.data() + n.offset;
}

std::span<const double> Tape::value(Var v) const { return {ptr(v.id), nodes_[v.id].size}; }

double Tape::scalar(Var v) const {
  require(nodes_[v.id].size == 1, ErrorKind::ShapeMismatch, "scalar() on a non-scalar node");
  return ptr(v.id)[0];
}

void Tape::check_same_size(Var a, Var b, const char* what) const {
  if (nodes_[a.id].size != nodes_[b.id].size) {
    fail(ErrorKind::ShapeMismatch, std::string(what) + ": operand sizes " +
                                       std::to_string(nodes_[a.id].size) + " and " +
                                       std::to_string(nodes_[b.id].size));
  }
}

Var Tape::constant(std::span<const double> values) {
  Var v = push(Op::Constant, 0, 0, values.size(), false);
  std::copy(values.begin(), values.end(), mut(v.id));
  return v;
}

Var Tape::constant(double value) {
  Var v = push(Op::Constant, 0, 0, 1, false);
  *mut(v.id) = value;
  return v;
}

Var Tape::external(std::span<const double> values) {
  Var v = push(Op::External, 0, 0, 0, false);
  nodes_[v.id].size = static_cast<std::uint32_t>(values.size());
  nodes_[v.id].ext = values.data();
  return v;
}

Var Tape::parameter(std::span<const double> values, std::span<double> grad_sink) {
  require(values.size() == grad_sink.size(), ErrorKind::ShapeMismatch, "gradient sink size mismatch");
  Var v = push(Op::Parameter, 0, 0, 0, true);
  nodes_[v.id].size = static_cast<std::uint32_t>(values.size());
  nodes_[v.id].ext = values.data();
  nodes_[v.id].sink = grad_sink.data();
  return v;
}

Var Tape::add(Var a, Var b) {
  check_same_size(a, b, "add");
  const std::size_t n = size(a);
  Var y = push(Op::Add, a.id, b.id, n, needs_grad(a) || needs_grad(b));
  const double* pa = ptr(a.id);
  const double* pb = ptr(b.id);
  double* py = mut(y.id);
  for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  return y;
}

Var Tape::sub(Var a, Var b) {
  check_same_size(a, b, "sub");
  const std::size_t n = size(a);
  Var y = push(Op::Sub, a.id, b.id, n, needs_grad(a) || needs_grad(b));
  const double* pa = ptr(a.id);
  const double* pb = ptr(b.id);
  double* py = mut(y.id);
  for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] - pb[i];
  return y;
}

Var Tape::mul(Var a, Var b) {
  check_same_size(a, b, "mul");
  const std::size_t n = size(a);
  Var y = push(Op::Mul, a.id, b.id, n, needs_grad(a) || needs_grad(b));
  const double* pa = ptr(a.id);
  const double* pb = ptr(b.id);
  double* py = mut(y.id);
  for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] * pb[i];
  return y;
}

Var Tape::scale(Var a, double c) {
  const std::size_t n = size(a);
  Var y = push(Op::Scale, a.id, 0, n, needs_grad(a), 0, c);
  const double* pa = ptr(a.id);
  double* py = mut(y.id);
  for (std::size_t i = 0; i < n; ++i) py[i] = c * pa[i];
  return y;
}

Var Tape::shift(Var a, double c) {
  const std::size_t n = size(a);
  Var y = push(Op::Shift, a.id, 0, n, needs_grad(a), 0, c);
  const double* pa = ptr(a.id);
  double* py = mut(y.id);
  for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] + c;
  return y;
}

Var Tape::matvec(Var x, Var w, std::size_t cols) {
  const std::size_t rows = size(x);
  if (size(w) != rows * cols) {
    fail(ErrorKind::ShapeMismatch, "matvec: weight has " + std::to_string(size(w)) +
                                       " entries, expected " + std::to_string(rows) + "x" +
                                       std::to_string(cols));
  }
  Var y = push(Op::MatVec, x.id, w.id, cols, needs_grad(x) || needs_grad(w),
               static_cast<std::uint32_t>(cols));
  const double* px = ptr(x.id);
  const double* pw = ptr(w.id);
  double* py = mut(y.id);
  std::fill(py, py + cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double xi = px[i];
    if (xi == 0.0) continue;
    const double* row = pw + i * cols;
    for (std::size_t j = 0; j < cols; ++j) py[j] += xi * row[j];
  }
  return y;
}

Var Tape::unary(Op op, Var a) {
  const std::size_t n = size(a);
  Var y = push(op, a.id, 0, n, needs_grad(a));
  const double* pa = ptr(a.id);
  double* py = mut(y.id);
  switch (op) {
    case Op::Tanh:
      for (std::size_t i = 0; i < n; ++i) py[i] = std::tanh(pa[i]);
      break;
    case Op::Softplus:
      for (std::size_t i = 0; i < n; ++i) py[i] = ad::softplus(pa[i]);
      break;
    case Op::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) py[i] = ad::sigmoid(pa[i]);
      break;
    case Op::Log:
      for (std::size_t i = 0; i < n; ++i) py[i] = std::log(pa[i]);
      break;
    case Op::Exp:
      for (std::size_t i = 0; i < n; ++i) py[i] = std::exp(pa[i]);
      break;
    case Op::Square:
      for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] * pa[i];
      break;
    case Op::Reciprocal:
      for (std::size_t i = 0; i < n; ++i) py[i] = 1.0 / pa[i];
      break;
    case Op::Relu:
      for (std::size_t i = 0; i < n; ++i) py[i] = pa[i] > 0.0 ? pa[i] : 0.0;
      break;
    default:
      fail(ErrorKind::UnsupportedPrimitive, "not a unary primitive");
  }
  return y;
}

Var Tape::tanh(Var a) { return unary(Op::Tanh, a); }
Var Tape::softplus(Var a) { return unary(Op::Softplus, a); }
Var Tape::sigmoid(Var a) { return unary(Op::Sigmoid, a); }
Var Tape::log(Var a) { return unary(Op::Log, a); }
Var Tape::exp(Var a) { return unary(Op::Exp, a); }
Var Tape::square(Var a) { return unary(Op::Square, a); }
Var Tape::reciprocal(Var a) { return unary(Op::Reciprocal, a); }
Var Tape::relu(Var a) { return unary(Op::Relu, a); }

Var Tape::log_floor(Var a, double floor) {
  const std::size_t n = size(a);
  Var y = push(Op::LogFloor, a.id, 0, n, needs_grad(a), 0, floor);
  const double* pa = ptr(a.id);
  double* py = mut(y.id);
  for (std::size_t i = 0; i < n; ++i) py[i] = std::log(std::max(pa[i], floor));
  return y;
}

Var Tape::sum(Var a) {
  const std::size_t n = size(a);
  Var y = push(Op::Sum, a.id, 0, 1, needs_grad(a));
  const double* pa = ptr(a.id);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += pa[i];
  *mut(y.id) = s;
  return y;
}

Var Tape::concat(Var a, Var b) {
  const std::size_t na = size(a);
  const std::size_t nb = size(b);
  Var y = push(Op::Concat, a.id, b.id, na + nb, needs_grad(a) || needs_grad(b));
  const double* pa = ptr(a.id);
  const double* pb = ptr(b.id);
  double* py = mut(y.id);
  std::copy(pa, pa + na, py);
  std::copy(pb, pb + nb, py + na);
  return y;
}

Var Tape::slice(Var a, std::size_t begin, std::size_t count) {
  require(begin + count <= size(a), ErrorKind::ShapeMismatch, "slice out of range");
  Var y = push(Op::Slice, a.id, 0, count, needs_grad(a), static_cast<std::uint32_t>(begin));
  const double* pa = ptr(a.id);
  std::copy(pa + begin, pa + begin + count, mut(y.id));
  return y;
}

Var Tape::broadcast(Var scalar, std::size_t n) {
  require(size(scalar) == 1, ErrorKind::ShapeMismatch, "broadcast expects a scalar");
  Var y = push(Op::Broadcast, scalar.id, 0, n, needs_grad(scalar));
  const double s = ptr(scalar.id)[0];
  std::fill(mut(y.id), mut(y.id) + n, s);
  return y;
}

void Tape::backward(Var loss, double seed) {
  require(size(loss) == 1, ErrorKind::ShapeMismatch, "backward expects a scalar loss");
  if (!needs_grad(loss)) return;
  std::size_t total = 0;
  for (std::uint32_t i = 0; i <= loss.id; ++i) {
    if (nodes_[i].needs_grad) {
      nodes_[i].adj = total;
      total += nodes_[i].size;
    }
  }
  adjoint_.assign(total, 0.0);
  adjoint_[nodes_[loss.id].adj] = seed;

  for (std::int64_t id = loss.id; id >= 0; --id) {
    const Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.needs_grad) continue;
    const double* g = adjoint_.data() + n.adj;
    const std::size_t sz = n.size;
    const double* y = ptr(static_cast<std::uint32_t>(id));
    const bool ga_on = n.op != Op::Parameter && n.op != Op::Constant && n.op != Op::External &&
                       nodes_[n.a].needs_grad;
    const bool gb_on = (n.op == Op::Add || n.op == Op::Sub || n.op == Op::Mul ||
                        n.op == Op::MatVec || n.op == Op::Concat) &&
                       nodes_[n.b].needs_grad;
    double* ga = ga_on ? adjoint_.data() + nodes_[n.a].adj : nullptr;
    double* gb = gb_on ? adjoint_.data() + nodes_[n.b].adj : nullptr;
    const double* xa = (n.op != Op::Parameter && n.op != Op::Constant && n.op != Op::External)
                           ? ptr(n.a)
                           : nullptr;

    switch (n.op) {
      case Op::Parameter:
        for (std::size_t i = 0; i < sz; ++i) n.sink[i] += g[i];
        break;
      case Op::Constant:
      case Op::External:
        break;
      case Op::Add:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i];
        if (gb) for (std::size_t i = 0; i < sz; ++i) gb[i] += g[i];
        break;
      case Op::Sub:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i];
        if (gb) for (std::size_t i = 0; i < sz; ++i) gb[i] -= g[i];
        break;
      case Op::Mul: {
        const double* xb = ptr(n.b);
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * xb[i];
        if (gb) for (std::size_t i = 0; i < sz; ++i) gb[i] += g[i] * xa[i];
        break;
      }
      case Op::Scale:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += n.aux * g[i];
        break;
      case Op::Shift:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i];
        break;
      case Op::MatVec: {
        const std::size_t cols = n.cols;
        const std::size_t rows = nodes_[n.a].size;
        const double* w = ptr(n.b);
        if (ga) {
          for (std::size_t i = 0; i < rows; ++i) {
            const double* row = w + i * cols;
            double s = 0.0;
            for (std::size_t j = 0; j < cols; ++j) s += row[j] * g[j];
            ga[i] += s;
          }
        }
        if (gb) {
          for (std::size_t i = 0; i < rows; ++i) {
            const double xi = xa[i];
            if (xi == 0.0) continue;
            double* grow = gb + i * cols;
            for (std::size_t j = 0; j < cols; ++j) grow[j] += xi * g[j];
          }
        }
        break;
      }
      case Op::Tanh:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
        break;
      case Op::Softplus:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * ad::sigmoid(xa[i]);
        break;
      case Op::Sigmoid:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
        break;
      case Op::Log:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] / xa[i];
        break;
      case Op::LogFloor:
        if (ga) {
          for (std::size_t i = 0; i < sz; ++i) {
            if (xa[i] >= n.aux) ga[i] += g[i] / xa[i];
          }
        }
        break;
      case Op::Exp:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += g[i] * y[i];
        break;
      case Op::Square:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += 2.0 * xa[i] * g[i];
        break;
      case Op::Reciprocal:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] -= g[i] * y[i] * y[i];
        break;
      case Op::Relu:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[i] += xa[i] > 0.0 ? g[i] : 0.0;
        break;
      case Op::Sum:
        if (ga) {
          const std::size_t na = nodes_[n.a].size;
          for (std::size_t i = 0; i < na; ++i) ga[i] += g[0];
        }
        break;
      case Op::Concat: {
        const std::size_t na = nodes_[n.a].size;
        if (ga) for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
        if (gb) for (std::size_t i = na; i < sz; ++i) gb[i - na] += g[i];
        break;
      }
      case Op::Slice:
        if (ga) for (std::size_t i = 0; i < sz; ++i) ga[n.cols + i] += g[i];
        break;
      case Op::Broadcast:
        if (ga) {
          double s = 0.0;
          for (std::size_t i = 0; i < sz; ++i) s += g[i];
          ga[0] += s;
        }
        break;
    }
  }
}

void Tape::clear() {
  nodes_.clear();
  arena_.clear();
  adjoint_.clear();
}

// ---- dual arithmetic --------------------------------------------------------

Dual apply(Tape& t, UnaryFn fn, Dual x) {
  switch (fn) {
    case UnaryFn::Tanh: {
      Var y = t.tanh(x.value);
      Var dy = t.shift(t.scale(t.square(y), -1.0), 1.0);  // 1 - y^2
      return {y, t.mul(dy, x.dtau)};
    }
    case UnaryFn::Softplus: {
      Var y = t.softplus(x.value);
      return {y, t.mul(t.sigmoid(x.value), x.dtau)};
    }
    case UnaryFn::Sigmoid: {
      Var y = t.sigmoid(x.value);
      Var dy = t.mul(y, t.shift(t.scale(y, -1.0), 1.0));
      return {y, t.mul(dy, x.dtau)};
    }
    case UnaryFn::Exp: {
      Var y = t.exp(x.value);
      return {y, t.mul(y, x.dtau)};
    }
    case UnaryFn::Log: {
      Var y = t.log(x.value);
      return {y, t.mul(t.reciprocal(x.value), x.dtau)};
    }
    case UnaryFn::Square: {
      Var y = t.square(x.value);
      return {y, t.mul(t.scale(x.value, 2.0), x.dtau)};
    }
    case UnaryFn::Relu:
      fail(ErrorKind::UnsupportedPrimitive, "relu has no usable second derivative for the tau channel");
  }
  fail(ErrorKind::UnsupportedPrimitive, "unknown unary function");
}

Dual add(Tape& t, Dual a, Dual b) { return {t.add(a.value, b.value), t.add(a.dtau, b.dtau)}; }

Dual mul(Tape& t, Dual a, Dual b) {
  return {t.mul(a.value, b.value), t.add(t.mul(a.dtau, b.value), t.mul(a.value, b.dtau))};
}

Dual scale(Tape& t, Dual a, double c) { return {t.scale(a.value, c), t.scale(a.dtau, c)}; }

Dual affine(Tape& t, Dual x, Var w, Var b, std::size_t cols) {
  return {t.add(t.matvec(x.value, w, cols), b), t.matvec(x.dtau, w, cols)};
}

Dual concat(Tape& t, Dual a, Dual b) {
  return {t.concat(a.value, b.value), t.concat(a.dtau, b.dtau)};
}

Dual lift(Tape& t, Var v) {
  std::vector<double> zeros(t.size(v), 0.0);
  return {v, t.constant(zeros)};
}

}  // namespace bnhp::ad
