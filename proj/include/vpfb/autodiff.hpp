#ifndef VPFB_AUTODIFF_HPP
#define VPFB_AUTODIFF_HPP

// Reverse-mode automatic differentiation over dense matrices.
//
// Every node of the tape holds an eagerly evaluated Eigen matrix. Backward
// rules are written in terms of the same differentiable operations, so the
// result of Tape::grad(..., create_graph = true) is itself part of the graph
// and can be differentiated again. This is what lets a loss contain
// grad_x Phi and still be differentiated with respect to the parameters.
//
//   ad::Tape tape;
//   ad::Var x = tape.variable(X);
//   ad::Var y = ad::sum(ad::activation(x, ad::Activation::tanh));
//   auto [dx] = tape.grad(y, {x}, true);      // dx is differentiable
//   auto [ddx] = tape.grad(ad::sum(dx), {x}); // second derivative

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <initializer_list>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "vpfb/error.hpp"

namespace vpfb::ad {

using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Smooth elementwise nonlinearities. Derivatives are available up to
/// order 3 (sin: any order), which covers gradients of gradients.
enum class Activation : std::uint8_t { tanh, softplus, silu, gelu, sin };

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::tanh: return "tanh";
    case Activation::softplus: return "softplus";
    case Activation::silu: return "silu";
    case Activation::gelu: return "gelu";
    case Activation::sin: return "sin";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "softplus") return Activation::softplus;
  if (s == "silu") return Activation::silu;
  if (s == "gelu") return Activation::gelu;
  if (s == "sin") return Activation::sin;
  throw ConfigError("unknown activation '" + s + "'");
}

inline constexpr int kMaxActivationOrder = 3;

/// k-th derivative of the activation evaluated at z.
inline double activation_derivative(Activation a, int order, double z) {
  using std::exp;
  if (a == Activation::sin) return std::sin(z + 0.5 * std::numbers::pi * order);
  if (order > kMaxActivationOrder) {
    throw std::logic_error("activation derivative of order " + std::to_string(order) + " not available");
  }
  switch (a) {
    case Activation::tanh: {
      const double th = std::tanh(z);
      const double s = 1.0 - th * th;
      switch (order) {
        case 0: return th;
        case 1: return s;
        case 2: return -2.0 * th * s;
        default: return s * (6.0 * th * th - 2.0);
      }
    }
    case Activation::softplus: {
      const double sg = z >= 0 ? 1.0 / (1.0 + exp(-z)) : exp(z) / (1.0 + exp(z));
      switch (order) {
        case 0: return z > 0 ? z + std::log1p(exp(-z)) : std::log1p(exp(z));
        case 1: return sg;
        case 2: return sg * (1.0 - sg);
        default: return sg * (1.0 - sg) * (1.0 - 2.0 * sg);
      }
    }
    case Activation::silu: {
      const double sg = z >= 0 ? 1.0 / (1.0 + exp(-z)) : exp(z) / (1.0 + exp(z));
      const double ds = sg * (1.0 - sg);
      switch (order) {
        case 0: return z * sg;
        case 1: return sg + z * ds;
        case 2: return ds * (2.0 + z * (1.0 - 2.0 * sg));
        default: return ds * ((1.0 - 2.0 * sg) * (3.0 + z * (1.0 - 2.0 * sg)) - 2.0 * z * ds);
      }
    }
    case Activation::gelu: {
      // Exact GELU, z * Phi(z).
      const double pdf = exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
      const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
      switch (order) {
        case 0: return z * cdf;
        case 1: return cdf + z * pdf;
        case 2: return pdf * (2.0 - z * z);
        default: return pdf * (z * z * z - 4.0 * z);
      }
    }
    case Activation::sin: break;
  }
  return 0.0;
}

class Tape;

/// Handle to a tape node. Cheap to copy; valid while its tape is alive.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  /// Value of a 1x1 node.
  double scalar() const;
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

enum class Op : std::uint8_t {
  leaf,
  matmul,
  transpose,
  add,
  sub,
  mul,
  scale,
  add_scalar,
  reciprocal,
  sqrt,
  activation,
  sum_rows,        // B x n -> 1 x n
  broadcast_rows,  // 1 x n -> B x n
  sum_cols,        // B x n -> B x 1
  broadcast_cols,  // B x 1 -> B x n
  concat_cols,
  slice_cols,
  pad_cols,
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives gradients.
  Var constant(Matrix value) { return push(std::move(value), Op::leaf, {}, false); }
  /// Leaf that gradients can be taken with respect to.
  Var variable(Matrix value) { return push(std::move(value), Op::leaf, {}, true); }
  Var scalar_constant(double v) { return constant(Matrix::Constant(1, 1, v)); }

  std::size_t size() const { return nodes_.size(); }

  /// Gradients of the 1x1 node `y` with respect to each of `wrt`.
  ///
  /// With create_graph the returned nodes are differentiable functions of the
  /// tape's variables; otherwise they are constants. Inputs that `y` does not
  /// depend on get a zero gradient of matching shape.
  std::vector<Var> grad(Var y, std::span<const Var> wrt, bool create_graph = false);
  std::vector<Var> grad(Var y, std::initializer_list<Var> wrt, bool create_graph = false) {
    return grad(y, std::span<const Var>(wrt.begin(), wrt.size()), create_graph);
  }

 private:
  friend class Var;
  friend Var matmul(Var, Var);
  friend Var transpose(Var);
  friend Var operator+(Var, Var);
  friend Var operator-(Var, Var);
  friend Var operator*(Var, Var);
  friend Var operator*(double, Var);
  friend Var operator+(Var, double);
  friend Var reciprocal(Var);
  friend Var sqrt(Var);
  friend Var activation(Var, Activation, int);
  friend Var sum_rows(Var);
  friend Var broadcast_rows(Var, Index);
  friend Var sum_cols(Var);
  friend Var broadcast_cols(Var, Index);
  friend Var concat_cols(Var, Var);
  friend Var slice_cols(Var, Index, Index);
  friend Var pad_cols(Var, Index, Index);

  struct Node {
    Matrix value;
    Op op = Op::leaf;
    std::array<int, 2> in{-1, -1};
    double scalar = 0.0;
    Index i0 = 0, i1 = 0;  // op-specific integer arguments
    Activation act = Activation::tanh;
    int order = 0;
    bool requires_grad = false;
  };

  Var push(Matrix value, Op op, std::array<int, 2> in, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.in = in;
    n.requires_grad = requires_grad && !no_grad_;
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
  }

  Var derived(Matrix value, Op op, std::array<int, 2> in) {
    bool rg = false;
    for (int i : in) {
      if (i >= 0 && nodes_[static_cast<std::size_t>(i)].requires_grad) rg = true;
    }
    return push(std::move(value), op, in, rg);
  }

  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
  Var handle(int id) { return Var(this, id); }

  void backward_node(int id, Var g, std::vector<Var>& adj, const std::vector<char>& needed);
  void accumulate(std::vector<Var>& adj, int id, Var g);

  std::deque<Node> nodes_;
  bool no_grad_ = false;
};

inline const Matrix& Var::value() const {
  if (tape_ == nullptr) throw std::logic_error("ad::Var: empty handle");
  return tape_->node(id_).value;
}

inline double Var::scalar() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) throw ConfigError("ad::Var::scalar on a non 1x1 node");
  return v(0, 0);
}

inline bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

namespace detail {

inline Tape* same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape()) throw std::logic_error("ad: operands live on different tapes");
  return a.tape();
}

inline void check_shape(bool ok, const char* op, Var a, Var b) {
  if (!ok) {
    throw ConfigError(std::string("ad::") + op + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                      std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
  }
}

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Tape* t = detail::same_tape(a, b);
  detail::check_shape(a.cols() == b.rows(), "matmul", a, b);
  Matrix v = a.value() * b.value();
  return t->derived(std::move(v), Op::matmul, {a.id(), b.id()});
}

inline Var transpose(Var a) {
  Matrix v = a.value().transpose();
  return a.tape()->derived(std::move(v), Op::transpose, {a.id(), -1});
}

inline Var operator+(Var a, Var b) {
  Tape* t = detail::same_tape(a, b);
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  Matrix v = a.value() + b.value();
  return t->derived(std::move(v), Op::add, {a.id(), b.id()});
}

inline Var operator-(Var a, Var b) {
  Tape* t = detail::same_tape(a, b);
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  Matrix v = a.value() - b.value();
  return t->derived(std::move(v), Op::sub, {a.id(), b.id()});
}

/// Elementwise (Hadamard) product.
inline Var operator*(Var a, Var b) {
  Tape* t = detail::same_tape(a, b);
  detail::check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
  Matrix v = a.value().cwiseProduct(b.value());
  return t->derived(std::move(v), Op::mul, {a.id(), b.id()});
}

inline Var operator*(double c, Var a) {
  Matrix v = c * a.value();
  Var out = a.tape()->derived(std::move(v), Op::scale, {a.id(), -1});
  a.tape()->node(out.id()).scalar = c;
  return out;
}

inline Var operator+(Var a, double c) {
  Matrix v = a.value().array() + c;
  Var out = a.tape()->derived(std::move(v), Op::add_scalar, {a.id(), -1});
  a.tape()->node(out.id()).scalar = c;
  return out;
}

inline Var operator-(Var a) { return -1.0 * a; }

/// Elementwise 1/a, with the convention 1/0 = 0.
inline Var reciprocal(Var a) {
  Matrix v = a.value().unaryExpr([](double x) { return x == 0.0 ? 0.0 : 1.0 / x; });
  return a.tape()->derived(std::move(v), Op::reciprocal, {a.id(), -1});
}

/// Elementwise square root. The derivative at 0 is taken as 0.
inline Var sqrt(Var a) {
  Matrix v = a.value().cwiseSqrt();
  return a.tape()->derived(std::move(v), Op::sqrt, {a.id(), -1});
}

/// Elementwise k-th derivative of an activation (order 0 is the function).
inline Var activation(Var a, Activation act, int order = 0) {
  Matrix v = a.value().unaryExpr([&](double z) { return activation_derivative(act, order, z); });
  Var out = a.tape()->derived(std::move(v), Op::activation, {a.id(), -1});
  auto& n = a.tape()->node(out.id());
  n.act = act;
  n.order = order;
  return out;
}

inline Var sum_rows(Var a) {
  Matrix v = a.value().colwise().sum();
  return a.tape()->derived(std::move(v), Op::sum_rows, {a.id(), -1});
}

inline Var broadcast_rows(Var a, Index rows) {
  if (a.rows() != 1) throw ConfigError("ad::broadcast_rows expects a row vector");
  Matrix v = a.value().replicate(rows, 1);
  Var out = a.tape()->derived(std::move(v), Op::broadcast_rows, {a.id(), -1});
  a.tape()->node(out.id()).i0 = rows;
  return out;
}

inline Var sum_cols(Var a) {
  Matrix v = a.value().rowwise().sum();
  return a.tape()->derived(std::move(v), Op::sum_cols, {a.id(), -1});
}

inline Var broadcast_cols(Var a, Index cols) {
  if (a.cols() != 1) throw ConfigError("ad::broadcast_cols expects a column vector");
  Matrix v = a.value().replicate(1, cols);
  Var out = a.tape()->derived(std::move(v), Op::broadcast_cols, {a.id(), -1});
  a.tape()->node(out.id()).i0 = cols;
  return out;
}

inline Var concat_cols(Var a, Var b) {
  Tape* t = detail::same_tape(a, b);
  detail::check_shape(a.rows() == b.rows(), "concat_cols", a, b);
  Matrix v(a.rows(), a.cols() + b.cols());
  v << a.value(), b.value();
  return t->derived(std::move(v), Op::concat_cols, {a.id(), b.id()});
}

inline Var slice_cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) throw ConfigError("ad::slice_cols out of range");
  Matrix v = a.value().middleCols(start, count);
  Var out = a.tape()->derived(std::move(v), Op::slice_cols, {a.id(), -1});
  auto& n = a.tape()->node(out.id());
  n.i0 = start;
  n.i1 = count;
  return out;
}

/// Places `a` at column offset `start` inside a zero matrix with `total` columns.
inline Var pad_cols(Var a, Index start, Index total) {
  if (start < 0 || start + a.cols() > total) throw ConfigError("ad::pad_cols out of range");
  Matrix v = Matrix::Zero(a.rows(), total);
  v.middleCols(start, a.cols()) = a.value();
  Var out = a.tape()->derived(std::move(v), Op::pad_cols, {a.id(), -1});
  auto& n = a.tape()->node(out.id());
  n.i0 = start;
  n.i1 = total;
  return out;
}

// Composite helpers.

/// Sum of all entries, as a 1x1 node.
inline Var sum(Var a) { return sum_rows(sum_cols(a)); }
inline Var mean(Var a) { return (1.0 / static_cast<double>(a.rows() * a.cols())) * sum(a); }
inline Var square(Var a) { return a * a; }
/// Row-wise dot product of two B x n matrices, giving B x 1.
inline Var row_dot(Var a, Var b) { return sum_cols(a * b); }
/// Row-wise Euclidean norm, B x 1.
inline Var row_norm(Var a) { return sqrt(sum_cols(a * a)); }

inline void Tape::accumulate(std::vector<Var>& adj, int id, Var g) {
  Var& slot = adj[static_cast<std::size_t>(id)];
  slot = slot.valid() ? slot + g : g;
}

inline void Tape::backward_node(int id, Var g, std::vector<Var>& adj, const std::vector<char>& needed) {
  // Copy what we need: pushing new nodes may not move deque elements, but
  // keeping locals makes the rules easier to read.
  const Op op = node(id).op;
  const int a = node(id).in[0];
  const int b = node(id).in[1];
  auto want = [&](int i) { return i >= 0 && needed[static_cast<std::size_t>(i)] != 0; };

  switch (op) {
    case Op::leaf: break;
    case Op::matmul:
      if (no_grad_) {
        // Plain values: let Eigen fold the transposes into the product.
        if (want(a)) accumulate(adj, a, constant(g.value() * node(b).value.transpose()));
        if (want(b)) accumulate(adj, b, constant(node(a).value.transpose() * g.value()));
        break;
      }
      if (want(a)) accumulate(adj, a, matmul(g, transpose(handle(b))));
      if (want(b)) accumulate(adj, b, matmul(transpose(handle(a)), g));
      break;
    case Op::transpose:
      if (want(a)) accumulate(adj, a, transpose(g));
      break;
    case Op::add:
      if (want(a)) accumulate(adj, a, g);
      if (want(b)) accumulate(adj, b, g);
      break;
    case Op::sub:
      if (want(a)) accumulate(adj, a, g);
      if (want(b)) accumulate(adj, b, -g);
      break;
    case Op::mul:
      if (want(a)) accumulate(adj, a, g * handle(b));
      if (want(b)) accumulate(adj, b, g * handle(a));
      break;
    case Op::scale:
      if (want(a)) accumulate(adj, a, node(id).scalar * g);
      break;
    case Op::add_scalar:
      if (want(a)) accumulate(adj, a, g);
      break;
    case Op::reciprocal:
      if (want(a)) {
        Var out = handle(id);
        accumulate(adj, a, -(g * (out * out)));
      }
      break;
    case Op::sqrt:
      if (want(a)) accumulate(adj, a, 0.5 * (g * reciprocal(handle(id))));
      break;
    case Op::activation:
      if (want(a)) {
        const Activation act = node(id).act;
        const int order = node(id).order;
        accumulate(adj, a, g * activation(handle(a), act, order + 1));
      }
      break;
    case Op::sum_rows:
      if (want(a)) accumulate(adj, a, broadcast_rows(g, node(a).value.rows()));
      break;
    case Op::broadcast_rows:
      if (want(a)) accumulate(adj, a, sum_rows(g));
      break;
    case Op::sum_cols:
      if (want(a)) accumulate(adj, a, broadcast_cols(g, node(a).value.cols()));
      break;
    case Op::broadcast_cols:
      if (want(a)) accumulate(adj, a, sum_cols(g));
      break;
    case Op::concat_cols: {
      const Index ca = node(a).value.cols();
      const Index cb = node(b).value.cols();
      if (want(a)) accumulate(adj, a, slice_cols(g, 0, ca));
      if (want(b)) accumulate(adj, b, slice_cols(g, ca, cb));
      break;
    }
    case Op::slice_cols: {
      const Index start = node(id).i0;
      const Index total = node(a).value.cols();
      if (want(a)) accumulate(adj, a, pad_cols(g, start, total));
      break;
    }
    case Op::pad_cols: {
      const Index start = node(id).i0;
      const Index count = node(a).value.cols();
      if (want(a)) accumulate(adj, a, slice_cols(g, start, count));
      break;
    }
  }
}

inline std::vector<Var> Tape::grad(Var y, std::span<const Var> wrt, bool create_graph) {
  if (y.tape() != this) throw std::logic_error("ad::Tape::grad: output from another tape");
  if (y.rows() != 1 || y.cols() != 1) {
    throw ConfigError("ad::Tape::grad: output must be a 1x1 scalar, got " + std::to_string(y.rows()) + "x" +
                      std::to_string(y.cols()));
  }
  const int top = y.id();
  const std::size_t n = static_cast<std::size_t>(top) + 1;

  // needed[i]: node i lies on a path from some wrt node to y.
  std::vector<char> depends(n, 0);
  for (const Var& w : wrt) {
    if (w.tape() != this) throw std::logic_error("ad::Tape::grad: input from another tape");
    if (w.id() <= top) depends[static_cast<std::size_t>(w.id())] = 1;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (depends[i]) continue;
    for (int in : nodes_[i].in) {
      if (in >= 0 && depends[static_cast<std::size_t>(in)]) depends[i] = 1;
    }
  }

  const bool saved = no_grad_;
  no_grad_ = !create_graph;

  std::vector<Var> adj(n);
  adj[static_cast<std::size_t>(top)] = scalar_constant(1.0);
  for (int id = top; id >= 0; --id) {
    if (!depends[static_cast<std::size_t>(id)]) continue;
    Var g = adj[static_cast<std::size_t>(id)];
    if (!g.valid()) continue;
    backward_node(id, g, adj, depends);
  }

  std::vector<Var> out;
  out.reserve(wrt.size());
  for (const Var& w : wrt) {
    Var g = w.id() <= top ? adj[static_cast<std::size_t>(w.id())] : Var();
    if (!g.valid()) g = constant(Matrix::Zero(w.rows(), w.cols()));
    out.push_back(g);
  }
  no_grad_ = saved;
  return out;
}

}  // namespace vpfb::ad

#endif  // VPFB_AUTODIFF_HPP
