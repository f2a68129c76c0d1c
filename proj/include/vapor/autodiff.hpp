#pragma once

// Tape-based reverse-mode differentiation over dense row-major Eigen matrices.
// Rows index the batch, columns index features. Every op appends one node, so
// node order is already a topological order and backward is a reverse sweep.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace vapor::ad {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Trainable tensor; `grad` accumulates across backward passes until zeroed.
template <typename S>
struct Parameter {
  std::string name;
  Matrix<S> value;
  Matrix<S> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<S> v) : name(std::move(n)), value(std::move(v)), grad(Matrix<S>::Zero(value.rows(), value.cols())) {}
  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename S>
class Tape;

template <typename S>
class Var {
 public:
  Var() = default;
  Var(Tape<S>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<S>& value() const { return tape_->value(*this); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  S scalar() const { return value()(0, 0); }
  Tape<S>* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  Tape<S>* tape_ = nullptr;
  int id_ = -1;
};

template <typename S>
class Tape {
 public:
  using Backward = std::function<void(Tape&, int)>;

  Var<S> constant(Matrix<S> value) { return push(std::move(value), {}, nullptr, false); }

  /// Binds a parameter as a leaf; untracked leaves behave as constants.
  Var<S> param(Parameter<S>& p, bool track = true) {
    Var<S> v = push(p.value, {}, nullptr, track);
    if (track) nodes_[v.id()].param = &p;
    return v;
  }

  Var<S> push(Matrix<S> value, const std::vector<Var<S>>& inputs, Backward backward, bool leaf_tracks = false) {
    Node node;
    node.value = std::move(value);
    node.needs_grad = leaf_tracks;
    for (const Var<S>& in : inputs) {
      check(in);
      node.inputs.push_back(in.id());
      node.needs_grad = node.needs_grad || nodes_[in.id()].needs_grad;
    }
    if (node.needs_grad) node.backward = std::move(backward);
    nodes_.push_back(std::move(node));
    return Var<S>(this, static_cast<int>(nodes_.size()) - 1);
  }

  const Matrix<S>& value(const Var<S>& v) const { return nodes_[checked(v)].value; }
  const Matrix<S>& grad(int id) const { return nodes_[id].grad; }
  const Matrix<S>& value(int id) const { return nodes_[id].value; }
  int input(int id, int k) const { return nodes_[id].inputs[k]; }
  bool needs_grad(int id) const { return nodes_[id].needs_grad; }

  /// Adds `g` into the gradient of node `id` when that node leads to a parameter.
  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived>& g) {
    Node& n = nodes_[id];
    if (!n.needs_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a scalar loss; parameter gradients are accumulated.
  void backward(const Var<S>& loss) {
    const int root = checked(loss);
    if (nodes_[root].value.rows() != 1 || nodes_[root].value.cols() != 1) {
      throw std::invalid_argument("backward requires a scalar loss");
    }
    if (!nodes_[root].needs_grad) return;
    nodes_[root].grad = Matrix<S>::Ones(1, 1);
    for (int id = root; id >= 0; --id) {
      Node& n = nodes_[id];
      if (!n.needs_grad || n.grad.size() == 0) continue;
      if (n.param != nullptr) {
        n.param->grad += n.grad;
      } else if (n.backward) {
        n.backward(*this, id);
      }
    }
  }

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<S> value;
    Matrix<S> grad;
    std::vector<int> inputs;
    Backward backward;
    Parameter<S>* param = nullptr;
    bool needs_grad = false;
  };

  void check(const Var<S>& v) const { (void)checked(v); }
  int checked(const Var<S>& v) const {
    if (v.tape() != this || v.id() < 0 || v.id() >= static_cast<int>(nodes_.size())) {
      throw std::invalid_argument("variable does not belong to this tape");
    }
    return v.id();
  }

  std::vector<Node> nodes_;
};

namespace detail {
template <typename S>
void require_same_shape(const Var<S>& a, const Var<S>& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shape mismatch");
  }
}
}  // namespace detail

template <typename S>
Var<S> matmul(const Var<S>& a, const Var<S>& b) {
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  Tape<S>& t = *a.tape();
  return t.push(a.value() * b.value(), {a, b}, [](Tape<S>& t, int id) {
    const int ia = t.input(id, 0), ib = t.input(id, 1);
    const Matrix<S>& g = t.grad(id);
    if (t.needs_grad(ia)) t.accumulate(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate(ib, t.value(ia).transpose() * g);
  });
}

/// x (B x F) plus a broadcast row b (1 x F).
template <typename S>
Var<S> add_row(const Var<S>& x, const Var<S>& b) {
  if (b.rows() != 1 || b.cols() != x.cols()) throw std::invalid_argument("add_row: bias shape mismatch");
  Tape<S>& t = *x.tape();
  Matrix<S> out = x.value().rowwise() + b.value().row(0);
  return t.push(std::move(out), {x, b}, [](Tape<S>& t, int id) {
    const Matrix<S>& g = t.grad(id);
    t.accumulate(t.input(id, 0), g);
    if (t.needs_grad(t.input(id, 1))) t.accumulate(t.input(id, 1), g.colwise().sum());
  });
}

/// x (R x C) scaled rowwise by g (R x 1).
template <typename S>
Var<S> mul_col(const Var<S>& x, const Var<S>& g) {
  if (g.cols() != 1 || g.rows() != x.rows()) throw std::invalid_argument("mul_col: gate shape mismatch");
  Tape<S>& t = *x.tape();
  Matrix<S> out = x.value().array().colwise() * g.value().col(0).array();
  return t.push(std::move(out), {x, g}, [](Tape<S>& t, int id) {
    const int ix = t.input(id, 0), ig = t.input(id, 1);
    const Matrix<S>& gr = t.grad(id);
    if (t.needs_grad(ix)) t.accumulate(ix, (gr.array().colwise() * t.value(ig).col(0).array()).matrix());
    if (t.needs_grad(ig)) t.accumulate(ig, (gr.array() * t.value(ix).array()).rowwise().sum().matrix());
  });
}

template <typename S>
Var<S> operator+(const Var<S>& a, const Var<S>& b) {
  detail::require_same_shape(a, b, "add");
  return a.tape()->push(a.value() + b.value(), {a, b}, [](Tape<S>& t, int id) {
    t.accumulate(t.input(id, 0), t.grad(id));
    t.accumulate(t.input(id, 1), t.grad(id));
  });
}

template <typename S>
Var<S> operator-(const Var<S>& a, const Var<S>& b) {
  detail::require_same_shape(a, b, "sub");
  return a.tape()->push(a.value() - b.value(), {a, b}, [](Tape<S>& t, int id) {
    t.accumulate(t.input(id, 0), t.grad(id));
    t.accumulate(t.input(id, 1), -t.grad(id));
  });
}

/// Elementwise product.
template <typename S>
Var<S> operator*(const Var<S>& a, const Var<S>& b) {
  detail::require_same_shape(a, b, "mul");
  Matrix<S> out = a.value().cwiseProduct(b.value());
  return a.tape()->push(std::move(out), {a, b}, [](Tape<S>& t, int id) {
    const int ia = t.input(id, 0), ib = t.input(id, 1);
    if (t.needs_grad(ia)) t.accumulate(ia, t.grad(id).cwiseProduct(t.value(ib)));
    if (t.needs_grad(ib)) t.accumulate(ib, t.grad(id).cwiseProduct(t.value(ia)));
  });
}

template <typename S>
Var<S> scale(const Var<S>& a, S c) {
  return a.tape()->push(a.value() * c, {a}, [c](Tape<S>& t, int id) { t.accumulate(t.input(id, 0), t.grad(id) * c); });
}

template <typename S>
Var<S> add_scalar(const Var<S>& a, S c) {
  Matrix<S> out = a.value().array() + c;
  return a.tape()->push(std::move(out), {a}, [](Tape<S>& t, int id) { t.accumulate(t.input(id, 0), t.grad(id)); });
}

template <typename S>
Var<S> operator-(const Var<S>& a) {
  return scale(a, S(-1));
}

namespace detail {
// Unary elementwise op whose derivative is expressed through input x and output y.
template <typename S, typename F, typename D>
Var<S> unary(const Var<S>& a, F f, D dfdx) {
  Matrix<S> out = a.value().unaryExpr(f);
  return a.tape()->push(std::move(out), {a}, [dfdx](Tape<S>& t, int id) {
    const int ia = t.input(id, 0);
    const Matrix<S>& x = t.value(ia);
    const Matrix<S>& y = t.value(id);
    Matrix<S> d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) d.data()[i] = dfdx(x.data()[i], y.data()[i]);
    t.accumulate(ia, t.grad(id).cwiseProduct(d));
  });
}
}  // namespace detail

template <typename S>
Var<S> relu(const Var<S>& a) {
  return detail::unary(a, [](S x) { return x > S(0) ? x : S(0); }, [](S x, S) { return x > S(0) ? S(1) : S(0); });
}

template <typename S>
Var<S> tanh(const Var<S>& a) {
  return detail::unary(a, [](S x) { return std::tanh(x); }, [](S, S y) { return S(1) - y * y; });
}

template <typename S>
Var<S> sigmoid(const Var<S>& a) {
  return detail::unary(
      a, [](S x) { return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x)); },
      [](S, S y) { return y * (S(1) - y); });
}

template <typename S>
Var<S> exp(const Var<S>& a) {
  return detail::unary(a, [](S x) { return std::exp(x); }, [](S, S y) { return y; });
}

template <typename S>
Var<S> log(const Var<S>& a) {
  return detail::unary(a, [](S x) { return std::log(x); }, [](S x, S) { return S(1) / x; });
}

/// log(1 + e^x), computed without overflow.
template <typename S>
Var<S> softplus(const Var<S>& a) {
  return detail::unary(
      a, [](S x) { return x > S(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
      [](S x, S) { return x >= S(0) ? S(1) / (S(1) + std::exp(-x)) : std::exp(x) / (S(1) + std::exp(x)); });
}

template <typename S>
Var<S> square(const Var<S>& a) {
  return detail::unary(a, [](S x) { return x * x; }, [](S x, S) { return S(2) * x; });
}

/// Clamp with zero gradient outside [lo, hi].
template <typename S>
Var<S> clamp(const Var<S>& a, S lo, S hi) {
  return detail::unary(
      a, [lo, hi](S x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](S x, S) { return (x >= lo && x <= hi) ? S(1) : S(0); });
}

/// Elementwise minimum; ties route the gradient to `a`.
template <typename S>
Var<S> minimum(const Var<S>& a, const Var<S>& b) {
  detail::require_same_shape(a, b, "minimum");
  Matrix<S> out = a.value().cwiseMin(b.value());
  return a.tape()->push(std::move(out), {a, b}, [](Tape<S>& t, int id) {
    const int ia = t.input(id, 0), ib = t.input(id, 1);
    const Matrix<S>& g = t.grad(id);
    const auto pick_a = (t.value(ia).array() <= t.value(ib).array());
    if (t.needs_grad(ia)) t.accumulate(ia, pick_a.select(g.array(), S(0)).matrix());
    if (t.needs_grad(ib)) t.accumulate(ib, pick_a.select(S(0), g.array()).matrix());
  });
}

template <typename S>
Var<S> sum(const Var<S>& a) {
  Matrix<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape()->push(std::move(out), {a}, [](Tape<S>& t, int id) {
    const int ia = t.input(id, 0);
    t.accumulate(ia, Matrix<S>::Constant(t.value(ia).rows(), t.value(ia).cols(), t.grad(id)(0, 0)));
  });
}

template <typename S>
Var<S> mean(const Var<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

/// Row sums: (R x C) -> (R x 1).
template <typename S>
Var<S> row_sum(const Var<S>& a) {
  Matrix<S> out = a.value().rowwise().sum();
  return a.tape()->push(std::move(out), {a}, [](Tape<S>& t, int id) {
    const int ia = t.input(id, 0);
    t.accumulate(ia, t.grad(id).col(0).replicate(1, t.value(ia).cols()));
  });
}

/// Row-wise log-sum-exp: (R x C) -> (R x 1).
template <typename S>
Var<S> row_logsumexp(const Var<S>& a) {
  const Matrix<S>& x = a.value();
  Matrix<S> out(x.rows(), 1);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const S m = x.row(r).maxCoeff();
    out(r, 0) = m + std::log((x.row(r).array() - m).exp().sum());
  }
  return a.tape()->push(std::move(out), {a}, [](Tape<S>& t, int id) {
    const int ia = t.input(id, 0);
    const Matrix<S>& x = t.value(ia);
    const Matrix<S>& y = t.value(id);
    Matrix<S> soft = (x.array().colwise() - y.col(0).array()).exp();
    t.accumulate(ia, (soft.array().colwise() * t.grad(id).col(0).array()).matrix());
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw std::invalid_argument("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<S> out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts.front().tape()->push(std::move(out), parts, [n = parts.size()](Tape<S>& t, int id) {
    Eigen::Index c = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const int ik = t.input(id, static_cast<int>(k));
      const Eigen::Index w = t.value(ik).cols();
      if (t.needs_grad(ik)) t.accumulate(ik, t.grad(id).middleCols(c, w));
      c += w;
    }
  });
}

template <typename S>
Var<S> slice_cols(const Var<S>& a, Eigen::Index start, Eigen::Index count) {
  if (start < 0 || count <= 0 || start + count > a.cols()) throw std::invalid_argument("slice_cols: out of range");
  Matrix<S> out = a.value().middleCols(start, count);
  return a.tape()->push(std::move(out), {a}, [start, count](Tape<S>& t, int id) {
    const int ia = t.input(id, 0);
    Matrix<S> g = Matrix<S>::Zero(t.value(ia).rows(), t.value(ia).cols());
    g.middleCols(start, count) = t.grad(id);
    t.accumulate(ia, g);
  });
}

/// Row-major reinterpretation; element order is unchanged.
template <typename S>
Var<S> reshape(const Var<S>& a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size()) throw std::invalid_argument("reshape: size mismatch");
  Matrix<S> out = Eigen::Map<const Matrix<S>>(a.value().data(), rows, cols);
  return a.tape()->push(std::move(out), {a}, [](Tape<S>& t, int id) {
    const int ia = t.input(id, 0);
    t.accumulate(ia, Eigen::Map<const Matrix<S>>(t.grad(id).data(), t.value(ia).rows(), t.value(ia).cols()));
  });
}

/// Repeats each row k times consecutively: (R x C) -> (R*k x C).
template <typename S>
Var<S> repeat_rows(const Var<S>& a, Eigen::Index k) {
  const Matrix<S>& x = a.value();
  Matrix<S> out(x.rows() * k, x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.middleRows(r * k, k) = x.row(r).replicate(k, 1);
  return a.tape()->push(std::move(out), {a}, [k](Tape<S>& t, int id) {
    const int ia = t.input(id, 0);
    const Matrix<S>& g = t.grad(id);
    Matrix<S> acc(t.value(ia).rows(), t.value(ia).cols());
    for (Eigen::Index r = 0; r < acc.rows(); ++r) acc.row(r) = g.middleRows(r * k, k).colwise().sum();
    t.accumulate(ia, acc);
  });
}

}  // namespace vapor::ad
