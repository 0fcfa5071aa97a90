// eda/diffcore.hpp
//
// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape records every operation applied to Vars during a forward pass. Each
// record owns its value, a lazily allocated gradient, and a closure that
// propagates its output gradient to its parents. backward() walks the records
// once, newest first. Parameters are leaves that alias externally owned
// storage; their gradients are accumulated into Parameter::grad.
//
// Everything is templated on the scalar type: double for gradient checks,
// float for training.

#ifndef EDA_DIFFCORE_HPP_
#define EDA_DIFFCORE_HPP_

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "eda/errors.hpp"

namespace eda::ad {

template <typename Scalar>
using Matrix =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Index = Eigen::Index;

template <typename Scalar>
struct Parameter {
  std::string name;
  Matrix<Scalar> value;
  Matrix<Scalar> grad;

  Parameter() = default;
  Parameter(std::string n, Matrix<Scalar> v)
      : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

template <typename Scalar>
class Tape;

template <typename Scalar>
struct Var {
  Tape<Scalar> *tape = nullptr;
  int id = -1;

  const Matrix<Scalar> &value() const { return tape->value(id); }
  const Matrix<Scalar> &grad() const { return tape->grad(id); }
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

template <typename Scalar>
class Tape {
 public:
  using Mat = Matrix<Scalar>;
  using V = Var<Scalar>;
  using BackwardFn = std::function<void(Tape &, const Mat &)>;

  Tape() = default;
  Tape(const Tape &) = delete;
  Tape &operator=(const Tape &) = delete;

  V constant(Mat value) { return push(std::move(value), false, nullptr); }

  // Leaf whose gradient is kept on the tape (read back with grad()).
  V variable(Mat value) { return push(std::move(value), true, nullptr); }

  // Leaf aliasing p.value; the tape never copies it. Gradients are
  // accumulated into p.grad during backward().
  V parameter(Parameter<Scalar> &p) {
    Node n;
    n.external = &p.value;
    n.requires_grad = track_grad_;
    n.param = &p;
    nodes_.push_back(std::move(n));
    return V{this, static_cast<int>(nodes_.size()) - 1};
  }

  // Records an op output. The closure only runs when some parent needs a
  // gradient.
  V record(Mat value, std::initializer_list<V> parents, BackwardFn fn) {
    bool rg = false;
    for (const V &p : parents) {
      check_same_tape(p);
      rg = rg || nodes_[p.id].requires_grad;
    }
    return push(std::move(value), rg, rg ? std::move(fn) : nullptr);
  }
  V record(Mat value, std::span<const V> parents, BackwardFn fn) {
    bool rg = false;
    for (const V &p : parents) {
      check_same_tape(p);
      rg = rg || nodes_[p.id].requires_grad;
    }
    return push(std::move(value), rg, rg ? std::move(fn) : nullptr);
  }

  const Mat &value(int id) const {
    const Node &n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  const Mat &grad(int id) const {
    const Node &n = nodes_[id];
    if (n.grad.size() == 0) {
      zero_scratch_.setZero(value(id).rows(), value(id).cols());
      return zero_scratch_;
    }
    return n.grad;
  }

  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  template <typename Derived>
  void accumulate(int id, const Eigen::MatrixBase<Derived> &g) {
    Node &n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  // Adds g into the block of the gradient starting at (row, col).
  template <typename Derived>
  void accumulate_block(int id, Index row, Index col,
                        const Eigen::MatrixBase<Derived> &g) {
    Node &n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad.setZero(value(id).rows(), value(id).cols());
    n.grad.block(row, col, g.rows(), g.cols()) += g;
  }

  // Seeds d(loss)/d(loss) = 1 and propagates. The loss must be 1x1.
  void backward(V loss) {
    check_same_tape(loss);
    const Mat &lv = value(loss.id);
    if (lv.rows() != 1 || lv.cols() != 1)
      throw ShapeError("backward() needs a scalar (1x1) loss");
    if (!nodes_[loss.id].requires_grad) return;
    accumulate(loss.id, Mat::Ones(1, 1));
    for (int id = loss.id; id >= 0; --id) {
      Node &n = nodes_[id];
      if (!n.requires_grad || n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param) {
        if (n.param->grad.size() == 0) n.param->zero_grad();
        n.param->grad += n.grad;
      }
    }
  }

  // Disables gradient tracking for parameters created afterwards, so
  // inference-only passes skip all backward bookkeeping.
  void set_track_grad(bool on) { track_grad_ = on; }

  // Checks each recorded value for NaN/Inf. On by default in debug builds.
  void set_check_finite(bool on) { check_finite_ = on; }

  std::size_t size() const { return nodes_.size(); }

  // Id the next recorded node will receive; lets a backward closure refer
  // to its own output value.
  int next_id() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    const Mat *external = nullptr;
    Mat grad;
    BackwardFn backward;
    bool requires_grad = false;
    Parameter<Scalar> *param = nullptr;
  };

  V push(Mat value, bool rg, BackwardFn fn) {
    if (check_finite_ && !value.allFinite())
      throw DivergenceError("non-finite value recorded on tape (node " +
                            std::to_string(nodes_.size()) + ")");
    Node n;
    n.value = std::move(value);
    n.requires_grad = rg;
    n.backward = std::move(fn);
    nodes_.push_back(std::move(n));
    return V{this, static_cast<int>(nodes_.size()) - 1};
  }

  void check_same_tape(const V &v) const {
    if (v.tape != this || v.id < 0 ||
        v.id >= static_cast<int>(nodes_.size()))
      throw ShapeError("Var does not belong to this tape");
  }

  std::deque<Node> nodes_;
  mutable Mat zero_scratch_;
  bool track_grad_ = true;
#ifdef NDEBUG
  bool check_finite_ = false;
#else
  bool check_finite_ = true;
#endif
};

namespace detail {

inline std::string shape_str(Index r, Index c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

template <typename Scalar>
void require_same_shape(const Var<Scalar> &a, const Var<Scalar> &b,
                        const char *op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: " + detail::shape_str(a.rows(), a.cols()) +
                     " * " + detail::shape_str(b.rows(), b.cols()));
  Matrix<Scalar> out = a.value() * b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b},
                        [ia, ib](Tape<Scalar> &t, const Matrix<Scalar> &g) {
                          if (t.requires_grad(ia))
                            t.accumulate(ia, g * t.value(ib).transpose());
                          if (t.requires_grad(ib))
                            t.accumulate(ib, t.value(ia).transpose() * g);
                        });
}

// a * b^T without materialising the transpose on the tape.
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  if (a.cols() != b.cols())
    throw ShapeError("matmul_nt: " + detail::shape_str(a.rows(), a.cols()) +
                     " * (" + detail::shape_str(b.rows(), b.cols()) + ")^T");
  Matrix<Scalar> out = a.value() * b.value().transpose();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b},
                        [ia, ib](Tape<Scalar> &t, const Matrix<Scalar> &g) {
                          if (t.requires_grad(ia)) t.accumulate(ia, g * t.value(ib));
                          if (t.requires_grad(ib))
                            t.accumulate(ib, g.transpose() * t.value(ia));
                        });
}

template <typename Scalar>
Var<Scalar> transpose(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().transpose();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a},
                        [ia](Tape<Scalar> &t, const Matrix<Scalar> &g) {
                          t.accumulate(ia, g.transpose());
                        });
}

// x * w + b, with b a 1 x out row broadcast over the rows of x.
template <typename Scalar>
Var<Scalar> linear(Var<Scalar> x, Var<Scalar> w, Var<Scalar> b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
    throw ShapeError("linear: x " + detail::shape_str(x.rows(), x.cols()) +
                     ", w " + detail::shape_str(w.rows(), w.cols()) + ", b " +
                     detail::shape_str(b.rows(), b.cols()));
  Matrix<Scalar> out = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  const int ix = x.id, iw = w.id, ib = b.id;
  return x.tape->record(
      std::move(out), {x, w, b},
      [ix, iw, ib](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        if (t.requires_grad(ix)) t.accumulate(ix, g * t.value(iw).transpose());
        if (t.requires_grad(iw)) t.accumulate(iw, t.value(ix).transpose() * g);
        if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
      });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "add");
  Matrix<Scalar> out = a.value() + b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b},
                        [ia, ib](Tape<Scalar> &t, const Matrix<Scalar> &g) {
                          t.accumulate(ia, g);
                          t.accumulate(ib, g);
                        });
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "sub");
  Matrix<Scalar> out = a.value() - b.value();
  const int ia = a.id, ib = b.id;
  return a.tape->record(std::move(out), {a, b},
                        [ia, ib](Tape<Scalar> &t, const Matrix<Scalar> &g) {
                          t.accumulate(ia, g);
                          t.accumulate(ib, -g);
                        });
}

// Hadamard product.
template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::require_same_shape(a, b, "mul");
  Matrix<Scalar> out = a.value().cwiseProduct(b.value());
  const int ia = a.id, ib = b.id;
  return a.tape->record(
      std::move(out), {a, b},
      [ia, ib](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        if (t.requires_grad(ia)) t.accumulate(ia, g.cwiseProduct(t.value(ib)));
        if (t.requires_grad(ib)) t.accumulate(ib, g.cwiseProduct(t.value(ia)));
      });
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar s) {
  Matrix<Scalar> out = a.value() * s;
  const int ia = a.id;
  return a.tape->record(std::move(out), {a},
                        [ia, s](Tape<Scalar> &t, const Matrix<Scalar> &g) {
                          t.accumulate(ia, g * s);
                        });
}

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().unaryExpr(
      [](Scalar v) { return Scalar(1) / (Scalar(1) + std::exp(-v)); });
  const int ia = a.id, iy = a.tape->next_id();
  return a.tape->record(
      std::move(out), {a}, [ia, iy](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        const auto &y = t.value(iy).array();
        t.accumulate(ia, (g.array() * y * (Scalar(1) - y)).matrix());
      });
}

template <typename Scalar>
Var<Scalar> tanh(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().array().tanh().matrix();
  const int ia = a.id, iy = a.tape->next_id();
  return a.tape->record(
      std::move(out), {a}, [ia, iy](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        const auto &y = t.value(iy).array();
        t.accumulate(ia, (g.array() * (Scalar(1) - y.square())).matrix());
      });
}

template <typename Scalar>
Var<Scalar> relu(Var<Scalar> a) {
  Matrix<Scalar> out = a.value().cwiseMax(Scalar(0));
  const int ia = a.id;
  return a.tape->record(
      std::move(out), {a}, [ia](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        t.accumulate(ia, (t.value(ia).array() > Scalar(0))
                             .select(g.array(), Scalar(0))
                             .matrix());
      });
}

// Multiplies by a caller-supplied mask (already scaled by 1/keep_prob), so the
// op itself stays deterministic.
template <typename Scalar>
Var<Scalar> dropout(Var<Scalar> a, const Matrix<Scalar> &mask) {
  if (mask.rows() != a.rows() || mask.cols() != a.cols())
    throw ShapeError("dropout: mask shape mismatch");
  Matrix<Scalar> out = a.value().cwiseProduct(mask);
  const int ia = a.id;
  return a.tape->record(std::move(out), {a},
                        [ia, mask](Tape<Scalar> &t, const Matrix<Scalar> &g) {
                          t.accumulate(ia, g.cwiseProduct(mask));
                        });
}

// ---------------------------------------------------------------------------
// Row-wise normalisation
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> softmax_rows(Var<Scalar> a) {
  const Matrix<Scalar> &x = a.value();
  Matrix<Scalar> out(x.rows(), x.cols());
  for (Index r = 0; r < x.rows(); ++r) {
    const Scalar m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp().matrix();
    out.row(r) /= out.row(r).sum();
  }
  const int ia = a.id, iy = a.tape->next_id();
  return a.tape->record(
      std::move(out), {a}, [ia, iy](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        const Matrix<Scalar> &y = t.value(iy);
        // dx = y * (g - <g, y>) per row
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> dots =
            g.cwiseProduct(y).rowwise().sum();
        Matrix<Scalar> dx = g;
        dx.colwise() -= dots;
        t.accumulate(ia, dx.cwiseProduct(y));
      });
}

// Normalises each row to zero mean / unit variance, then applies the 1 x n
// affine gamma, beta.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gamma, Var<Scalar> beta,
                       Scalar eps = Scalar(1e-5)) {
  const Index n = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != n || beta.rows() != 1 ||
      beta.cols() != n)
    throw ShapeError("layer_norm: affine must be 1x" + std::to_string(n));
  const Matrix<Scalar> &xv = x.value();
  Matrix<Scalar> xhat(xv.rows(), n);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> inv_std(xv.rows());
  for (Index r = 0; r < xv.rows(); ++r) {
    const Scalar mean = xv.row(r).mean();
    const Scalar var = (xv.row(r).array() - mean).square().mean();
    inv_std(r) = Scalar(1) / std::sqrt(var + eps);
    xhat.row(r) = ((xv.row(r).array() - mean) * inv_std(r)).matrix();
  }
  Matrix<Scalar> out = xhat;
  out.array().rowwise() *= gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  const int ix = x.id, ig = gamma.id, ib = beta.id;
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std), n](
          Tape<Scalar> &t, const Matrix<Scalar> &g) {
        if (t.requires_grad(ig))
          t.accumulate(ig, g.cwiseProduct(xhat).colwise().sum());
        if (t.requires_grad(ib)) t.accumulate(ib, g.colwise().sum());
        if (!t.requires_grad(ix)) return;
        Matrix<Scalar> gx = g;
        gx.array().rowwise() *= t.value(ig).row(0).array();
        // dx = inv_std/n * (n*gx - sum(gx) - xhat*sum(gx*xhat))
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s1 = gx.rowwise().sum();
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1> s2 =
            gx.cwiseProduct(xhat).rowwise().sum();
        Matrix<Scalar> dx = gx * Scalar(n);
        dx.colwise() -= s1;
        dx -= (xhat.array().colwise() * s2.array()).matrix();
        dx.array().colwise() *= inv_std.array() / Scalar(n);
        t.accumulate(ix, dx);
      });
}

// ---------------------------------------------------------------------------
// Structural
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> slice_rows(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.rows())
    throw ShapeError("slice_rows: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(a.rows()));
  Matrix<Scalar> out = a.value().middleRows(start, count);
  const int ia = a.id;
  return a.tape->record(
      std::move(out), {a},
      [ia, start](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        t.accumulate_block(ia, start, 0, g);
      });
}

template <typename Scalar>
Var<Scalar> slice_cols(Var<Scalar> a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw ShapeError("slice_cols: [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of " +
                     std::to_string(a.cols()));
  Matrix<Scalar> out = a.value().middleCols(start, count);
  const int ia = a.id;
  return a.tape->record(
      std::move(out), {a},
      [ia, start](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        t.accumulate_block(ia, 0, start, g);
      });
}

// Row gather; indices may repeat (gradients are summed).
template <typename Scalar>
Var<Scalar> gather_rows(Var<Scalar> a, std::vector<Index> rows) {
  Matrix<Scalar> out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] < 0 || rows[i] >= a.rows())
      throw ShapeError("gather_rows: index " + std::to_string(rows[i]) +
                       " out of " + std::to_string(a.rows()));
    out.row(static_cast<Index>(i)) = a.value().row(rows[i]);
  }
  const int ia = a.id;
  return a.tape->record(
      std::move(out), {a},
      [ia, rows = std::move(rows)](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        for (std::size_t i = 0; i < rows.size(); ++i)
          t.accumulate_block(ia, rows[i], 0, g.row(static_cast<Index>(i)));
      });
}

template <typename Scalar>
Var<Scalar> concat_cols(const std::vector<Var<Scalar>> &parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Index rows = parts[0].rows();
  Index cols = 0;
  for (const auto &p : parts) {
    if (p.rows() != rows) throw ShapeError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<int, Index>> spans;  // (id, width)
  Index off = 0;
  for (const auto &p : parts) {
    out.middleCols(off, p.cols()) = p.value();
    spans.emplace_back(p.id, p.cols());
    off += p.cols();
  }
  return parts[0].tape->record(
      std::move(out), std::span<const Var<Scalar>>(parts),
      [spans = std::move(spans)](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        Index o = 0;
        for (const auto &[id, w] : spans) {
          if (t.requires_grad(id)) t.accumulate(id, g.middleCols(o, w));
          o += w;
        }
      });
}

template <typename Scalar>
Var<Scalar> concat_rows(const std::vector<Var<Scalar>> &parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const Index cols = parts[0].cols();
  Index rows = 0;
  for (const auto &p : parts) {
    if (p.cols() != cols) throw ShapeError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Matrix<Scalar> out(rows, cols);
  std::vector<std::pair<int, Index>> spans;
  Index off = 0;
  for (const auto &p : parts) {
    out.middleRows(off, p.rows()) = p.value();
    spans.emplace_back(p.id, p.rows());
    off += p.rows();
  }
  return parts[0].tape->record(
      std::move(out), std::span<const Var<Scalar>>(parts),
      [spans = std::move(spans)](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        Index o = 0;
        for (const auto &[id, h] : spans) {
          if (t.requires_grad(id)) t.accumulate(id, g.middleRows(o, h));
          o += h;
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions and losses
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Matrix<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id;
  return a.tape->record(std::move(out), {a},
                        [ia](Tape<Scalar> &t, const Matrix<Scalar> &g) {
                          t.accumulate(ia, Matrix<Scalar>::Constant(
                                               t.value(ia).rows(),
                                               t.value(ia).cols(), g(0, 0)));
                        });
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(a.value().size()));
}

// Sum over cells of the binary cross entropy between targets y and
// p = clamp(sigmoid(logits), eps, 1 - eps). Inside the clamp the gradient is
// sigmoid(z) - y; clamped cells pass no gradient.
template <typename Scalar>
Var<Scalar> bce_with_logits_sum(Var<Scalar> logits, const Matrix<Scalar> &y,
                                Scalar eps = Scalar(1e-7)) {
  if (y.rows() != logits.rows() || y.cols() != logits.cols())
    throw ShapeError("bce_with_logits_sum: target shape mismatch");
  const Matrix<Scalar> &z = logits.value();
  Matrix<Scalar> dz(z.rows(), z.cols());
  Scalar total = 0;
  for (Index r = 0; r < z.rows(); ++r) {
    for (Index c = 0; c < z.cols(); ++c) {
      const Scalar p = Scalar(1) / (Scalar(1) + std::exp(-z(r, c)));
      const Scalar pc = std::clamp(p, eps, Scalar(1) - eps);
      const Scalar yy = y(r, c);
      total += -yy * std::log(pc) - (Scalar(1) - yy) * std::log(Scalar(1) - pc);
      dz(r, c) = (p > eps && p < Scalar(1) - eps) ? p - yy : Scalar(0);
    }
  }
  Matrix<Scalar> out(1, 1);
  out(0, 0) = total;
  const int iz = logits.id;
  return logits.tape->record(
      std::move(out), {logits},
      [iz, dz = std::move(dz)](Tape<Scalar> &t, const Matrix<Scalar> &g) {
        t.accumulate(iz, dz * g(0, 0));
      });
}

// ---------------------------------------------------------------------------
// Recurrent cell
// ---------------------------------------------------------------------------

template <typename Scalar>
struct LstmParams {
  Parameter<Scalar> w_ih;  // in x 4H, gate order i, f, g, o
  Parameter<Scalar> w_hh;  // H x 4H
  Parameter<Scalar> bias;  // 1 x 4H
};

template <typename Scalar>
struct LstmState {
  Var<Scalar> h;
  Var<Scalar> c;
};

// One LSTM step given the precomputed input projection x*W_ih (1 x 4H, may
// be an invalid Var for all-zero input).
template <typename Scalar>
LstmState<Scalar> lstm_step(Var<Scalar> x_proj, LstmState<Scalar> prev,
                            Var<Scalar> w_hh, Var<Scalar> bias) {
  const Index hidden = prev.h.cols();
  if (prev.c.cols() != hidden || prev.h.rows() != 1 || prev.c.rows() != 1 ||
      w_hh.rows() != hidden || w_hh.cols() != 4 * hidden ||
      bias.cols() != 4 * hidden ||
      (x_proj.valid() && x_proj.cols() != 4 * hidden))
    throw ShapeError("lstm_step: inconsistent state/parameter shapes");
  Var<Scalar> gates = linear(prev.h, w_hh, bias);
  if (x_proj.valid()) gates = add(gates, x_proj);
  Var<Scalar> i = sigmoid(slice_cols(gates, 0, hidden));
  Var<Scalar> f = sigmoid(slice_cols(gates, hidden, hidden));
  Var<Scalar> g = tanh(slice_cols(gates, 2 * hidden, hidden));
  Var<Scalar> o = sigmoid(slice_cols(gates, 3 * hidden, hidden));
  Var<Scalar> c = add(mul(f, prev.c), mul(i, g));
  Var<Scalar> h = mul(o, tanh(c));
  return {h, c};
}

// Full cell: x is 1 x in; dims(x) = dims(h) = dims(c) in the common case.
template <typename Scalar>
LstmState<Scalar> lstm_cell(Var<Scalar> x, LstmState<Scalar> prev,
                            Var<Scalar> w_ih, Var<Scalar> w_hh,
                            Var<Scalar> bias) {
  if (x.rows() != 1 || x.cols() != w_ih.rows())
    throw ShapeError("lstm_cell: input " +
                     detail::shape_str(x.rows(), x.cols()) + " vs w_ih " +
                     detail::shape_str(w_ih.rows(), w_ih.cols()));
  return lstm_step(matmul(x, w_ih), prev, w_hh, bias);
}

}  // namespace eda::ad

#endif  // EDA_DIFFCORE_HPP_
