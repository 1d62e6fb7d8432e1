#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cqrsql/core/params.hpp"
#include "cqrsql/core/tensor.hpp"

namespace cqrsql {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  bool valid() const { return graph != nullptr && id >= 0; }
  const Tensor& value() const;
  Real item() const { return value().item(); }
};

/// Tape of operations. Nodes are appended in evaluation order, so the
/// construction order is a topological order and backward simply walks it in
/// reverse.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, int self)>;

  explicit Graph(bool grad_enabled = true, std::uint64_t dropout_seed = 0)
      : grad_enabled_(grad_enabled), rng_(dropout_seed) {}

  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value) { return push(std::move(value), {}, nullptr, false); }

  /// Leaf bound to a parameter. Repeated lookups of the same name share one node.
  Var param(const ParamStore& store, const std::string& name) {
    if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Var{this, it->second};
    const auto& e = store.entry(name);
    Var v = push(e.value, {}, nullptr, grad_enabled_ && e.trainable);
    param_nodes_.emplace(name, v.id);
    return v;
  }

  /// Appends a computed node. `fn` runs during backward when any input needs a
  /// gradient; the value must be finite.
  Var record(Tensor value, std::vector<int> inputs, BackwardFn fn) {
    if (!value.all_finite()) throw NumericError("non-finite value produced by operation");
    bool needs = false;
    if (grad_enabled_)
      for (int i : inputs) needs = needs || nodes_[i].requires_grad;
    return push(std::move(value), std::move(inputs), needs ? std::move(fn) : nullptr, needs);
  }

  const Tensor& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient buffer of a node, allocated as zeros on first touch.
  Tensor& grad(int id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
    return n.grad;
  }

  bool has_grad(int id) const { return !nodes_[id].grad.empty(); }

  void backward(Var loss) {
    if (loss.graph != this) throw NumericError("loss belongs to another graph");
    if (nodes_[loss.id].value.size() != 1) throw NumericError("backward requires a scalar loss");
    if (backward_done_) throw NumericError("backward already ran on this graph");
    backward_done_ = true;
    grad(loss.id)[0] = 1.0;
    for (int i = loss.id; i >= 0; --i) {
      auto& n = nodes_[i];
      if (!n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
  }

  /// Gradients of every bound trainable parameter (zeros when unused by the loss).
  GradMap param_grads() const {
    GradMap out;
    for (const auto& [name, id] : param_nodes_) {
      const auto& n = nodes_[id];
      if (!n.requires_grad) continue;
      out.emplace(name, n.grad.empty() ? Tensor(n.value.shape(), 0.0) : n.grad);
    }
    return out;
  }

  std::size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

  bool training() const { return training_; }
  void set_training(bool on) { training_ = on; }
  std::mt19937_64& rng() { return rng_; }

  const std::vector<int>& inputs(int id) const { return nodes_[id].inputs; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<int> inputs;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Var push(Tensor value, std::vector<int> inputs, BackwardFn fn, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor{}, std::move(inputs), std::move(fn), requires_grad});
    return Var{this, static_cast<int>(nodes_.size()) - 1};
  }

  std::vector<Node> nodes_;
  std::unordered_map<std::string, int> param_nodes_;
  bool grad_enabled_;
  bool training_ = false;
  bool backward_done_ = false;
  std::mt19937_64 rng_;
};

inline const Tensor& Var::value() const { return graph->value(id); }

namespace detail {

inline Graph& same_graph(Var a, Var b) {
  if (!a.valid() || !b.valid() || a.graph != b.graph)
    throw NumericError("operands belong to different graphs");
  return *a.graph;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw NumericError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
}

// c[m x n] += a[m x k] * b[k x n]
inline void gemm_nn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const Real* A = a.data().data();
  const Real* B = b.data().data();
  Real* C = c.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = A[i * k + p];
      if (av == 0) continue;
      const Real* brow = B + p * n;
      Real* crow = C + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

// c[m x n] += a[m x k] * b[n x k]^T
inline void gemm_nt(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  const Real* A = a.data().data();
  const Real* B = b.data().data();
  Real* C = c.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Real s = 0;
      const Real* ar = A + i * k;
      const Real* br = B + j * k;
      for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
      C[i * n + j] += s;
    }
}

// c[k x n] += a[m x k]^T * b[m x n]
inline void gemm_tn(const Tensor& a, const Tensor& b, Tensor& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  const Real* A = a.data().data();
  const Real* B = b.data().data();
  Real* C = c.data().data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const Real av = A[i * k + p];
      if (av == 0) continue;
      const Real* brow = B + i * n;
      Real* crow = C + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matmul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.rows())
    throw NumericError("matmul: inner dimensions differ " + shape_str(A.shape()) + " * " +
                       shape_str(B.shape()));
  Tensor C = Tensor::matrix(A.rows(), B.cols());
  detail::gemm_nn(A, B, C);
  return g.record(std::move(C), {a.id, b.id}, [ia = a.id, ib = b.id](Graph& g, int self) {
    const Tensor& dC = g.grad(self);
    if (g.requires_grad(ia)) detail::gemm_nt(dC, g.value(ib), g.grad(ia));
    if (g.requires_grad(ib)) detail::gemm_tn(g.value(ia), dC, g.grad(ib));
  });
}

/// a * b^T
inline Var matmul_nt(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (A.cols() != B.cols())
    throw NumericError("matmul_nt: widths differ " + shape_str(A.shape()) + " vs " +
                       shape_str(B.shape()));
  Tensor C = Tensor::matrix(A.rows(), B.rows());
  detail::gemm_nt(A, B, C);
  return g.record(std::move(C), {a.id, b.id}, [ia = a.id, ib = b.id](Graph& g, int self) {
    const Tensor& dC = g.grad(self);
    if (g.requires_grad(ia)) detail::gemm_nn(dC, g.value(ib), g.grad(ia));
    if (g.requires_grad(ib)) detail::gemm_tn(dC, g.value(ia), g.grad(ib));
  });
}

inline Var transpose(Var a) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  Tensor T = Tensor::matrix(A.cols(), A.rows());
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) T(j, i) = A(i, j);
  return g.record(std::move(T), {a.id}, [ia = a.id](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) da(j, i) += d(i, j);
  });
}

// ---------------------------------------------------------------------------
// Elementwise

inline Var add(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  detail::check_same_shape(a.value(), b.value(), "add");
  Tensor C = a.value();
  C += b.value();
  return g.record(std::move(C), {a.id, b.id}, [ia = a.id, ib = b.id](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    if (g.requires_grad(ia)) g.grad(ia) += d;
    if (g.requires_grad(ib)) g.grad(ib) += d;
  });
}

inline Var sub(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  detail::check_same_shape(a.value(), b.value(), "sub");
  Tensor C = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] -= B[i];
  return g.record(std::move(C), {a.id, b.id}, [ia = a.id, ib = b.id](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    if (g.requires_grad(ia)) g.grad(ia) += d;
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      for (std::size_t i = 0; i < d.size(); ++i) db[i] -= d[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  detail::check_same_shape(a.value(), b.value(), "mul");
  Tensor C = a.value();
  const Tensor& B = b.value();
  for (std::size_t i = 0; i < C.size(); ++i) C[i] *= B[i];
  return g.record(std::move(C), {a.id, b.id}, [ia = a.id, ib = b.id](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    if (g.requires_grad(ia)) {
      Tensor& da = g.grad(ia);
      const Tensor& B = g.value(ib);
      for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * B[i];
    }
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      const Tensor& A = g.value(ia);
      for (std::size_t i = 0; i < d.size(); ++i) db[i] += d[i] * A[i];
    }
  });
}

/// a[m x n] + b[1 x n] broadcast over rows.
inline Var add_row(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& A = a.value();
  const Tensor& B = b.value();
  if (B.rows() != 1 || B.cols() != A.cols())
    throw NumericError("add_row: bias " + shape_str(B.shape()) + " does not fit " +
                       shape_str(A.shape()));
  Tensor C = A;
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = 0; j < A.cols(); ++j) C(i, j) += B[j];
  return g.record(std::move(C), {a.id, b.id}, [ia = a.id, ib = b.id](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    if (g.requires_grad(ia)) g.grad(ia) += d;
    if (g.requires_grad(ib)) {
      Tensor& db = g.grad(ib);
      for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = 0; j < d.cols(); ++j) db[j] += d(i, j);
    }
  });
}

inline Var scale(Var a, Real s) {
  Graph& g = *a.graph;
  Tensor C = a.value();
  for (auto& v : C.data()) v *= s;
  return g.record(std::move(C), {a.id}, [ia = a.id, s](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += s * d[i];
  });
}

namespace detail {

template <class F, class DF>
Var unary(Var a, F f, DF df_from_xy) {
  Graph& g = *a.graph;
  Tensor Y = a.value();
  for (auto& v : Y.data()) v = f(v);
  return g.record(std::move(Y), {a.id}, [ia = a.id, df_from_xy](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    const Tensor& X = g.value(ia);
    const Tensor& Y = g.value(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < d.size(); ++i) da[i] += d[i] * df_from_xy(X[i], Y[i]);
  });
}

}  // namespace detail

inline Var tanh(Var a) {
  return detail::unary(
      a, [](Real x) { return std::tanh(x); }, [](Real, Real y) { return 1 - y * y; });
}

inline Var sigmoid(Var a) {
  return detail::unary(
      a, [](Real x) { return x >= 0 ? 1 / (1 + std::exp(-x)) : std::exp(x) / (1 + std::exp(x)); },
      [](Real, Real y) { return y * (1 - y); });
}

inline Var relu(Var a) {
  return detail::unary(
      a, [](Real x) { return x > 0 ? x : 0; }, [](Real x, Real) { return x > 0 ? 1.0 : 0.0; });
}

/// log(max(x, floor)); the gradient vanishes where the clamp is active.
inline Var log_clamped(Var a, Real floor) {
  return detail::unary(
      a, [floor](Real x) { return std::log(std::max(x, floor)); },
      [floor](Real x, Real) { return x > floor ? 1 / x : 0.0; });
}

/// Inverted dropout; identity unless the graph is in training mode.
inline Var dropout(Var a, Real rate) {
  Graph& g = *a.graph;
  if (!g.training() || rate <= 0) return a;
  if (rate >= 1) throw NumericError("dropout rate must be < 1");
  std::bernoulli_distribution keep(1 - rate);
  Tensor mask(a.value().shape());
  for (auto& m : mask.data()) m = keep(g.rng()) ? 1 / (1 - rate) : 0;
  return mul(a, g.constant(std::move(mask)));
}

// ---------------------------------------------------------------------------
// Reductions and reshaping

inline Var sum(Var a) {
  Graph& g = *a.graph;
  Real s = 0;
  for (Real v : a.value().data()) s += v;
  return g.record(Tensor::scalar(s), {a.id}, [ia = a.id](Graph& g, int self) {
    const Real d = g.grad(self)[0];
    for (auto& v : g.grad(ia).data()) v += d;
  });
}

/// Scalar element (r, c) of a matrix.
inline Var pick(Var a, std::size_t r, std::size_t c) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  if (r >= A.rows() || c >= A.cols()) throw NumericError("pick: index out of range");
  return g.record(Tensor::scalar(A(r, c)), {a.id}, [ia = a.id, r, c](Graph& g, int self) {
    g.grad(ia)(r, c) += g.grad(self)[0];
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw NumericError("concat_cols: no inputs");
  Graph& g = *parts[0].graph;
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.graph != &g) throw NumericError("concat_cols: operands belong to different graphs");
    if (p.value().rows() != rows) throw NumericError("concat_cols: row counts differ");
    cols += p.value().cols();
    ids.push_back(p.id);
  }
  Tensor C = Tensor::matrix(rows, cols);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& P = p.value();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < P.cols(); ++j) C(i, off + j) = P(i, j);
    off += P.cols();
  }
  return g.record(std::move(C), ids, [ids](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t w = g.value(id).cols();
      if (g.requires_grad(id)) {
        Tensor& dp = g.grad(id);
        for (std::size_t i = 0; i < d.rows(); ++i)
          for (std::size_t j = 0; j < w; ++j) dp(i, j) += d(i, off + j);
      }
      off += w;
    }
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw NumericError("concat_rows: no inputs");
  Graph& g = *parts[0].graph;
  const std::size_t cols = parts[0].value().cols();
  std::size_t rows = 0;
  std::vector<int> ids;
  for (const auto& p : parts) {
    if (p.graph != &g) throw NumericError("concat_rows: operands belong to different graphs");
    if (p.value().cols() != cols) throw NumericError("concat_rows: column counts differ");
    rows += p.value().rows();
    ids.push_back(p.id);
  }
  std::vector<Real> data;
  data.reserve(rows * cols);
  for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
  return g.record(Tensor({rows, cols}, std::move(data)), ids, [ids](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    std::size_t off = 0;
    for (int id : ids) {
      const std::size_t n = g.value(id).size();
      if (g.requires_grad(id)) {
        Tensor& dp = g.grad(id);
        for (std::size_t i = 0; i < n; ++i) dp[i] += d[off + i];
      }
      off += n;
    }
  });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  if (begin >= end || end > A.rows()) throw NumericError("slice_rows: bad range");
  const std::size_t c = A.cols();
  std::vector<Real> data(A.data().begin() + begin * c, A.data().begin() + end * c);
  return g.record(Tensor({end - begin, c}, std::move(data)), {a.id},
                  [ia = a.id, begin](Graph& g, int self) {
                    const Tensor& d = g.grad(self);
                    Tensor& da = g.grad(ia);
                    const std::size_t off = begin * d.cols();
                    for (std::size_t i = 0; i < d.size(); ++i) da[off + i] += d[i];
                  });
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  if (begin >= end || end > A.cols()) throw NumericError("slice_cols: bad range");
  Tensor C = Tensor::matrix(A.rows(), end - begin);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t j = begin; j < end; ++j) C(i, j - begin) = A(i, j);
  return g.record(std::move(C), {a.id}, [ia = a.id, begin](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < d.rows(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) da(i, begin + j) += d(i, j);
  });
}

/// Rows of `a` selected by index (embedding lookup).
inline Var gather_rows(Var a, std::vector<std::size_t> index) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  if (index.empty()) throw NumericError("gather_rows: empty index");
  const std::size_t c = A.cols();
  Tensor C = Tensor::matrix(index.size(), c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= A.rows()) throw NumericError("gather_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) C(i, j) = A(index[i], j);
  }
  return g.record(std::move(C), {a.id}, [ia = a.id, index = std::move(index)](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) da(index[i], j) += d(i, j);
  });
}

/// Column-wise mean: [m x n] -> [1 x n].
inline Var mean_rows(Var a) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  const std::size_t m = A.rows(), n = A.cols();
  Tensor C = Tensor::matrix(1, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) C[j] += A(i, j) / static_cast<Real>(m);
  return g.record(std::move(C), {a.id}, [ia = a.id, m](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < d.cols(); ++j) da(i, j) += d[j] / static_cast<Real>(m);
  });
}

// ---------------------------------------------------------------------------
// Normalization and distributions

namespace detail {

// Backward shared by every row-softmax variant: dx = y * (dy - <dy, y>).
inline void softmax_backward(Graph& g, int self, int ia) {
  const Tensor& d = g.grad(self);
  const Tensor& Y = g.value(self);
  Tensor& da = g.grad(ia);
  for (std::size_t i = 0; i < Y.rows(); ++i) {
    Real dot = 0;
    for (std::size_t j = 0; j < Y.cols(); ++j) dot += d(i, j) * Y(i, j);
    for (std::size_t j = 0; j < Y.cols(); ++j) da(i, j) += Y(i, j) * (d(i, j) - dot);
  }
}

}  // namespace detail

/// Softmax along the last axis of every row.
inline Var softmax_rows(Var a) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  if (A.size() == 0 || A.cols() == 0) throw NumericError("degenerate softmax");
  Tensor Y = A;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    Real mx = A(i, 0);
    for (std::size_t j = 1; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
    Real z = 0;
    for (std::size_t j = 0; j < A.cols(); ++j) z += (Y(i, j) = std::exp(A(i, j) - mx));
    for (std::size_t j = 0; j < A.cols(); ++j) Y(i, j) /= z;
  }
  return g.record(std::move(Y), {a.id},
                  [ia = a.id](Graph& g, int self) { detail::softmax_backward(g, self, ia); });
}

/// Softmax restricted to the columns where `legal` is true; the rest get
/// probability exactly zero. The same mask applies to every row.
inline Var masked_softmax_rows(Var a, const std::vector<bool>& legal) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  if (legal.size() != A.cols()) throw NumericError("masked softmax: mask width mismatch");
  if (std::none_of(legal.begin(), legal.end(), [](bool b) { return b; }))
    throw NumericError("degenerate softmax");
  Tensor Y = Tensor::matrix(A.rows(), A.cols());
  for (std::size_t i = 0; i < A.rows(); ++i) {
    Real mx = -std::numeric_limits<Real>::infinity();
    for (std::size_t j = 0; j < A.cols(); ++j)
      if (legal[j]) mx = std::max(mx, A(i, j));
    Real z = 0;
    for (std::size_t j = 0; j < A.cols(); ++j)
      if (legal[j]) z += (Y(i, j) = std::exp(A(i, j) - mx));
    for (std::size_t j = 0; j < A.cols(); ++j) Y(i, j) /= z;
  }
  return g.record(std::move(Y), {a.id},
                  [ia = a.id](Graph& g, int self) { detail::softmax_backward(g, self, ia); });
}

inline Var log_softmax_rows(Var a) {
  Graph& g = *a.graph;
  const Tensor& A = a.value();
  if (A.size() == 0 || A.cols() == 0) throw NumericError("degenerate softmax");
  Tensor Y = A;
  for (std::size_t i = 0; i < A.rows(); ++i) {
    Real mx = A(i, 0);
    for (std::size_t j = 1; j < A.cols(); ++j) mx = std::max(mx, A(i, j));
    Real z = 0;
    for (std::size_t j = 0; j < A.cols(); ++j) z += std::exp(A(i, j) - mx);
    const Real lz = mx + std::log(z);
    for (std::size_t j = 0; j < A.cols(); ++j) Y(i, j) = A(i, j) - lz;
  }
  return g.record(std::move(Y), {a.id}, [ia = a.id](Graph& g, int self) {
    const Tensor& d = g.grad(self);
    const Tensor& Y = g.value(self);
    Tensor& da = g.grad(ia);
    for (std::size_t i = 0; i < Y.rows(); ++i) {
      Real s = 0;
      for (std::size_t j = 0; j < Y.cols(); ++j) s += d(i, j);
      for (std::size_t j = 0; j < Y.cols(); ++j) da(i, j) += d(i, j) - std::exp(Y(i, j)) * s;
    }
  });
}

inline constexpr Real kLayerNormEps = 1e-5;

/// Row-wise layer normalization with learned gain and bias ([1 x n] each).
inline Var layer_norm(Var x, Var gain, Var bias, Real eps = kLayerNormEps) {
  Graph& g = detail::same_graph(x, gain);
  detail::same_graph(x, bias);
  const Tensor& X = x.value();
  const std::size_t m = X.rows(), n = X.cols();
  if (gain.value().cols() != n || bias.value().cols() != n || gain.value().rows() != 1 ||
      bias.value().rows() != 1)
    throw NumericError("layer_norm: gain/bias must be [1 x " + std::to_string(n) + "]");
  if (n == 1 && eps == 0) throw NumericError("layer_norm: division by zero (width 1, eps 0)");
  Tensor Y = Tensor::matrix(m, n);
  Tensor xhat = Tensor::matrix(m, n);
  std::vector<Real> inv_std(m);
  const Tensor& G = gain.value();
  const Tensor& B = bias.value();
  for (std::size_t i = 0; i < m; ++i) {
    Real mu = 0;
    for (std::size_t j = 0; j < n; ++j) mu += X(i, j);
    mu /= static_cast<Real>(n);
    Real var = 0;
    for (std::size_t j = 0; j < n; ++j) var += (X(i, j) - mu) * (X(i, j) - mu);
    var /= static_cast<Real>(n);
    if (var + eps == 0) throw NumericError("layer_norm: division by zero (zero variance, eps 0)");
    inv_std[i] = 1 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat(i, j) = (X(i, j) - mu) * inv_std[i];
      Y(i, j) = xhat(i, j) * G[j] + B[j];
    }
  }
  return g.record(
      std::move(Y), {x.id, gain.id, bias.id},
      [ix = x.id, ig = gain.id, ib = bias.id, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](Graph& g, int self) {
        const Tensor& d = g.grad(self);
        const std::size_t m = d.rows(), n = d.cols();
        if (g.requires_grad(ig)) {
          Tensor& dg = g.grad(ig);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dg[j] += d(i, j) * xhat(i, j);
        }
        if (g.requires_grad(ib)) {
          Tensor& db = g.grad(ib);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) db[j] += d(i, j);
        }
        if (g.requires_grad(ix)) {
          const Tensor& G = g.value(ig);
          Tensor& dx = g.grad(ix);
          for (std::size_t i = 0; i < m; ++i) {
            Real mean_d = 0, mean_dx = 0;
            for (std::size_t j = 0; j < n; ++j) {
              const Real dh = d(i, j) * G[j];
              mean_d += dh;
              mean_dx += dh * xhat(i, j);
            }
            mean_d /= static_cast<Real>(n);
            mean_dx /= static_cast<Real>(n);
            for (std::size_t j = 0; j < n; ++j) {
              const Real dh = d(i, j) * G[j];
              dx(i, j) += inv_std[i] * (dh - mean_d - xhat(i, j) * mean_dx);
            }
          }
        }
      });
}

/// Probability floor applied before the logarithms of a KL divergence.
inline constexpr Real kKlEps = 1e-8;

/// KL(p || q) = sum p log(p / q) with both sides clamped to `eps`. Each row
/// is one distribution; the result sums the rows.
inline Var kl_div(Var p, Var q, Real eps = kKlEps) {
  Graph& g = detail::same_graph(p, q);
  const Tensor& P = p.value();
  const Tensor& Q = q.value();
  detail::check_same_shape(P, Q, "kl_div");
  for (std::size_t i = 0; i < P.rows(); ++i) {
    Real sp = 0, sq = 0;
    for (std::size_t j = 0; j < P.cols(); ++j) {
      sp += P(i, j);
      sq += Q(i, j);
    }
    if (std::abs(sp - 1) > 1e-6 || std::abs(sq - 1) > 1e-6)
      throw NumericError("kl_div: inputs must be normalized distributions");
  }
  Real total = 0;
  for (std::size_t k = 0; k < P.size(); ++k) {
    const Real a = std::max(P[k], eps), b = std::max(Q[k], eps);
    total += a * (std::log(a) - std::log(b));
  }
  return g.record(Tensor::scalar(total), {p.id, q.id}, [ip = p.id, iq = q.id, eps](Graph& g, int self) {
    const Real d = g.grad(self)[0];
    const Tensor& P = g.value(ip);
    const Tensor& Q = g.value(iq);
    if (g.requires_grad(ip)) {
      Tensor& dp = g.grad(ip);
      for (std::size_t k = 0; k < P.size(); ++k)
        if (P[k] > eps) dp[k] += d * (std::log(P[k]) - std::log(std::max(Q[k], eps)) + 1);
    }
    if (g.requires_grad(iq)) {
      Tensor& dq = g.grad(iq);
      for (std::size_t k = 0; k < Q.size(); ++k)
        if (Q[k] > eps) dq[k] -= d * std::max(P[k], eps) / Q[k];
    }
  });
}

/// KL(p||q) + KL(q||p).
inline Var symmetric_kl(Var p, Var q, Real eps = kKlEps) { return add(kl_div(p, q, eps), kl_div(q, p, eps)); }

/// Affine map x W + b with b broadcast over rows.
inline Var linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

}  // namespace cqrsql
