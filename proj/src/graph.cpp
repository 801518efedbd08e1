#include "raregan/graph.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>

#include "raregan/param_store.hpp"

namespace raregan {

namespace {

[[noreturn]] void op_fail(const char* op, const std::string& what) {
  throw std::invalid_argument(std::string(op) + ": " + what);
}

void check_rank2(const char* op, const Tensor& t) {
  if (t.shape.size() != 2) op_fail(op, "expected rank-2 tensor, got " + t.shape_str());
}

// C(m x n) += A(m x k) * B(k x n)
void mm_nn_acc(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      if (av == 0.0) continue;
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C(m x n) += A(m x k) * B(n x k)^T
void mm_nt_acc(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * k;
    double* crow = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b + j * k;
      double acc = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
      crow[j] += acc;
    }
  }
}

// C(m x n) += A(k x m)^T * B(k x n)
void mm_tn_acc(const double* a, const double* b, double* c, std::size_t m,
               std::size_t k, std::size_t n) {
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* arow = a + kk * m;
    const double* brow = b + kk * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

double stable_sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) {
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

}  // namespace

const Tensor& Var::val() const { return graph_->value(*this); }

Var Graph::constant(Tensor value) {
  std::size_t i = emplace("constant", std::move(value), {}, nullptr);
  return wrap(i);
}

Var Graph::param(ParamStore& store, const std::string& name) {
  for (const Binding& b : bindings_) {
    if (b.store == &store && b.name == name) return wrap(b.node);
  }
  Node node;
  node.value = store.at(name);
  node.op = "param";
  node.needs_grad = true;
  std::size_t i = nodes_.size();
  nodes_.push_back(std::move(node));
  bindings_.push_back({&store, name, i});
  return wrap(i);
}

std::size_t Graph::emplace(const char* op, Tensor value,
                           std::vector<std::size_t> parents,
                           BackwardFn backward) {
  if (!value.all_finite()) {
    throw std::runtime_error(std::string(op) +
                             ": non-finite value in forward pass");
  }
  Node node;
  node.value = std::move(value);
  node.op = op;
  node.parents = std::move(parents);
  for (std::size_t p : node.parents) {
    if (nodes_[p].needs_grad) node.needs_grad = true;
  }
  if (node.needs_grad) node.backward_fn = std::move(backward);
  nodes_.push_back(std::move(node));
  return nodes_.size() - 1;
}

Tensor& Graph::grad_buf(std::size_t i) {
  Node& n = nodes_[i];
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape);
  return n.grad;
}

const Tensor& Graph::value(const Var& v) const { return nodes_[v.index()].value; }

const Tensor& Graph::grad(const Var& v) const { return nodes_[v.index()].grad; }

void Graph::backward(const Var& root) {
  if (root.graph() != this) {
    throw std::invalid_argument("backward: root belongs to another graph");
  }
  const Node& r = nodes_[root.index()];
  if (r.value.numel() != 1) {
    throw std::invalid_argument("backward: root must be scalar, got " +
                                r.value.shape_str());
  }
  grad_buf(root.index())(0) = 1.0;
  for (std::size_t i = root.index() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.needs_grad || n.grad.empty() || !n.backward_fn) continue;
    n.backward_fn(*this, i);
  }
  for (const Binding& b : bindings_) {
    Node& n = nodes_[b.node];
    if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape);
    if (!n.grad.all_finite()) {
      throw std::runtime_error("backward: non-finite gradient for parameter " +
                               b.name);
    }
    b.store->accumulate_grad(b.name, n.grad);
  }
}

// ---------------------------------------------------------------------------
// op helpers
// ---------------------------------------------------------------------------

namespace {

Graph& common_graph(const char* op, Var a, Var b) {
  if (!a || !b || a.graph() != b.graph()) {
    op_fail(op, "operands must live on the same graph");
  }
  return *a.graph();
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = common_graph("add", a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (!av.same_shape(bv)) {
    op_fail("add", "shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out(i) += bv(i);
  std::size_t ai = a.index(), bi = b.index();
  std::size_t self = g.emplace(
      "add", std::move(out), {ai, bi}, [ai, bi](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        if (gg.needs_grad(ai)) {
          Tensor& da = gg.grad_buf(ai);
          for (std::size_t i = 0; i < d.numel(); ++i) da(i) += d(i);
        }
        if (gg.needs_grad(bi)) {
          Tensor& db = gg.grad_buf(bi);
          for (std::size_t i = 0; i < d.numel(); ++i) db(i) += d(i);
        }
      });
  return g.wrap(self);
}

Var sub(Var a, Var b) {
  Graph& g = common_graph("sub", a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (!av.same_shape(bv)) {
    op_fail("sub", "shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out(i) -= bv(i);
  std::size_t ai = a.index(), bi = b.index();
  std::size_t self = g.emplace(
      "sub", std::move(out), {ai, bi}, [ai, bi](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        if (gg.needs_grad(ai)) {
          Tensor& da = gg.grad_buf(ai);
          for (std::size_t i = 0; i < d.numel(); ++i) da(i) += d(i);
        }
        if (gg.needs_grad(bi)) {
          Tensor& db = gg.grad_buf(bi);
          for (std::size_t i = 0; i < d.numel(); ++i) db(i) -= d(i);
        }
      });
  return g.wrap(self);
}

Var mul(Var a, Var b) {
  Graph& g = common_graph("mul", a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  if (!av.same_shape(bv)) {
    op_fail("mul", "shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor out = av;
  for (std::size_t i = 0; i < out.numel(); ++i) out(i) *= bv(i);
  std::size_t ai = a.index(), bi = b.index();
  std::size_t self = g.emplace(
      "mul", std::move(out), {ai, bi}, [ai, bi](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& av2 = gg.node_value(ai);
        const Tensor& bv2 = gg.node_value(bi);
        if (gg.needs_grad(ai)) {
          Tensor& da = gg.grad_buf(ai);
          for (std::size_t i = 0; i < d.numel(); ++i) da(i) += d(i) * bv2(i);
        }
        if (gg.needs_grad(bi)) {
          Tensor& db = gg.grad_buf(bi);
          for (std::size_t i = 0; i < d.numel(); ++i) db(i) += d(i) * av2(i);
        }
      });
  return g.wrap(self);
}

Var scale(Var a, double c) {
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (double& v : out.data) v *= c;
  std::size_t ai = a.index();
  std::size_t self = g.emplace(
      "scale", std::move(out), {ai}, [ai, c](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        Tensor& da = gg.grad_buf(ai);
        for (std::size_t i = 0; i < d.numel(); ++i) da(i) += c * d(i);
      });
  return g.wrap(self);
}

Var add_scalar(Var a, double c) {
  Graph& g = *a.graph();
  Tensor out = a.val();
  for (double& v : out.data) v += c;
  std::size_t ai = a.index();
  std::size_t self = g.emplace(
      "add_scalar", std::move(out), {ai}, [ai](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        Tensor& da = gg.grad_buf(ai);
        for (std::size_t i = 0; i < d.numel(); ++i) da(i) += d(i);
      });
  return g.wrap(self);
}

Var matmul(Var a, Var b) {
  Graph& g = common_graph("matmul", a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  check_rank2("matmul", av);
  check_rank2("matmul", bv);
  if (av.shape[1] != bv.shape[0]) {
    op_fail("matmul",
            "inner dimensions differ: " + av.shape_str() + " * " + bv.shape_str());
  }
  std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
  Tensor out = Tensor::zeros({m, n});
  mm_nn_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  std::size_t ai = a.index(), bi = b.index();
  std::size_t self = g.emplace(
      "matmul", std::move(out), {ai, bi},
      [ai, bi, m, k, n](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& av2 = gg.node_value(ai);
        const Tensor& bv2 = gg.node_value(bi);
        if (gg.needs_grad(ai)) {
          // dA = dC * B^T
          mm_nt_acc(d.data.data(), bv2.data.data(), gg.grad_buf(ai).data.data(),
                    m, n, k);
        }
        if (gg.needs_grad(bi)) {
          // dB = A^T * dC
          mm_tn_acc(av2.data.data(), d.data.data(), gg.grad_buf(bi).data.data(),
                    k, m, n);
        }
      });
  return g.wrap(self);
}

Var matmul_nt(Var a, Var b) {
  Graph& g = common_graph("matmul_nt", a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  check_rank2("matmul_nt", av);
  check_rank2("matmul_nt", bv);
  if (av.shape[1] != bv.shape[1]) {
    op_fail("matmul_nt",
            "inner dimensions differ: " + av.shape_str() + " * " + bv.shape_str() + "^T");
  }
  std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[0];
  Tensor out = Tensor::zeros({m, n});
  mm_nt_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  std::size_t ai = a.index(), bi = b.index();
  std::size_t self = g.emplace(
      "matmul_nt", std::move(out), {ai, bi},
      [ai, bi, m, k, n](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& av2 = gg.node_value(ai);
        const Tensor& bv2 = gg.node_value(bi);
        if (gg.needs_grad(ai)) {
          // dA = dC * B
          mm_nn_acc(d.data.data(), bv2.data.data(), gg.grad_buf(ai).data.data(),
                    m, n, k);
        }
        if (gg.needs_grad(bi)) {
          // dB = dC^T * A
          mm_tn_acc(d.data.data(), av2.data.data(), gg.grad_buf(bi).data.data(),
                    n, m, k);
        }
      });
  return g.wrap(self);
}

Var add_rowvec(Var x, Var r) {
  Graph& g = common_graph("add_rowvec", x, r);
  const Tensor& xv = x.val();
  const Tensor& rv = r.val();
  check_rank2("add_rowvec", xv);
  if (rv.numel() != xv.shape[1]) {
    op_fail("add_rowvec", "row vector length " + std::to_string(rv.numel()) +
                              " vs " + xv.shape_str());
  }
  std::size_t m = xv.shape[0], n = xv.shape[1];
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] += rv(j);
  std::size_t xi = x.index(), ri = r.index();
  std::size_t self = g.emplace(
      "add_rowvec", std::move(out), {xi, ri},
      [xi, ri, m, n](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        if (gg.needs_grad(xi)) {
          Tensor& dx = gg.grad_buf(xi);
          for (std::size_t i = 0; i < d.numel(); ++i) dx(i) += d(i);
        }
        if (gg.needs_grad(ri)) {
          Tensor& dr = gg.grad_buf(ri);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dr(j) += d.data[i * n + j];
        }
      });
  return g.wrap(self);
}

namespace {

// Shared builder for x (m x n) combined with a column c (m x 1).
enum class ColOp { Add, Sub, Div };

Var colvec_op(const char* name, ColOp kind, Var x, Var c) {
  Graph& g = common_graph(name, x, c);
  const Tensor& xv = x.val();
  const Tensor& cv = c.val();
  check_rank2(name, xv);
  std::size_t m = xv.shape[0], n = xv.shape[1];
  if (cv.rows() != m || cv.cols() != 1) {
    op_fail(name, "expected " + std::to_string(m) + "x1 column, got " +
                      cv.shape_str());
  }
  Tensor out = xv;
  for (std::size_t i = 0; i < m; ++i) {
    double ci = cv(i);
    for (std::size_t j = 0; j < n; ++j) {
      double& o = out.data[i * n + j];
      switch (kind) {
        case ColOp::Add: o += ci; break;
        case ColOp::Sub: o -= ci; break;
        case ColOp::Div: o /= ci; break;
      }
    }
  }
  std::size_t xi = x.index(), ci_idx = c.index();
  std::size_t self = g.emplace(
      name, std::move(out), {xi, ci_idx},
      [xi, ci_idx, m, n, kind](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& cv2 = gg.node_value(ci_idx);
        const Tensor& ov = gg.node_value(s);
        if (gg.needs_grad(xi)) {
          Tensor& dx = gg.grad_buf(xi);
          for (std::size_t i = 0; i < m; ++i) {
            double ci2 = cv2(i);
            for (std::size_t j = 0; j < n; ++j) {
              double dd = d.data[i * n + j];
              dx.data[i * n + j] += (kind == ColOp::Div) ? dd / ci2 : dd;
            }
          }
        }
        if (gg.needs_grad(ci_idx)) {
          Tensor& dc = gg.grad_buf(ci_idx);
          for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              double dd = d.data[i * n + j];
              switch (kind) {
                case ColOp::Add: acc += dd; break;
                case ColOp::Sub: acc -= dd; break;
                case ColOp::Div: acc -= dd * ov.data[i * n + j] / cv2(i); break;
              }
            }
            dc(i) += acc;
          }
        }
      });
  return g.wrap(self);
}

}  // namespace

Var add_colvec(Var x, Var c) { return colvec_op("add_colvec", ColOp::Add, x, c); }
Var sub_colvec(Var x, Var c) { return colvec_op("sub_colvec", ColOp::Sub, x, c); }

Var div_colvec(Var x, Var c) {
  const Tensor& cv = c.val();
  for (double v : cv.data) {
    if (v == 0.0) op_fail("div_colvec", "zero divisor");
  }
  return colvec_op("div_colvec", ColOp::Div, x, c);
}

Var concat_cols(Var a, Var b) {
  Graph& g = common_graph("concat_cols", a, b);
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  check_rank2("concat_cols", av);
  check_rank2("concat_cols", bv);
  if (av.shape[0] != bv.shape[0]) {
    op_fail("concat_cols", "row counts differ: " + av.shape_str() + " vs " +
                               bv.shape_str());
  }
  std::size_t m = av.shape[0], p = av.shape[1], q = bv.shape[1];
  Tensor out = Tensor::zeros({m, p + q});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) out.data[i * (p + q) + j] = av.data[i * p + j];
    for (std::size_t j = 0; j < q; ++j) out.data[i * (p + q) + p + j] = bv.data[i * q + j];
  }
  std::size_t ai = a.index(), bi = b.index();
  std::size_t self = g.emplace(
      "concat_cols", std::move(out), {ai, bi},
      [ai, bi, m, p, q](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        if (gg.needs_grad(ai)) {
          Tensor& da = gg.grad_buf(ai);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p; ++j)
              da.data[i * p + j] += d.data[i * (p + q) + j];
        }
        if (gg.needs_grad(bi)) {
          Tensor& db = gg.grad_buf(bi);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < q; ++j)
              db.data[i * q + j] += d.data[i * (p + q) + p + j];
        }
      });
  return g.wrap(self);
}

Var slice_cols(Var x, std::size_t lo, std::size_t hi) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  check_rank2("slice_cols", xv);
  std::size_t m = xv.shape[0], n = xv.shape[1];
  if (lo >= hi || hi > n) op_fail("slice_cols", "bad column range");
  std::size_t w = hi - lo;
  Tensor out = Tensor::zeros({m, w});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < w; ++j)
      out.data[i * w + j] = xv.data[i * n + lo + j];
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "slice_cols", std::move(out), {xi},
      [xi, m, n, lo, w](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < w; ++j)
            dx.data[i * n + lo + j] += d.data[i * w + j];
      });
  return g.wrap(self);
}

Var gather_rows(Var w, std::vector<std::size_t> rows) {
  Graph& g = *w.graph();
  const Tensor& wv = w.val();
  check_rank2("gather_rows", wv);
  std::size_t v = wv.shape[0], d = wv.shape[1];
  for (std::size_t r : rows) {
    if (r >= v) op_fail("gather_rows", "row index out of range");
  }
  Tensor out = Tensor::zeros({rows.size(), d});
  for (std::size_t t = 0; t < rows.size(); ++t)
    for (std::size_t j = 0; j < d; ++j)
      out.data[t * d + j] = wv.data[rows[t] * d + j];
  std::size_t wi = w.index();
  auto idx = std::make_shared<std::vector<std::size_t>>(std::move(rows));
  std::size_t self = g.emplace(
      "gather_rows", std::move(out), {wi},
      [wi, d, idx](Graph& gg, std::size_t s) {
        const Tensor& dd = gg.node_grad(s);
        Tensor& dw = gg.grad_buf(wi);
        for (std::size_t t = 0; t < idx->size(); ++t)
          for (std::size_t j = 0; j < d; ++j)
            dw.data[(*idx)[t] * d + j] += dd.data[t * d + j];
      });
  return g.wrap(self);
}

Var row_sum(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  check_rank2("row_sum", xv);
  std::size_t m = xv.shape[0], n = xv.shape[1];
  Tensor out = Tensor::zeros({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += xv.data[i * n + j];
    out(i) = acc;
  }
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "row_sum", std::move(out), {xi}, [xi, m, n](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dx.data[i * n + j] += d(i);
      });
  return g.wrap(self);
}

Var sum_all(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "sum_all", Tensor::scalar(acc), {xi}, [xi](Graph& gg, std::size_t s) {
        double d = gg.node_grad(s)(0);
        Tensor& dx = gg.grad_buf(xi);
        for (double& v : dx.data) v += d;
      });
  return g.wrap(self);
}

Var mean_all(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  if (xv.numel() == 0) op_fail("mean_all", "empty tensor");
  double inv = 1.0 / static_cast<double>(xv.numel());
  double acc = 0.0;
  for (double v : xv.data) acc += v;
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "mean_all", Tensor::scalar(acc * inv), {xi},
      [xi, inv](Graph& gg, std::size_t s) {
        double d = gg.node_grad(s)(0) * inv;
        Tensor& dx = gg.grad_buf(xi);
        for (double& v : dx.data) v += d;
      });
  return g.wrap(self);
}

Var sum_sq(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  double acc = 0.0;
  for (double v : xv.data) acc += v * v;
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "sum_sq", Tensor::scalar(acc), {xi}, [xi](Graph& gg, std::size_t s) {
        double d = gg.node_grad(s)(0);
        const Tensor& xv2 = gg.node_value(xi);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < dx.numel(); ++i) dx(i) += 2.0 * d * xv2(i);
      });
  return g.wrap(self);
}

Var mean_rows(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  check_rank2("mean_rows", xv);
  std::size_t m = xv.shape[0], n = xv.shape[1];
  if (m == 0) op_fail("mean_rows", "empty batch");
  double inv = 1.0 / static_cast<double>(m);
  Tensor out = Tensor::zeros({1, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j) += xv.data[i * n + j] * inv;
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "mean_rows", std::move(out), {xi},
      [xi, m, n, inv](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) dx.data[i * n + j] += d(j) * inv;
      });
  return g.wrap(self);
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

namespace {

// Elementwise op where the backward factor is a function of (input, output).
Var elementwise(const char* name, Var x, double (*fwd)(double),
                double (*dfactor)(double in, double out)) {
  Graph& g = *x.graph();
  Tensor out = x.val();
  for (double& v : out.data) v = fwd(v);
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      name, std::move(out), {xi}, [xi, dfactor](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& in = gg.node_value(xi);
        const Tensor& outv = gg.node_value(s);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < d.numel(); ++i)
          dx(i) += d(i) * dfactor(in(i), outv(i));
      });
  return g.wrap(self);
}

}  // namespace

Var sigmoid(Var x) {
  return elementwise(
      "sigmoid", x, [](double v) { return stable_sigmoid(v); },
      [](double, double o) { return o * (1.0 - o); });
}

Var tanh(Var x) {
  return elementwise(
      "tanh", x, [](double v) { return std::tanh(v); },
      [](double, double o) { return 1.0 - o * o; });
}

Var softplus(Var x) {
  return elementwise(
      "softplus", x, [](double v) { return stable_softplus(v); },
      [](double in, double) { return stable_sigmoid(in); });
}

Var exp(Var x) {
  return elementwise(
      "exp", x, [](double v) { return std::exp(v); },
      [](double, double o) { return o; });
}

Var log(Var x) {
  for (double v : x.val().data) {
    if (v <= 0.0) op_fail("log", "non-positive input");
  }
  return elementwise(
      "log", x, [](double v) { return std::log(v); },
      [](double in, double) { return 1.0 / in; });
}

Var sqrt(Var x) {
  for (double v : x.val().data) {
    if (v <= 0.0) op_fail("sqrt", "non-positive input");
  }
  return elementwise(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double, double o) { return 0.5 / o; });
}

Var leaky_relu(Var x, double slope) {
  Graph& g = *x.graph();
  Tensor out = x.val();
  for (double& v : out.data) v = v > 0.0 ? v : slope * v;
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "leaky_relu", std::move(out), {xi},
      [xi, slope](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& in = gg.node_value(xi);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < d.numel(); ++i)
          dx(i) += d(i) * (in(i) > 0.0 ? 1.0 : slope);
      });
  return g.wrap(self);
}

Var softmax_rows(Var x) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  check_rank2("softmax_rows", xv);
  std::size_t m = xv.shape[0], n = xv.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = xv.data[i * n];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, xv.data[i * n + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double e = std::exp(xv.data[i * n + j] - mx);
      out.data[i * n + j] = e;
      z += e;
    }
    for (std::size_t j = 0; j < n; ++j) out.data[i * n + j] /= z;
  }
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "softmax_rows", std::move(out), {xi},
      [xi, m, n](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& sm = gg.node_value(s);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < m; ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j)
            dot += d.data[i * n + j] * sm.data[i * n + j];
          for (std::size_t j = 0; j < n; ++j)
            dx.data[i * n + j] +=
                sm.data[i * n + j] * (d.data[i * n + j] - dot);
        }
      });
  return g.wrap(self);
}

Var logsumexp_rows(Var x, bool append_zero) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  check_rank2("logsumexp_rows", xv);
  std::size_t m = xv.shape[0], n = xv.shape[1];
  Tensor out = Tensor::zeros({m, 1});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = append_zero ? 0.0 : xv.data[i * n];
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, xv.data[i * n + j]);
    double z = append_zero ? std::exp(-mx) : 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(xv.data[i * n + j] - mx);
    out(i) = mx + std::log(z);
  }
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "logsumexp_rows", std::move(out), {xi},
      [xi, m, n](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& in = gg.node_value(xi);
        const Tensor& lse = gg.node_value(s);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            dx.data[i * n + j] += d(i) * std::exp(in.data[i * n + j] - lse(i));
      });
  return g.wrap(self);
}

Var pick_cols(Var x, std::vector<std::size_t> idx) {
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  check_rank2("pick_cols", xv);
  std::size_t m = xv.shape[0], n = xv.shape[1];
  if (idx.size() != m) op_fail("pick_cols", "index count != row count");
  for (std::size_t j : idx) {
    if (j >= n) op_fail("pick_cols", "column index out of range");
  }
  Tensor out = Tensor::zeros({m, 1});
  for (std::size_t i = 0; i < m; ++i) out(i) = xv.data[i * n + idx[i]];
  std::size_t xi = x.index();
  auto ids = std::make_shared<std::vector<std::size_t>>(std::move(idx));
  std::size_t self = g.emplace(
      "pick_cols", std::move(out), {xi},
      [xi, n, ids](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < ids->size(); ++i)
          dx.data[i * n + (*ids)[i]] += d(i);
      });
  return g.wrap(self);
}

Var masked_max_time(const std::vector<Var>& steps, const Tensor& mask) {
  if (steps.empty()) op_fail("masked_max_time", "no time steps");
  Graph& g = *steps.front().graph();
  std::size_t t_count = steps.size();
  const Tensor& first = steps.front().val();
  check_rank2("masked_max_time", first);
  std::size_t m = first.shape[0], n = first.shape[1];
  if (mask.rows() != m || mask.cols() < t_count) {
    op_fail("masked_max_time", "mask shape " + mask.shape_str() +
                                   " does not cover batch " + std::to_string(m) +
                                   " x " + std::to_string(t_count));
  }
  std::vector<std::size_t> parents;
  parents.reserve(t_count);
  for (const Var& v : steps) {
    if (v.graph() != &g) op_fail("masked_max_time", "steps on different graphs");
    if (!v.val().same_shape(first)) {
      op_fail("masked_max_time", "step shape mismatch");
    }
    parents.push_back(v.index());
  }
  Tensor out = Tensor::zeros({m, n});
  auto argmax = std::make_shared<std::vector<std::size_t>>(m * n, 0);
  for (std::size_t i = 0; i < m; ++i) {
    bool any = false;
    for (std::size_t t = 0; t < t_count; ++t) {
      if (mask(i, t) == 0.0) continue;
      const Tensor& h = g.node_value(parents[t]);
      for (std::size_t j = 0; j < n; ++j) {
        double v = h.data[i * n + j];
        if (!any || v > out.data[i * n + j]) {
          out.data[i * n + j] = v;
          (*argmax)[i * n + j] = t;
        }
      }
      any = true;
    }
    if (!any) op_fail("masked_max_time", "row with no unmasked positions");
  }
  auto par = std::make_shared<std::vector<std::size_t>>(parents);
  std::size_t self = g.emplace(
      "masked_max_time", std::move(out), std::move(parents),
      [argmax, par, n](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        std::size_t m2 = d.shape[0];
        for (std::size_t i = 0; i < m2; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            std::size_t t = (*argmax)[i * n + j];
            std::size_t p = (*par)[t];
            if (!gg.needs_grad(p)) continue;
            gg.grad_buf(p).data[i * n + j] += d.data[i * n + j];
          }
        }
      });
  return g.wrap(self);
}

Var dropout(Var x, double rate, bool training, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    op_fail("dropout", "rate must be in [0,1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  Graph& g = *x.graph();
  const Tensor& xv = x.val();
  double keep = 1.0 - rate;
  double inv_keep = 1.0 / keep;
  auto mask = std::make_shared<Tensor>(Tensor::zeros(xv.shape));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Tensor out = xv;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double m = unit(rng) < rate ? 0.0 : inv_keep;
    mask->data[i] = m;
    out(i) *= m;
  }
  std::size_t xi = x.index();
  std::size_t self = g.emplace(
      "dropout", std::move(out), {xi}, [xi, mask](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        Tensor& dx = gg.grad_buf(xi);
        for (std::size_t i = 0; i < d.numel(); ++i) dx(i) += d(i) * mask->data[i];
      });
  return g.wrap(self);
}

Var weight_norm(Var v, Var g_param) {
  Graph& g = common_graph("weight_norm", v, g_param);
  const Tensor& vv = v.val();
  const Tensor& gv = g_param.val();
  check_rank2("weight_norm", vv);
  std::size_t in = vv.shape[0], out_dim = vv.shape[1];
  if (gv.numel() != out_dim) {
    op_fail("weight_norm", "gain length " + std::to_string(gv.numel()) +
                               " vs " + std::to_string(out_dim) + " columns");
  }
  auto norms = std::make_shared<std::vector<double>>(out_dim, 0.0);
  for (std::size_t j = 0; j < out_dim; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < in; ++i) {
      double w = vv.data[i * out_dim + j];
      acc += w * w;
    }
    double nrm = std::sqrt(acc);
    if (nrm == 0.0) op_fail("weight_norm", "zero-norm column");
    (*norms)[j] = nrm;
  }
  Tensor out = Tensor::zeros({in, out_dim});
  for (std::size_t j = 0; j < out_dim; ++j) {
    double f = gv(j) / (*norms)[j];
    for (std::size_t i = 0; i < in; ++i)
      out.data[i * out_dim + j] = f * vv.data[i * out_dim + j];
  }
  std::size_t vi = v.index(), gi = g_param.index();
  std::size_t self = g.emplace(
      "weight_norm", std::move(out), {vi, gi},
      [vi, gi, in, out_dim, norms](Graph& gg, std::size_t s) {
        const Tensor& d = gg.node_grad(s);
        const Tensor& vv2 = gg.node_value(vi);
        const Tensor& gv2 = gg.node_value(gi);
        for (std::size_t j = 0; j < out_dim; ++j) {
          double nrm = (*norms)[j];
          // dot of incoming gradient with the unit column direction
          double dot = 0.0;
          for (std::size_t i = 0; i < in; ++i)
            dot += d.data[i * out_dim + j] * vv2.data[i * out_dim + j] / nrm;
          if (gg.needs_grad(gi)) gg.grad_buf(gi)(j) += dot;
          if (gg.needs_grad(vi)) {
            Tensor& dv = gg.grad_buf(vi);
            double f = gv2(j) / nrm;
            for (std::size_t i = 0; i < in; ++i) {
              double u = vv2.data[i * out_dim + j] / nrm;
              dv.data[i * out_dim + j] += f * (d.data[i * out_dim + j] - dot * u);
            }
          }
        }
      });
  return g.wrap(self);
}

}  // namespace raregan
