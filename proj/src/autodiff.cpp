#include "atlop/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "atlop/errors.hpp"
#include "atlop/kernels.hpp"

namespace atlop::ad {

// ---- Var ----------------------------------------------------------------------

const Tensor& Var::value() const { return graph_->value(id_); }
const Tensor& Var::grad() const { return graph_->grad(id_); }
bool Var::requires_grad() const { return graph_->requires_grad(id_); }

// ---- Graph ----------------------------------------------------------------------

Var Graph::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::variable(Tensor value) {
  Node n;
  n.op = "variable";
  n.value = std::move(value);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.op = "parameter";
  n.external = &p.value;
  n.param = &p;
  n.requires_grad = p.requires_grad;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(std::string_view op, std::span<const Var> inputs, Tensor value, BackwardFn fn) {
  Node n;
  n.op = std::string(op);
  n.inputs.reserve(inputs.size());
  bool needs = false;
  for (const Var& v : inputs) {
    if (&v.graph() != this) throw DimensionError("op '" + n.op + "' mixes nodes of different graphs");
    n.inputs.push_back(v.id());
    needs = needs || nodes_[v.id()].requires_grad;
  }
  n.value = std::move(value);
  n.requires_grad = needs && static_cast<bool>(fn);
  if (n.requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Tensor& Graph::grad(std::size_t id) const {
  const Node& n = nodes_.at(id);
  if (n.has_grad) return n.grad;
  zeros_cache_ = Tensor(value(id).shape(), 0.0);
  return zeros_cache_;
}

Tensor* Graph::grad_sink(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (!n.has_grad) {
    n.grad = Tensor(value(id).shape(), 0.0);
    n.has_grad = true;
  }
  return &n.grad;
}

void Graph::backward(Var root, bool flush_parameters) {
  if (&root.graph() != this) throw DimensionError("backward root belongs to another graph");
  const Tensor& rv = value(root.id());
  if (rv.size() != 1) throw DimensionError("backward requires a scalar root, got " + shape_str(rv.shape()));
  Tensor* seed = grad_sink(root.id());
  if (!seed) return;
  (*seed)[0] += 1.0;
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.has_grad || !n.backward) continue;
    n.backward(*this, i);
  }
  if (flush_parameters) flush_parameter_grads();
}

void Graph::flush_parameter_grads() {
  for (Node& n : nodes_) {
    if (!n.param || !n.has_grad) continue;
    auto dst = n.param->grad.data();
    auto src = n.grad.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    n.grad.fill(0.0);
    n.has_grad = false;
  }
}

// ---- helpers --------------------------------------------------------------------

namespace {

struct MatDims {
  std::size_t rows;
  std::size_t cols;
};

MatDims mat_dims(const Tensor& t, const char* op) {
  if (t.rank() == 1) return {1, t.dim(0)};
  if (t.rank() == 2) return {t.dim(0), t.dim(1)};
  throw DimensionError(std::string(op) + " expects rank-1 or rank-2 operands, got " + shape_str(t.shape()));
}

Shape out_shape(const Tensor& a, std::size_t m, std::size_t n) {
  if (a.rank() == 1) return Shape{n};
  return Shape{m, n};
}

void add_into(Tensor& dst, std::span<const double> src) {
  auto d = dst.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += src[i];
}

enum class Bcast { None, Left, Right };

Bcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Bcast::None;
  if (a.size() == 1) return Bcast::Left;
  if (b.size() == 1) return Bcast::Right;
  throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                       " are neither equal nor scalar-broadcastable");
}

struct Strides {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

Strides axis_strides(const Shape& s, std::size_t axis, const char* op) {
  if (axis >= s.size())
    throw DimensionError(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  Strides st;
  for (std::size_t i = 0; i < axis; ++i) st.outer *= s[i];
  st.len = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) st.inner *= s[i];
  return st;
}

Shape drop_axis(const Shape& s, std::size_t axis) {
  Shape out;
  for (std::size_t i = 0; i < s.size(); ++i)
    if (i != axis) out.push_back(s[i]);
  return out;
}

template <typename F, typename DF>
Var unary(const char* op, Var x, F f, DF df) {
  const Tensor& xv = x.value();
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = f(xv[i]);
  const std::size_t xid = x.id();
  return x.graph().record(op, {x}, std::move(y), [xid, df](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    const Tensor& xv = g.value(xid);
    const Tensor& yv = g.value(self);
    for (std::size_t i = 0; i < up.size(); ++i) (*dx)[i] += up[i] * df(xv[i], yv[i]);
  });
}

}  // namespace

// ---- Linear algebra ---------------------------------------------------------------

Var matmul(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const auto [m, k] = mat_dims(av, "matmul");
  if (bv.rank() != 2 || bv.dim(0) != k)
    throw DimensionError("matmul: inner dimensions disagree for " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()));
  const std::size_t n = bv.dim(1);
  Tensor c(out_shape(av, m, n));
  kernels::gemm_nn(av.data(), bv.data(), c.data(), m, k, n, false);
  const std::size_t aid = a.id(), bid = b.id();
  return a.graph().record("matmul", {a, b}, std::move(c), [aid, bid, m, k, n](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    if (Tensor* da = g.grad_sink(aid)) kernels::gemm_nt(up.data(), g.value(bid).data(), da->data(), m, n, k, true);
    if (Tensor* db = g.grad_sink(bid)) kernels::gemm_tn(g.value(aid).data(), up.data(), db->data(), k, m, n, true);
  });
}

Var matmul_nt(Var a, Var b) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const auto [m, k] = mat_dims(av, "matmul_nt");
  const auto [n, k2] = mat_dims(bv, "matmul_nt");
  if (k != k2)
    throw DimensionError("matmul_nt: inner dimensions disagree for " + shape_str(av.shape()) + " x " +
                         shape_str(bv.shape()) + "^T");
  Tensor c(out_shape(av, m, n));
  kernels::gemm_nt(av.data(), bv.data(), c.data(), m, k, n, false);
  const std::size_t aid = a.id(), bid = b.id();
  return a.graph().record("matmul_nt", {a, b}, std::move(c), [aid, bid, m, k, n](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    if (Tensor* da = g.grad_sink(aid)) kernels::gemm_nn(up.data(), g.value(bid).data(), da->data(), m, n, k, true);
    if (Tensor* db = g.grad_sink(bid)) kernels::gemm_tn(up.data(), g.value(aid).data(), db->data(), n, m, k, true);
  });
}

// ---- Elementwise ------------------------------------------------------------------

namespace {

// f(a, b) with partials (da, db) given (a, b, y).
template <typename F, typename DA, typename DB>
Var binary(const char* op, Var a, Var b, F f, DA da_fn, DB db_fn) {
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  const Bcast bc = broadcast_kind(av, bv, op);
  const Shape shape = bc == Bcast::Left ? bv.shape() : av.shape();
  Tensor y(shape);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x0 = av[bc == Bcast::Left ? 0 : i];
    const double x1 = bv[bc == Bcast::Right ? 0 : i];
    y[i] = f(x0, x1);
  }
  const std::size_t aid = a.id(), bid = b.id();
  return a.graph().record(op, {a, b}, std::move(y), [aid, bid, bc, da_fn, db_fn](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    const Tensor& av = g.value(aid);
    const Tensor& bv = g.value(bid);
    Tensor* da = g.grad_sink(aid);
    Tensor* db = g.grad_sink(bid);
    for (std::size_t i = 0; i < up.size(); ++i) {
      const std::size_t ia = bc == Bcast::Left ? 0 : i;
      const std::size_t ib = bc == Bcast::Right ? 0 : i;
      if (da) (*da)[ia] += up[i] * da_fn(av[ia], bv[ib]);
      if (db) (*db)[ib] += up[i] * db_fn(av[ia], bv[ib]);
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var mul(Var a, Var b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Var tanh(Var x) {
  return unary(
      "tanh", x, [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var sigmoid(Var x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var exp(Var x) {
  return unary(
      "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Var log(Var x) {
  for (double v : x.value().data())
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  return unary(
      "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var gelu(Var x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2 / pi)
  constexpr double kA = 0.044715;
  return unary(
      "gelu", x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(kC * (v + kA * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      });
}

// ---- Reductions -------------------------------------------------------------------

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const std::size_t xid = x.id();
  return x.graph().record("sum", {x}, Tensor::scalar(s), [xid](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const double up = g.upstream(self)[0];
    for (auto& v : dx->data()) v += up;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var logsumexp(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const Strides st = axis_strides(xv.shape(), axis, "logsumexp");
  Tensor y(drop_axis(xv.shape(), axis));
  if (st.inner == 1) {
    kernels::logsumexp_rows(xv.data(), y.data(), st.outer, st.len);
  } else {
    for (std::size_t o = 0; o < st.outer; ++o)
      for (std::size_t i = 0; i < st.inner; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < st.len; ++j) mx = std::max(mx, xv[(o * st.len + j) * st.inner + i]);
        double s = 0.0;
        for (std::size_t j = 0; j < st.len; ++j) s += std::exp(xv[(o * st.len + j) * st.inner + i] - mx);
        y[o * st.inner + i] = mx + std::log(s);
      }
  }
  const std::size_t xid = x.id();
  return x.graph().record("logsumexp", {x}, std::move(y), [xid, st](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    const Tensor& xv = g.value(xid);
    const Tensor& yv = g.value(self);
    for (std::size_t o = 0; o < st.outer; ++o)
      for (std::size_t j = 0; j < st.len; ++j)
        for (std::size_t i = 0; i < st.inner; ++i) {
          const std::size_t xi = (o * st.len + j) * st.inner + i;
          const std::size_t yi = o * st.inner + i;
          (*dx)[xi] += up[yi] * std::exp(xv[xi] - yv[yi]);
        }
  });
}

Var softmax(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const Strides st = axis_strides(xv.shape(), axis, "softmax");
  Tensor y(xv.shape());
  if (st.inner == 1) {
    kernels::softmax_rows(xv.data(), y.data(), st.outer, st.len);
  } else {
    for (std::size_t o = 0; o < st.outer; ++o)
      for (std::size_t i = 0; i < st.inner; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < st.len; ++j) mx = std::max(mx, xv[(o * st.len + j) * st.inner + i]);
        double s = 0.0;
        for (std::size_t j = 0; j < st.len; ++j) {
          const std::size_t xi = (o * st.len + j) * st.inner + i;
          y[xi] = std::exp(xv[xi] - mx);
          s += y[xi];
        }
        for (std::size_t j = 0; j < st.len; ++j) y[(o * st.len + j) * st.inner + i] /= s;
      }
  }
  const std::size_t xid = x.id();
  return x.graph().record("softmax", {x}, std::move(y), [xid, st](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    const Tensor& yv = g.value(self);
    for (std::size_t o = 0; o < st.outer; ++o)
      for (std::size_t i = 0; i < st.inner; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < st.len; ++j) {
          const std::size_t k = (o * st.len + j) * st.inner + i;
          dot += up[k] * yv[k];
        }
        for (std::size_t j = 0; j < st.len; ++j) {
          const std::size_t k = (o * st.len + j) * st.inner + i;
          (*dx)[k] += yv[k] * (up[k] - dot);
        }
      }
  });
}

Var mean_axis(Var x, std::size_t axis) {
  const Tensor& xv = x.value();
  const Strides st = axis_strides(xv.shape(), axis, "mean_axis");
  Tensor y(drop_axis(xv.shape(), axis));
  const double inv = 1.0 / static_cast<double>(st.len);
  for (std::size_t o = 0; o < st.outer; ++o)
    for (std::size_t j = 0; j < st.len; ++j)
      for (std::size_t i = 0; i < st.inner; ++i) y[o * st.inner + i] += xv[(o * st.len + j) * st.inner + i] * inv;
  const std::size_t xid = x.id();
  return x.graph().record("mean_axis", {x}, std::move(y), [xid, st, inv](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    for (std::size_t o = 0; o < st.outer; ++o)
      for (std::size_t j = 0; j < st.len; ++j)
        for (std::size_t i = 0; i < st.inner; ++i) (*dx)[(o * st.len + j) * st.inner + i] += up[o * st.inner + i] * inv;
  });
}

// ---- Structural -------------------------------------------------------------------

Var add_row_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  const Tensor& bv = bias.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (bv.size() != n)
    throw DimensionError("add_row_bias: bias " + shape_str(bv.shape()) + " does not match rows of " +
                         shape_str(xv.shape()));
  Tensor y = xv;
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) y[r * n + c] += bv[c];
  const std::size_t xid = x.id(), bid = bias.id();
  return x.graph().record("add_row_bias", {x, bias}, std::move(y), [xid, bid, m, n](Graph& g, std::size_t self) {
    const Tensor& up = g.upstream(self);
    if (Tensor* dx = g.grad_sink(xid)) add_into(*dx, up.data());
    if (Tensor* db = g.grad_sink(bid))
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) (*db)[c] += up[r * n + c];
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (gamma.value().size() != n || beta.value().size() != n)
    throw DimensionError("layer_norm: affine parameters do not match width of " + shape_str(xv.shape()));
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor y(xv.shape());
  Tensor xhat(xv.shape());
  std::vector<double> rstd(m);
  for (std::size_t r = 0; r < m; ++r) {
    double mu = 0.0;
    for (std::size_t c = 0; c < n; ++c) mu += xv[r * n + c];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double d = xv[r * n + c] - mu;
      var += d * d;
    }
    var /= static_cast<double>(n);
    rstd[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (xv[r * n + c] - mu) * rstd[r];
      xhat[r * n + c] = h;
      y[r * n + c] = h * gv[c] + bv[c];
    }
  }
  const std::size_t xid = x.id(), gid = gamma.id(), bid = beta.id();
  return x.graph().record(
      "layer_norm", {x, gamma, beta}, std::move(y),
      [xid, gid, bid, m, n, xhat = std::move(xhat), rstd = std::move(rstd)](Graph& g, std::size_t self) {
        const Tensor& up = g.upstream(self);
        const Tensor& gv = g.value(gid);
        if (Tensor* dg = g.grad_sink(gid))
          for (std::size_t i = 0; i < up.size(); ++i) (*dg)[i % n] += up[i] * xhat[i];
        if (Tensor* db = g.grad_sink(bid))
          for (std::size_t i = 0; i < up.size(); ++i) (*db)[i % n] += up[i];
        Tensor* dx = g.grad_sink(xid);
        if (!dx) return;
        const double inv_n = 1.0 / static_cast<double>(n);
        for (std::size_t r = 0; r < m; ++r) {
          double mean_dh = 0.0, mean_dh_h = 0.0;
          for (std::size_t c = 0; c < n; ++c) {
            const double dh = up[r * n + c] * gv[c];
            mean_dh += dh;
            mean_dh_h += dh * xhat[r * n + c];
          }
          mean_dh *= inv_n;
          mean_dh_h *= inv_n;
          for (std::size_t c = 0; c < n; ++c) {
            const double dh = up[r * n + c] * gv[c];
            (*dx)[r * n + c] += rstd[r] * (dh - mean_dh - xhat[r * n + c] * mean_dh_h);
          }
        }
      });
}

Var gather_rows(Var x, std::span<const std::size_t> rows) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("gather_rows expects a matrix, got " + shape_str(xv.shape()));
  if (rows.empty()) throw DimensionError("gather_rows: empty row selection");
  const std::size_t n = xv.cols();
  Tensor y({rows.size(), n});
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= xv.rows())
      throw DimensionError("gather_rows: row " + std::to_string(rows[i]) + " out of range for " +
                           shape_str(xv.shape()));
    std::copy_n(&xv[rows[i] * n], n, &y[i * n]);
  }
  const std::size_t xid = x.id();
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return x.graph().record("gather_rows", {x}, std::move(y), [xid, n, idx = std::move(idx)](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    for (std::size_t i = 0; i < idx.size(); ++i)
      for (std::size_t c = 0; c < n; ++c) (*dx)[idx[i] * n + c] += up[i * n + c];
  });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  const Tensor& xv = x.value();
  const std::size_t m = xv.rows(), n = xv.cols();
  if (xv.rank() != 2 || count == 0 || start + count > n)
    throw DimensionError("slice_cols [" + std::to_string(start) + ", +" + std::to_string(count) + ") invalid for " +
                         shape_str(xv.shape()));
  Tensor y({m, count});
  for (std::size_t r = 0; r < m; ++r) std::copy_n(&xv[r * n + start], count, &y[r * count]);
  const std::size_t xid = x.id();
  return x.graph().record("slice_cols", {x}, std::move(y), [xid, m, n, start, count](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < count; ++c) (*dx)[r * n + start + c] += up[r * count + c];
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: no inputs");
  const std::size_t m = parts[0].value().rows();
  std::size_t n = 0;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    if (pv.rank() != 2 || pv.rows() != m)
      throw DimensionError("concat_cols: incompatible part " + shape_str(pv.shape()));
    widths.push_back(pv.cols());
    n += pv.cols();
  }
  Tensor y({m, n});
  std::vector<std::size_t> ids;
  std::size_t off = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& pv = parts[k].value();
    for (std::size_t r = 0; r < m; ++r) std::copy_n(&pv[r * widths[k]], widths[k], &y[r * n + off]);
    off += widths[k];
    ids.push_back(parts[k].id());
  }
  return parts[0].graph().record(
      "concat_cols", parts, std::move(y),
      [ids = std::move(ids), widths = std::move(widths), m, n](Graph& g, std::size_t self) {
        const Tensor& up = g.upstream(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (Tensor* dp = g.grad_sink(ids[k]))
            for (std::size_t r = 0; r < m; ++r)
              for (std::size_t c = 0; c < widths[k]; ++c) (*dp)[r * widths[k] + c] += up[r * n + off + c];
          off += widths[k];
        }
      });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_rows: no inputs");
  const std::size_t n = parts[0].value().cols();
  std::size_t m = 0;
  std::vector<std::size_t> ids, sizes;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    if (pv.rank() > 2 || pv.cols() != n)
      throw DimensionError("concat_rows: incompatible part " + shape_str(pv.shape()));
    m += pv.rows();
    ids.push_back(p.id());
    sizes.push_back(pv.size());
  }
  Tensor y({m, n});
  std::size_t off = 0;
  for (const Var& p : parts) {
    const auto src = p.value().data();
    std::copy(src.begin(), src.end(), y.data().begin() + static_cast<std::ptrdiff_t>(off));
    off += src.size();
  }
  return parts[0].graph().record(
      "concat_rows", parts, std::move(y),
      [ids = std::move(ids), sizes = std::move(sizes)](Graph& g, std::size_t self) {
        const Tensor& up = g.upstream(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (Tensor* dp = g.grad_sink(ids[k]))
            for (std::size_t i = 0; i < sizes[k]; ++i) (*dp)[i] += up[off + i];
          off += sizes[k];
        }
      });
}

Var reshape(Var x, Shape shape) {
  Tensor y = x.value().reshaped(std::move(shape));
  const std::size_t xid = x.id();
  return x.graph().record("reshape", {x}, std::move(y), [xid](Graph& g, std::size_t self) {
    if (Tensor* dx = g.grad_sink(xid)) add_into(*dx, g.upstream(self).data());
  });
}

Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const Tensor& xv = x.value();
  std::vector<double> mask(xv.size());
  const double keep = 1.0 / (1.0 - rate);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& m : mask) m = u(rng) < rate ? 0.0 : keep;
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * mask[i];
  const std::size_t xid = x.id();
  return x.graph().record("dropout", {x}, std::move(y), [xid, mask = std::move(mask)](Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    for (std::size_t i = 0; i < up.size(); ++i) (*dx)[i] += up[i] * mask[i];
  });
}

// ---- Gradient checking ------------------------------------------------------------

const GradCheckEntry& GradCheckReport::worst() const {
  if (entries.empty()) throw DimensionError("grad_check report has no entries");
  return *std::max_element(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.max_rel_error < b.max_rel_error;
  });
}

GradCheckReport grad_check(const std::function<Var(Graph&)>& loss, std::span<Parameter* const> params,
                           const GradCheckOptions& options) {
  for (Parameter* p : params) p->zero_grad();
  {
    Graph g;
    Var root = loss(g);
    g.backward(root);
  }
  auto eval = [&loss] {
    Graph g;
    return loss(g).value().item();
  };

  GradCheckReport report;
  report.tolerance = options.tolerance;
  for (Parameter* p : params) {
    GradCheckEntry e;
    e.name = p->name;
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + options.step;
      const double fp = eval();
      p->value[i] = orig - options.step;
      const double fm = eval();
      p->value[i] = orig;
      const double numeric = (fp - fm) / (2.0 * options.step);
      const double analytic = p->grad[i];
      const double denom = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
      const double rel = std::abs(analytic - numeric) / denom;
      if (rel > e.max_rel_error || i == 0) {
        e.max_rel_error = rel;
        e.worst_index = i;
        e.analytic = analytic;
        e.numeric = numeric;
      }
    }
    report.passed = report.passed && e.max_rel_error < options.tolerance;
    report.entries.push_back(std::move(e));
  }
  for (Parameter* p : params) p->zero_grad();
  return report;
}

}  // namespace atlop::ad
