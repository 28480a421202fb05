#include "atlop/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "atlop/errors.hpp"

namespace atlop {

namespace {

std::string entity_label(std::string_view entity) {
  return entity.empty() ? std::string("entity") : "entity '" + std::string(entity) + "'";
}

// Pools [m x d] over rows. Each column is sorted before accumulation so the
// result does not depend on mention order, bit for bit.
ad::Var pool_rows(ad::Var mentions, PoolingKind kind) {
  const Tensor& mv = mentions.value();
  const std::size_t m = mv.rows(), d = mv.cols();
  Tensor y({d});
  std::vector<double> col(m);
  for (std::size_t c = 0; c < d; ++c) {
    for (std::size_t r = 0; r < m; ++r) col[r] = mv[r * d + c];
    std::sort(col.begin(), col.end());
    if (kind == PoolingKind::LogSumExp) {
      const double mx = col.back();
      double acc = 0.0;
      for (double v : col) acc += std::exp(v - mx);
      y[c] = mx + std::log(acc);
    } else {
      double acc = 0.0;
      for (double v : col) acc += v;
      y[c] = acc / static_cast<double>(m);
    }
  }
  const std::size_t xid = mentions.id();
  const char* op = kind == PoolingKind::LogSumExp ? "entity_logsumexp" : "entity_mean";
  return mentions.graph().record(op, {mentions}, std::move(y), [xid, m, d, kind](ad::Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    const Tensor& xv = g.value(xid);
    const Tensor& yv = g.value(self);
    const double inv = 1.0 / static_cast<double>(m);
    for (std::size_t r = 0; r < m; ++r)
      for (std::size_t c = 0; c < d; ++c)
        (*dx)[r * d + c] += up[c] * (kind == PoolingKind::LogSumExp ? std::exp(xv[r * d + c] - yv[c]) : inv);
  });
}

}  // namespace

ad::Var mention_embeddings(ad::Var hidden, std::span<const std::size_t> anchors) {
  return ad::gather_rows(hidden, anchors);
}

ad::Var entity_pool(ad::Var mentions, PoolingKind kind, std::string_view entity) {
  const Tensor& mv = mentions.value();
  if (mv.rank() != 2 || mv.dim(0) == 0) throw DataError(entity_label(entity) + " has no mentions to pool");
  if (mv.dim(0) == 1) return ad::reshape(mentions, Shape{mv.dim(1)});
  return pool_rows(mentions, kind);
}

ad::Var pool_entity(ad::Var hidden, std::span<const std::size_t> anchors, PoolingKind kind, std::string_view entity) {
  if (anchors.empty()) throw DataError(entity_label(entity) + " has no mentions to pool");
  return entity_pool(mention_embeddings(hidden, anchors), kind, entity);
}

ad::Var mean_row_groups(ad::Var x, const std::vector<std::vector<std::size_t>>& groups) {
  const Tensor& xv = x.value();
  if (xv.rank() != 2) throw DimensionError("mean_row_groups expects a matrix, got " + shape_str(xv.shape()));
  if (groups.empty()) throw DimensionError("mean_row_groups: no groups");
  const std::size_t n = xv.cols();
  Tensor y({groups.size(), n});
  for (std::size_t gi = 0; gi < groups.size(); ++gi) {
    const auto& rows = groups[gi];
    if (rows.empty()) throw DataError("mean_row_groups: group " + std::to_string(gi) + " is empty");
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (std::size_t r : rows) {
      if (r >= xv.rows()) throw DimensionError("mean_row_groups: row " + std::to_string(r) + " out of range");
      for (std::size_t c = 0; c < n; ++c) y[gi * n + c] += xv[r * n + c];
    }
    for (std::size_t c = 0; c < n; ++c) y[gi * n + c] *= inv;
  }
  const std::size_t xid = x.id();
  return x.graph().record("mean_row_groups", {x}, std::move(y), [xid, n, groups](ad::Graph& g, std::size_t self) {
    Tensor* dx = g.grad_sink(xid);
    if (!dx) return;
    const Tensor& up = g.upstream(self);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const double inv = 1.0 / static_cast<double>(groups[gi].size());
      for (std::size_t r : groups[gi])
        for (std::size_t c = 0; c < n; ++c) (*dx)[r * n + c] += up[gi * n + c] * inv;
    }
  });
}

ad::Var entity_attention(std::span<const ad::Var> attention, std::span<const std::size_t> anchors,
                         std::string_view entity) {
  if (anchors.empty()) throw DataError(entity_label(entity) + " has no mentions for entity attention");
  if (attention.empty()) throw DimensionError("entity_attention: no attention heads");
  std::vector<std::vector<std::size_t>> group{std::vector<std::size_t>(anchors.begin(), anchors.end())};
  std::vector<ad::Var> rows;
  for (const ad::Var& head : attention) rows.push_back(mean_row_groups(head, group));
  // Stack [1 x l] rows into [heads x l].
  const std::size_t l = rows[0].value().cols();
  ad::Var stacked = ad::concat_cols(rows);
  return ad::reshape(stacked, Shape{rows.size(), l});
}

std::vector<ad::Var> entity_attention_table(std::span<const ad::Var> attention,
                                            const std::vector<std::vector<std::size_t>>& anchors) {
  std::vector<ad::Var> out;
  out.reserve(attention.size());
  for (const ad::Var& head : attention) out.push_back(mean_row_groups(head, anchors));
  return out;
}

ad::Var normalize_rows(ad::Var q, std::size_t valid) {
  const Tensor& qv = q.value();
  const std::size_t rows = qv.rows(), n = qv.cols();
  if (valid == 0 || valid > n) throw DimensionError("normalize_rows: valid length out of range");
  Tensor a(qv.shape());
  std::vector<double> sums(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += qv[r * n + c];
    sums[r] = s;
    if (s < kMinContextMass) {
      for (std::size_t c = 0; c < valid; ++c) a[r * n + c] = 1.0 / static_cast<double>(valid);
    } else {
      for (std::size_t c = 0; c < n; ++c) a[r * n + c] = qv[r * n + c] / s;
    }
  }
  const std::size_t qid = q.id();
  return q.graph().record("normalize_rows", {q}, std::move(a),
                          [qid, rows, n, sums = std::move(sums)](ad::Graph& g, std::size_t self) {
                            Tensor* dq = g.grad_sink(qid);
                            if (!dq) return;
                            const Tensor& up = g.upstream(self);
                            const Tensor& av = g.value(self);
                            for (std::size_t r = 0; r < rows; ++r) {
                              if (sums[r] < kMinContextMass) continue;
                              double dot = 0.0;
                              for (std::size_t c = 0; c < n; ++c) dot += up[r * n + c] * av[r * n + c];
                              for (std::size_t c = 0; c < n; ++c) (*dq)[r * n + c] += (up[r * n + c] - dot) / sums[r];
                            }
                          });
}

PairContext pair_context(ad::Var hidden, ad::Var subject_attention, ad::Var object_attention, std::size_t valid) {
  const Tensor& sv = subject_attention.value();
  if (sv.shape() != object_attention.value().shape() || sv.rank() != 2)
    throw DimensionError("pair_context: attention shapes " + shape_str(sv.shape()) + " and " +
                         shape_str(object_attention.value().shape()) + " disagree");
  const std::size_t heads = sv.dim(0), l = sv.dim(1);
  ad::Var prod = ad::mul(subject_attention, object_attention);
  ad::Var q = ad::slice_cols(ad::reshape(prod, Shape{1, heads * l}), 0, l);
  for (std::size_t h = 1; h < heads; ++h)
    q = ad::add(q, ad::slice_cols(ad::reshape(prod, Shape{1, heads * l}), h * l, l));
  PairContext out;
  out.weights = normalize_rows(q, valid);
  out.context = ad::matmul(out.weights, hidden);
  return out;
}

PairContext pair_context(ad::Var hidden, std::span<const ad::Var> subject_rows, std::span<const ad::Var> object_rows,
                         std::size_t valid) {
  if (subject_rows.empty() || subject_rows.size() != object_rows.size())
    throw DimensionError("pair_context: head counts disagree");
  ad::Var q = ad::mul(subject_rows[0], object_rows[0]);
  for (std::size_t h = 1; h < subject_rows.size(); ++h) q = ad::add(q, ad::mul(subject_rows[h], object_rows[h]));
  PairContext out;
  out.weights = normalize_rows(q, valid);
  out.context = ad::matmul(out.weights, hidden);
  return out;
}

}  // namespace atlop
