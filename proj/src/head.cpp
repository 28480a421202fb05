#include "atlop/head.hpp"

#include <cmath>
#include <random>

#include "atlop/errors.hpp"

namespace atlop {

void HeadConfig::validate() const {
  if (dim == 0 || groups == 0) throw ConfigError("head dimension and group count must be positive");
  if (dim % groups != 0)
    throw ConfigError("embedding dimension " + std::to_string(dim) + " is not divisible into " +
                      std::to_string(groups) + " groups");
  if (relations == 0) throw ConfigError("head needs at least one relation");
}

ad::Var group_bilinear(ad::Var zs, ad::Var zo, ad::Var blocks, ad::Var bias, std::size_t groups) {
  const Tensor& sv = zs.value();
  const Tensor& ov = zo.value();
  const Tensor& wv = blocks.value();
  if (sv.shape() != ov.shape())
    throw DimensionError("group_bilinear: subject " + shape_str(sv.shape()) + " and object " + shape_str(ov.shape()) +
                         " disagree");
  const std::size_t pairs = sv.rows(), d = sv.cols();
  if (groups == 0 || d % groups != 0)
    throw ConfigError("group_bilinear: dimension " + std::to_string(d) + " not divisible by " + std::to_string(groups));
  const std::size_t b = d / groups;
  if (wv.rank() != 4 || wv.dim(1) != groups || wv.dim(2) != b || wv.dim(3) != b)
    throw DimensionError("group_bilinear: block tensor " + shape_str(wv.shape()) + " does not match k=" +
                         std::to_string(groups) + ", d=" + std::to_string(d));
  const std::size_t classes = wv.dim(0);
  if (bias.value().size() != classes) throw DimensionError("group_bilinear: bias size does not match classes");

  Tensor y({pairs, classes});
  std::vector<double> tmp(b);
  for (std::size_t p = 0; p < pairs; ++p) {
    const double* s = &sv[p * d];
    const double* o = &ov[p * d];
    for (std::size_t r = 0; r < classes; ++r) {
      double acc = 0.0;
      for (std::size_t g = 0; g < groups; ++g) {
        const double* w = &wv[((r * groups + g) * b) * b];
        const double* sg = s + g * b;
        const double* og = o + g * b;
        for (std::size_t i = 0; i < b; ++i) {
          double row = 0.0;
          for (std::size_t j = 0; j < b; ++j) row += w[i * b + j] * og[j];
          acc += sg[i] * row;
        }
      }
      y[p * classes + r] = acc + bias.value()[r];
    }
  }
  const std::size_t sid = zs.id(), oid = zo.id(), wid = blocks.id(), bid = bias.id();
  return zs.graph().record(
      "group_bilinear", {zs, zo, blocks, bias}, std::move(y),
      [sid, oid, wid, bid, pairs, classes, groups, b, d](ad::Graph& gr, std::size_t self) {
        const Tensor& up = gr.upstream(self);
        const Tensor& sv = gr.value(sid);
        const Tensor& ov = gr.value(oid);
        const Tensor& wv = gr.value(wid);
        Tensor* ds = gr.grad_sink(sid);
        Tensor* dob = gr.grad_sink(oid);
        Tensor* dw = gr.grad_sink(wid);
        Tensor* db = gr.grad_sink(bid);
        for (std::size_t p = 0; p < pairs; ++p) {
          const double* s = &sv[p * d];
          const double* o = &ov[p * d];
          for (std::size_t r = 0; r < classes; ++r) {
            const double gup = up[p * classes + r];
            if (db) (*db)[r] += gup;
            if (gup == 0.0) continue;
            for (std::size_t g = 0; g < groups; ++g) {
              const std::size_t wbase = ((r * groups + g) * b) * b;
              const double* w = &wv[wbase];
              const double* sg = s + g * b;
              const double* og = o + g * b;
              for (std::size_t i = 0; i < b; ++i) {
                double row = 0.0;
                for (std::size_t j = 0; j < b; ++j) {
                  row += w[i * b + j] * og[j];
                  if (dob) (*dob)[p * d + g * b + j] += gup * sg[i] * w[i * b + j];
                  if (dw) (*dw)[wbase + i * b + j] += gup * sg[i] * og[j];
                }
                if (ds) (*ds)[p * d + g * b + i] += gup * row;
              }
            }
          }
        }
      });
}

double group_bilinear_logit(std::span<const double> zs, std::span<const double> zo, const Tensor& blocks,
                            const Tensor& bias, std::size_t cls, std::size_t groups) {
  const std::size_t d = zs.size();
  if (zo.size() != d || groups == 0 || d % groups != 0)
    throw ConfigError("group_bilinear_logit: dimension " + std::to_string(d) + " not divisible by " +
                      std::to_string(groups));
  const std::size_t b = d / groups;
  double acc = 0.0;
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t i = 0; i < b; ++i)
      for (std::size_t j = 0; j < b; ++j)
        acc += zs[g * b + i] * blocks[((cls * groups + g) * b + i) * b + j] * zo[g * b + j];
  return acc + bias[cls];
}

RelationHead::RelationHead(const HeadConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = config_.dim;
  const double bound = 1.0 / std::sqrt(static_cast<double>(d));
  std::uniform_real_distribution<double> u(-bound, bound);
  auto init = [&](const char* name, Shape shape) {
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = u(rng);
    return ad::Parameter(name, std::move(t));
  };
  w_subject_ = init("head.w_subject", {d, d});
  w_object_ = init("head.w_object", {d, d});
  w_context_subject_ = init("head.w_context_subject", {d, d});
  w_context_object_ = init("head.w_context_object", {d, d});
  blocks_ = init("head.bilinear_blocks", {config_.classes(), config_.groups, config_.block(), config_.block()});
  bias_ = ad::Parameter("head.bias", Tensor({config_.classes()}, 0.0));
}

ad::Var RelationHead::project(ad::Var h, std::optional<ad::Var> context, Side side) const {
  ad::Graph& g = h.graph();
  ad::Parameter& w = side == Side::Subject ? w_subject_ : w_object_;
  ad::Var pre = ad::matmul_nt(h, g.parameter(w));
  if (context) {
    ad::Parameter& wc = side == Side::Subject ? w_context_subject_ : w_context_object_;
    pre = ad::add(pre, ad::matmul_nt(*context, g.parameter(wc)));
  }
  return ad::tanh(pre);
}

ad::Var RelationHead::pair_logits(ad::Var subject, ad::Var object, std::optional<ad::Var> context) const {
  ad::Graph& g = subject.graph();
  if (!config_.context_pooling) context.reset();
  ad::Var zs = project(subject, context, Side::Subject);
  ad::Var zo = project(object, context, Side::Object);
  if (zs.value().rank() == 1) {
    zs = ad::reshape(zs, Shape{1, config_.dim});
    zo = ad::reshape(zo, Shape{1, config_.dim});
  }
  return group_bilinear(zs, zo, g.parameter(blocks_), g.parameter(bias_), config_.groups);
}

std::size_t RelationHead::parameters_per_class() const noexcept {
  return config_.groups * config_.block() * config_.block() + 1;
}

std::vector<ad::Parameter*> RelationHead::parameters() {
  std::vector<ad::Parameter*> ps{&w_subject_, &w_object_};
  if (config_.context_pooling) {
    ps.push_back(&w_context_subject_);
    ps.push_back(&w_context_object_);
  }
  ps.push_back(&blocks_);
  ps.push_back(&bias_);
  return ps;
}

std::vector<const ad::Parameter*> RelationHead::parameters() const {
  auto ps = const_cast<RelationHead*>(this)->parameters();
  return {ps.begin(), ps.end()};
}

}  // namespace atlop
