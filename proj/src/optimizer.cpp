#include "atlop/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "atlop/errors.hpp"

namespace atlop {

AdamW::AdamW(std::vector<ParamGroup> groups, const AdamWConfig& config) : groups_(std::move(groups)), config_(config) {
  for (std::size_t g = 0; g < groups_.size(); ++g)
    for (ad::Parameter* p : groups_[g].params)
      slots_.push_back(Slot{p, g, Tensor(p->value.shape(), 0.0), Tensor(p->value.shape(), 0.0)});
}

void AdamW::step(double lr_scale) {
  ++t_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (Slot& s : slots_) {
    if (!s.p->requires_grad) continue;
    const double lr = groups_[s.group].lr * lr_scale;
    const double decay = s.p->value.rank() >= 2 ? config_.weight_decay : 0.0;
    auto w = s.p->value.data();
    auto gr = s.p->grad.data();
    auto m = s.m.data();
    auto v = s.v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * gr[i];
      v[i] = b2 * v[i] + (1.0 - b2) * gr[i] * gr[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + decay * w[i]);
    }
  }
}

void AdamW::zero_grad() {
  for (Slot& s : slots_) s.p->zero_grad();
}

double lr_schedule(std::size_t step, std::size_t total, double warmup_fraction) {
  if (total == 0) return 0.0;
  step = std::min(step, total);
  const auto warm = static_cast<std::size_t>(std::llround(warmup_fraction * static_cast<double>(total)));
  if (step < warm) return static_cast<double>(step) / static_cast<double>(warm);
  if (warm >= total) return 1.0;
  return static_cast<double>(total - step) / static_cast<double>(total - warm);
}

double clip_grad_norm(std::span<ad::Parameter* const> params, double max_norm) {
  if (!(max_norm > 0)) throw ConfigError("clip norm must be positive");
  double sq = 0.0;
  for (const ad::Parameter* p : params)
    for (double g : p->grad.data()) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double f = max_norm / norm;
    for (ad::Parameter* p : params)
      for (double& g : p->grad.data()) g *= f;
  }
  return norm;
}

}  // namespace atlop
