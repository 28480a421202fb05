#include "atlop/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "atlop/errors.hpp"

namespace atlop {

LabelSets LabelSets::from_positives(std::span<const std::size_t> positives, std::size_t num_relations) {
  LabelSets out;
  std::vector<char> pos(num_relations, 0);
  for (std::size_t r : positives) {
    if (r >= num_relations) throw DataError("relation id " + std::to_string(r) + " outside R");
    pos[r] = 1;
  }
  for (std::size_t r = 0; r < num_relations; ++r) (pos[r] ? out.positives : out.negatives).push_back(r);
  return out;
}

void LabelSets::validate(std::size_t num_relations) const {
  std::vector<int> seen(num_relations, 0);
  for (const auto* set : {&positives, &negatives})
    for (std::size_t r : *set) {
      if (r >= num_relations) throw DataError("class id " + std::to_string(r) + " is outside R");
      if (seen[r]++) throw DataError("class id " + std::to_string(r) + " appears twice in the label sets");
    }
  if (positives.size() + negatives.size() != num_relations) throw DataError("label sets do not cover R");
}

namespace {

double lse(std::span<const double> logits, std::span<const std::size_t> relations) {
  double mx = logits[kThresholdClass];
  for (std::size_t r : relations) mx = std::max(mx, logits[logit_column(r)]);
  double s = std::exp(logits[kThresholdClass] - mx);
  for (std::size_t r : relations) s += std::exp(logits[logit_column(r)] - mx);
  return mx + std::log(s);
}

void check_logits(std::span<const double> logits, const LabelSets& labels) {
  if (logits.size() < 2) throw DimensionError("logits need the threshold class and at least one relation");
  labels.validate(logits.size() - 1);
}

}  // namespace

AdaptiveLoss adaptive_threshold_loss(std::span<const double> logits, const LabelSets& labels) {
  check_logits(logits, labels);
  AdaptiveLoss out;
  if (!labels.positives.empty()) {
    const double z = lse(logits, labels.positives);
    for (std::size_t r : labels.positives) out.positive += z - logits[logit_column(r)];
  }
  out.negative = lse(logits, labels.negatives) - logits[kThresholdClass];
  return out;
}

ad::Var adaptive_threshold_loss(ad::Var logits, std::span<const LabelSets> labels) {
  const Tensor& lv = logits.value();
  const std::size_t pairs = lv.rows(), classes = lv.cols();
  if (labels.size() != pairs) throw DimensionError("adaptive_threshold_loss: label count does not match pairs");
  double total = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) total += adaptive_threshold_loss(lv.row(p), labels[p]).total();
  std::vector<LabelSets> saved(labels.begin(), labels.end());
  const std::size_t lid = logits.id();
  return logits.graph().record(
      "adaptive_threshold_loss", {logits}, Tensor::scalar(total),
      [lid, pairs, classes, saved = std::move(saved)](ad::Graph& g, std::size_t self) {
        Tensor* dl = g.grad_sink(lid);
        if (!dl) return;
        const double up = g.upstream(self)[0];
        const Tensor& lv = g.value(lid);
        for (std::size_t p = 0; p < pairs; ++p) {
          const auto row = lv.row(p);
          double* d = &(*dl)[p * classes];
          const LabelSets& ls = saved[p];
          // dL1 = |P| softmax_{P u TH} - 1[r in P]
          if (!ls.positives.empty()) {
            const double z = lse(row, ls.positives);
            const double k = static_cast<double>(ls.positives.size());
            d[kThresholdClass] += up * k * std::exp(row[kThresholdClass] - z);
            for (std::size_t r : ls.positives) d[logit_column(r)] += up * (k * std::exp(row[logit_column(r)] - z) - 1.0);
          }
          // dL2 = softmax_{N u TH} - 1[TH]
          const double z = lse(row, ls.negatives);
          d[kThresholdClass] += up * (std::exp(row[kThresholdClass] - z) - 1.0);
          for (std::size_t r : ls.negatives) d[logit_column(r)] += up * std::exp(row[logit_column(r)] - z);
        }
      });
}

double bce_loss(std::span<const double> probs, std::span<const double> targets) {
  if (probs.size() != targets.size() || probs.empty()) throw DimensionError("bce_loss: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-12, 1.0 - 1e-12);
    s -= targets[i] * std::log(p) + (1.0 - targets[i]) * std::log(1.0 - p);
  }
  return s / static_cast<double>(probs.size());
}

namespace {
// -log sigmoid(x) and -log(1 - sigmoid(x)) without overflow.
double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

ad::Var bce_loss(ad::Var logits, std::span<const LabelSets> labels) {
  const Tensor& lv = logits.value();
  const std::size_t pairs = lv.rows(), classes = lv.cols();
  if (labels.size() != pairs) throw DimensionError("bce_loss: label count does not match pairs");
  const std::size_t relations = classes - 1;
  std::vector<double> targets(pairs * relations, 0.0);
  double total = 0.0;
  for (std::size_t p = 0; p < pairs; ++p) {
    labels[p].validate(relations);
    for (std::size_t r : labels[p].positives) targets[p * relations + r] = 1.0;
    double s = 0.0;
    for (std::size_t r = 0; r < relations; ++r) {
      const double x = lv[p * classes + logit_column(r)];
      // y * softplus(-x) + (1 - y) * softplus(x)
      const double y = targets[p * relations + r];
      s += y * softplus(-x) + (1.0 - y) * softplus(x);
    }
    total += s / static_cast<double>(relations);
  }
  const std::size_t lid = logits.id();
  return logits.graph().record(
      "bce_loss", {logits}, Tensor::scalar(total),
      [lid, pairs, classes, relations, targets = std::move(targets)](ad::Graph& g, std::size_t self) {
        Tensor* dl = g.grad_sink(lid);
        if (!dl) return;
        const double up = g.upstream(self)[0] / static_cast<double>(relations);
        const Tensor& lv = g.value(lid);
        for (std::size_t p = 0; p < pairs; ++p)
          for (std::size_t r = 0; r < relations; ++r) {
            const std::size_t c = p * classes + logit_column(r);
            (*dl)[c] += up * (sigmoid(lv[c]) - targets[p * relations + r]);
          }
      });
}

std::vector<std::size_t> decide_adaptive(std::span<const double> logits) {
  std::vector<std::size_t> out;
  if (logits.empty()) return out;
  const double th = logits[kThresholdClass];
  for (std::size_t r = 0; r + 1 < logits.size(); ++r)
    if (logits[logit_column(r)] > th) out.push_back(r);
  return out;
}

std::vector<std::size_t> decide_global(std::span<const double> probs, double theta) {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < probs.size(); ++r)
    if (probs[r] > theta) out.push_back(r);
  return out;
}

std::vector<std::size_t> decide_per_class(std::span<const double> probs, std::span<const double> thetas) {
  if (thetas.size() != probs.size()) throw DimensionError("decide_per_class: threshold count mismatch");
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < probs.size(); ++r)
    if (probs[r] > thetas[r]) out.push_back(r);
  return out;
}

std::string to_string(ThresholdStrategy s) {
  switch (s) {
    case ThresholdStrategy::Adaptive:
      return "adaptive";
    case ThresholdStrategy::Global:
      return "global";
    case ThresholdStrategy::PerClass:
      return "per-class";
  }
  return "adaptive";
}

ThresholdStrategy parse_strategy(const std::string& s) {
  if (s == "adaptive") return ThresholdStrategy::Adaptive;
  if (s == "global") return ThresholdStrategy::Global;
  if (s == "per-class" || s == "per_class") return ThresholdStrategy::PerClass;
  throw ConfigError("unknown threshold strategy '" + s + "'");
}

void ThresholdConfig::validate(std::size_t num_relations) const {
  auto in_range = [](double t) { return t > 0.0 && t < 1.0; };
  switch (strategy) {
    case ThresholdStrategy::Adaptive:
      break;
    case ThresholdStrategy::Global:
      if (!in_range(theta)) throw ConfigError("global threshold must lie in (0, 1)");
      break;
    case ThresholdStrategy::PerClass:
      if (per_class.size() != num_relations) throw ConfigError("per-class thresholds must cover every relation");
      if (!std::all_of(per_class.begin(), per_class.end(), in_range))
        throw ConfigError("per-class thresholds must lie in (0, 1)");
      break;
  }
}

}  // namespace atlop
