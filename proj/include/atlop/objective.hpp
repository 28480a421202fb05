#pragma once

// Training objectives and decision rules.
//
// Logit vectors have |R| + 1 entries with the threshold class in column
// kThresholdClass; relation ids index R and live in logit_column(id).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "atlop/autodiff.hpp"
#include "atlop/head.hpp"

namespace atlop {

/// Positive / negative relation ids of one entity pair. An NA pair has no
/// positives and every relation negative.
struct LabelSets {
  std::vector<std::size_t> positives;
  std::vector<std::size_t> negatives;

  static LabelSets from_positives(std::span<const std::size_t> positives, std::size_t num_relations);
  /// Throws DataError unless the sets are disjoint and cover R exactly.
  void validate(std::size_t num_relations) const;
};

struct AdaptiveLoss {
  double positive = 0.0;  // L1, zero when there are no positives
  double negative = 0.0;  // L2
  double total() const noexcept { return positive + negative; }
};

/// L1 = -sum_{r in P} log softmax_{P u TH}(logits)[r]
/// L2 = -log softmax_{N u TH}(logits)[TH]
AdaptiveLoss adaptive_threshold_loss(std::span<const double> logits, const LabelSets& labels);

/// Sum over pairs of L1 + L2 for logits [P x (|R|+1)].
ad::Var adaptive_threshold_loss(ad::Var logits, std::span<const LabelSets> labels);

/// Mean over classes of binary cross entropy; p is clamped to
/// [1e-12, 1 - 1e-12].
double bce_loss(std::span<const double> probs, std::span<const double> targets);

/// Sum over pairs of the mean per-relation binary cross entropy of
/// sigmoid(logits). The threshold column takes no part.
ad::Var bce_loss(ad::Var logits, std::span<const LabelSets> labels);

/// {r : logit_r > logit_TH}; ties go to NA.
std::vector<std::size_t> decide_adaptive(std::span<const double> logits);
/// {r : p_r > theta} for probabilities indexed by relation id.
std::vector<std::size_t> decide_global(std::span<const double> probs, double theta);
std::vector<std::size_t> decide_per_class(std::span<const double> probs, std::span<const double> thetas);

enum class ThresholdStrategy { Adaptive, Global, PerClass };

std::string to_string(ThresholdStrategy s);
/// Accepts "adaptive", "global", "per-class" / "per_class".
ThresholdStrategy parse_strategy(const std::string& s);

struct ThresholdConfig {
  ThresholdStrategy strategy = ThresholdStrategy::Adaptive;
  double theta = 0.5;
  std::vector<double> per_class;

  /// Throws ConfigError when the fields needed by `strategy` are missing or
  /// out of (0, 1).
  void validate(std::size_t num_relations) const;
};

}  // namespace atlop
