#pragma once

// Post-hoc threshold tuning on development predictions: one global
// threshold from a 9-value grid, or one threshold per class by cyclic
// coordinate ascent on a 19-value grid.

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "atlop/metrics.hpp"

namespace atlop {

/// Scores of one entity pair: probabilities indexed by relation id, plus
/// the gold relation ids.
struct ScoredPair {
  std::vector<double> probs;
  std::vector<std::size_t> gold;
};

/// {0.1, 0.2, ..., 0.9}
std::array<double, 9> global_threshold_grid();
/// {0.05, 0.10, ..., 0.95}
std::array<double, 19> per_class_threshold_grid();

MicroCounts count_global(std::span<const ScoredPair> pairs, double theta);
MicroCounts count_per_class(std::span<const ScoredPair> pairs, std::span<const double> thetas);

/// Grid value maximizing micro-F1; ties resolve to the smallest threshold.
/// Throws DataError on an empty dev set.
double tune_global_threshold(std::span<const ScoredPair> pairs);

struct PerClassTuning {
  std::vector<double> thresholds;
  /// Micro-F1 before any update, then after every coordinate update.
  std::vector<double> f1_trace;
  std::size_t sweeps = 0;
};

/// Cyclic coordinate ascent over classes in ascending id order. A class's
/// threshold only moves to a strictly better candidate, so the F1 trace is
/// non-decreasing. Stops after a sweep without change or `max_sweeps`.
/// Starts from `initial` (default: the tuned global threshold everywhere).
PerClassTuning tune_per_class_thresholds(std::span<const ScoredPair> pairs, std::size_t num_relations,
                                         std::size_t max_sweeps = 10, std::vector<double> initial = {});

}  // namespace atlop
