#include "atlop/thresholds.hpp"

#include <algorithm>

#include "atlop/errors.hpp"

namespace atlop {

std::array<double, 9> global_threshold_grid() {
  std::array<double, 9> g{};
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i + 1) / 10.0;
  return g;
}

std::array<double, 19> per_class_threshold_grid() {
  std::array<double, 19> g{};
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<double>(i + 1) / 20.0;
  return g;
}

namespace {

bool is_gold(const ScoredPair& p, std::size_t r) {
  return std::find(p.gold.begin(), p.gold.end(), r) != p.gold.end();
}

// Counts of one class at one threshold.
MicroCounts count_class(std::span<const ScoredPair> pairs, std::size_t r, double theta) {
  MicroCounts c;
  for (const ScoredPair& p : pairs) {
    const bool predicted = p.probs[r] > theta;
    const bool gold = is_gold(p, r);
    if (predicted && gold)
      ++c.tp;
    else if (predicted)
      ++c.fp;
    else if (gold)
      ++c.fn;
  }
  return c;
}

MicroCounts minus(MicroCounts a, const MicroCounts& b) {
  a.tp -= b.tp;
  a.fp -= b.fp;
  a.fn -= b.fn;
  return a;
}

void check_pairs(std::span<const ScoredPair> pairs, std::size_t num_relations) {
  if (pairs.empty()) throw DataError("threshold tuning needs a non-empty dev set");
  for (const ScoredPair& p : pairs) {
    if (p.probs.size() != num_relations) throw DimensionError("scored pair has the wrong number of probabilities");
    for (std::size_t g : p.gold)
      if (g >= num_relations) throw DataError("gold relation id outside R");
  }
}

}  // namespace

MicroCounts count_global(std::span<const ScoredPair> pairs, double theta) {
  MicroCounts c;
  if (pairs.empty()) return c;
  for (std::size_t r = 0; r < pairs[0].probs.size(); ++r) c += count_class(pairs, r, theta);
  return c;
}

MicroCounts count_per_class(std::span<const ScoredPair> pairs, std::span<const double> thetas) {
  MicroCounts c;
  for (std::size_t r = 0; r < thetas.size(); ++r) c += count_class(pairs, r, thetas[r]);
  return c;
}

double tune_global_threshold(std::span<const ScoredPair> pairs) {
  check_pairs(pairs, pairs.empty() ? 0 : pairs[0].probs.size());
  double best_theta = 0.0, best_f1 = -1.0;
  for (double theta : global_threshold_grid()) {
    const double f1 = count_global(pairs, theta).f1();
    if (f1 > best_f1) {
      best_f1 = f1;
      best_theta = theta;
    }
  }
  return best_theta;
}

PerClassTuning tune_per_class_thresholds(std::span<const ScoredPair> pairs, std::size_t num_relations,
                                         std::size_t max_sweeps, std::vector<double> initial) {
  check_pairs(pairs, num_relations);
  PerClassTuning out;
  out.thresholds = initial.empty() ? std::vector<double>(num_relations, tune_global_threshold(pairs)) : std::move(initial);
  if (out.thresholds.size() != num_relations) throw DimensionError("initial thresholds must cover every relation");

  std::vector<MicroCounts> per_class(num_relations);
  MicroCounts total;
  for (std::size_t r = 0; r < num_relations; ++r) {
    per_class[r] = count_class(pairs, r, out.thresholds[r]);
    total += per_class[r];
  }
  out.f1_trace.push_back(total.f1());

  const auto grid = per_class_threshold_grid();
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    bool changed = false;
    for (std::size_t r = 0; r < num_relations; ++r) {
      const MicroCounts rest = minus(total, per_class[r]);
      double best_f1 = total.f1();
      double best_theta = out.thresholds[r];
      MicroCounts best_counts = per_class[r];
      for (double theta : grid) {
        MicroCounts c = count_class(pairs, r, theta);
        MicroCounts candidate = rest;
        candidate += c;
        if (candidate.f1() > best_f1) {
          best_f1 = candidate.f1();
          best_theta = theta;
          best_counts = c;
        }
      }
      if (best_theta != out.thresholds[r]) {
        changed = true;
        out.thresholds[r] = best_theta;
        per_class[r] = best_counts;
        total = rest;
        total += best_counts;
      }
      out.f1_trace.push_back(total.f1());
    }
    out.sweeps = sweep + 1;
    if (!changed) break;
  }
  return out;
}

}  // namespace atlop
