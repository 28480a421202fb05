#pragma once

// Micro-averaged precision / recall / F1 over (doc, subject, object,
// relation) tuples, Ign F1, and per-entity-count buckets.

#include <cstddef>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "atlop/corpus.hpp"

namespace atlop {

/// Micro counts. Precision, recall and F1 are 0 whenever their denominator
/// is 0 (including the no-gold, no-prediction case).
struct MicroCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  double precision() const noexcept;
  double recall() const noexcept;
  double f1() const noexcept;
  MicroCounts& operator+=(const MicroCounts& o) noexcept;
  bool operator==(const MicroCounts&) const = default;
};

struct F1Report {
  MicroCounts counts;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

F1Report make_report(const MicroCounts& c);

/// Throws DataError for predictions naming an unknown doc_id or entity.
F1Report evaluate_f1(const std::vector<PredictionRecord>& predictions, const Corpus& gold);

/// (subject surface form, relation name, object surface form); surface
/// forms come from each entity's first mention.
using Fact = std::tuple<std::string, std::string, std::string>;
using FactSet = std::set<Fact>;

FactSet extract_facts(const Corpus& corpus, const RelationSchema& schema);

struct IgnF1Report {
  F1Report report;
  /// Set when no gold tuple survives the exclusion; F1 is then 0.
  bool degenerate = false;
  std::size_t removed_gold = 0;
  std::size_t removed_predicted = 0;
};

/// F1 after dropping every gold and predicted tuple whose fact is in
/// `train_facts`.
IgnF1Report evaluate_ign_f1(const std::vector<PredictionRecord>& predictions, const Corpus& gold,
                            const RelationSchema& schema, const FactSet& train_facts);

struct BucketRow {
  std::size_t min_entities = 0;
  std::size_t max_entities = 0;
  std::size_t documents = 0;
  F1Report report;
};

/// Buckets 1..w, w+1..2w, ...; only non-empty buckets are listed.
std::vector<BucketRow> bucket_by_entity_count(const Corpus& corpus, const std::vector<PredictionRecord>& predictions,
                                              std::size_t width = 5);

}  // namespace atlop
