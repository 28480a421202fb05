#pragma once

// Synthetic multi-entity, multi-label corpora. Every relation fact is
// stated by one template sentence "<lead> <subject> <middle...> <object> ."
// so a correct model can learn it from surface context; the remaining
// mentions sit in neutral distractor sentences.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "atlop/corpus.hpp"

namespace atlop {

struct SyntheticConfig {
  std::size_t min_entities = 4;
  std::size_t max_entities = 8;
  std::size_t min_mentions = 1;
  std::size_t max_mentions = 3;
  /// Mention counts are geometric on [min, max]: P(m + 1) = P(m) * ratio.
  /// 1.0 is uniform; 0.25 gives about 1.3 mentions per entity.
  double mention_ratio = 0.25;
  std::size_t max_name_words = 1;
  /// Distinct name words available (at most 900).
  std::size_t name_pool_size = 48;
  std::size_t min_positive_pairs = 1;
  std::size_t max_positive_pairs = 3;
  /// Probability that a positive pair carries a second relation.
  double multi_label_rate = 0.07;
  /// Entity-free filler sentences per document, drawn from [0, max].
  std::size_t max_filler_sentences = 1;
  /// Chance that a distractor sentence joins two entities instead of one.
  double paired_distractor_rate = 0.75;
  std::string doc_prefix = "syn";

  /// Throws ConfigError on inconsistent bounds.
  void validate() const;
};

/// born_in, works_for, located_in, founded_by
RelationSchema default_synthetic_schema();

/// Fact sentences read `lead SUBJECT middle... OBJECT .`
struct RelationTemplate {
  std::string lead;
  std::vector<std::string> middle;
};

/// Phrasings of a relation; relations outside the default set get one
/// built from their name.
std::vector<RelationTemplate> relation_templates(const std::string& relation);

/// Deterministic given `seed`. Throws ConfigError when the schema has fewer
/// than two relations.
Corpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_docs, const RelationSchema& schema,
                                 const SyntheticConfig& config = {});

/// Two entities, two sentences, one born_in fact: the smallest document
/// the full model accepts. Used for gradient checks.
Document toy_document();

/// True when every label has an evidence sentence that is exactly one of
/// the relation's templates around the subject's and the object's mentions.
bool verify_synthetic_document(const Document& doc, const RelationSchema& schema);

}  // namespace atlop
