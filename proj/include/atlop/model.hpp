#pragma once

// Full relation extraction model: marked document -> encoder -> entity
// pooling -> (optional) localized context -> group bilinear logits for
// every ordered entity pair.

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "atlop/autodiff.hpp"
#include "atlop/corpus.hpp"
#include "atlop/encoder.hpp"
#include "atlop/head.hpp"
#include "atlop/objective.hpp"
#include "atlop/pooling.hpp"
#include "atlop/vocab.hpp"

namespace atlop {

enum class LossKind { Adaptive, BCE };

std::string to_string(LossKind k);
LossKind parse_loss(const std::string& s);
std::string to_string(PoolingKind k);
PoolingKind parse_pooling(const std::string& s);

struct ModelConfig {
  EncoderConfig encoder;
  std::size_t groups = 4;
  bool context_pooling = true;
  PoolingKind pooling = PoolingKind::LogSumExp;
  bool entity_markers = true;
  LossKind loss = LossKind::Adaptive;
  bool truncate = false;

  bool operator==(const ModelConfig&) const = default;
};

/// All ordered pairs (s, o), s != o, subject-major.
std::vector<std::pair<std::size_t, std::size_t>> ordered_pairs(std::size_t entities);

struct ForwardOptions {
  bool train = false;
  std::mt19937_64* rng = nullptr;
};

struct DocumentForward {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  MarkedDocument marked;
  EncoderOutput encoded;
  /// Anchors actually used (after truncation).
  std::vector<std::vector<std::size_t>> anchors;
  ad::Var entities;  // [n x d]
  ad::Var context_weights;  // [P x l], invalid without context pooling
  ad::Var logits;  // [P x (|R| + 1)]
};

class Model {
 public:
  Model() = default;
  Model(const ModelConfig& config, Vocabulary vocab, RelationSchema schema, std::uint64_t seed);

  const ModelConfig& config() const noexcept { return config_; }
  const Vocabulary& vocab() const noexcept { return vocab_; }
  const RelationSchema& schema() const noexcept { return schema_; }
  const Encoder& encoder() const noexcept { return encoder_; }
  const RelationHead& head() const noexcept { return head_; }

  /// Throws DataError for documents with fewer than two entities.
  DocumentForward forward(ad::Graph& graph, const Document& doc, const ForwardOptions& options = {}) const;

  /// Label sets of `pairs` under the document's gold labels.
  std::vector<LabelSets> pair_labels(const Document& doc,
                                     const std::vector<std::pair<std::size_t, std::size_t>>& pairs) const;

  /// Sum over the document's pairs of the configured loss.
  ad::Var loss(const DocumentForward& fwd, const Document& doc) const;

  /// Per relation probabilities of one logit row: sigmoid(logit_r) for BCE
  /// models, sigmoid(logit_r - logit_TH) for adaptive-loss models.
  std::vector<double> probabilities(std::span<const double> logits) const;

  /// Encoder parameters first, then the head's.
  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;
  std::size_t encoder_parameter_count() const;

 private:
  ModelConfig config_;
  Vocabulary vocab_;
  RelationSchema schema_;
  Encoder encoder_;
  RelationHead head_;
};

}  // namespace atlop
