#pragma once

// Relation classifier: tanh projections of the pooled entity embeddings
// (optionally fused with the pair's localized context) followed by group
// bilinear scoring for every relation class plus the threshold class.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "atlop/autodiff.hpp"

namespace atlop {

/// Logit column of the learnable threshold (TH) class. Relation id r of
/// the schema lives in column r + 1.
inline constexpr std::size_t kThresholdClass = 0;
inline constexpr std::size_t logit_column(std::size_t relation) { return relation + 1; }

enum class Side { Subject, Object };

struct HeadConfig {
  std::size_t dim = 64;
  std::size_t relations = 1;  // |R|; the head scores |R| + 1 classes
  std::size_t groups = 4;     // k
  bool context_pooling = true;

  std::size_t classes() const noexcept { return relations + 1; }
  std::size_t block() const noexcept { return dim / groups; }
  /// Throws ConfigError when dim is not divisible by groups.
  void validate() const;
  bool operator==(const HeadConfig&) const = default;
};

/// logits[p, r] = sum_i zs[p, i-th slice]^T W[r, i] zo[p, i-th slice] + bias[r]
/// with zs, zo: [P x d], blocks: [C x k x b x b] (b = d / k), bias: [C].
ad::Var group_bilinear(ad::Var zs, ad::Var zo, ad::Var blocks, ad::Var bias, std::size_t groups);

/// One logit computed directly from spans, for reference and tests.
double group_bilinear_logit(std::span<const double> zs, std::span<const double> zo, const Tensor& blocks,
                            const Tensor& bias, std::size_t cls, std::size_t groups);

class RelationHead {
 public:
  RelationHead() = default;
  RelationHead(const HeadConfig& config, std::uint64_t seed);

  const HeadConfig& config() const noexcept { return config_; }

  /// z = tanh(h W^T) or tanh(h W^T + c Wc^T); rows of `h` are entities
  /// ([d] or [P x d]).
  ad::Var project(ad::Var h, std::optional<ad::Var> context, Side side) const;

  /// [P x d] subject / object embeddings (+ optional [P x d] context) ->
  /// [P x (|R| + 1)] logits, threshold class in column 0.
  ad::Var pair_logits(ad::Var subject, ad::Var object, std::optional<ad::Var> context) const;

  /// Weights per class: d^2 / k block entries + 1 bias.
  std::size_t parameters_per_class() const noexcept;

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

  // Direct access for tests and reference computations.
  ad::Parameter& w_subject() const { return w_subject_; }
  ad::Parameter& w_object() const { return w_object_; }
  ad::Parameter& w_context_subject() const { return w_context_subject_; }
  ad::Parameter& w_context_object() const { return w_context_object_; }
  ad::Parameter& blocks() const { return blocks_; }
  ad::Parameter& bias() const { return bias_; }

 private:
  HeadConfig config_;
  mutable ad::Parameter w_subject_, w_object_, w_context_subject_, w_context_object_;
  mutable ad::Parameter blocks_, bias_;
};

}  // namespace atlop
