#pragma once

// Entity representations from token-level encoder outputs: mention
// embeddings, logsumexp entity pooling, entity-level attention and the
// localized context of an entity pair.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "atlop/autodiff.hpp"

namespace atlop {

enum class PoolingKind { LogSumExp, Mean };

/// Rows of `hidden` [l x d] at the mention anchors -> [m x d].
ad::Var mention_embeddings(ad::Var hidden, std::span<const std::size_t> anchors);

/// [m x d] -> [d]. Throws DataError naming `entity` when there are no
/// mentions.
ad::Var entity_pool(ad::Var mentions, PoolingKind kind, std::string_view entity = "");

/// Convenience: pools the anchor rows of `hidden` for one entity.
ad::Var pool_entity(ad::Var hidden, std::span<const std::size_t> anchors, PoolingKind kind,
                    std::string_view entity = "");

/// Row groups of `x` [r x c] averaged -> [groups x c]. Every group must be
/// non-empty.
ad::Var mean_row_groups(ad::Var x, const std::vector<std::vector<std::size_t>>& groups);

/// Attention of one entity: per head, the anchor rows of that head's
/// [l x l] attention averaged over mentions -> [heads x l].
ad::Var entity_attention(std::span<const ad::Var> attention, std::span<const std::size_t> anchors,
                         std::string_view entity = "");

/// Per head, the attention of every entity at once: [entities x l] each.
std::vector<ad::Var> entity_attention_table(std::span<const ad::Var> attention,
                                            const std::vector<std::vector<std::size_t>>& anchors);

/// Below this total overlap the context weights fall back to uniform.
inline constexpr double kMinContextMass = 1e-12;

/// Divides each row of q [P x l] by its sum. Rows whose sum is below
/// kMinContextMass become uniform over the first `valid` columns (no
/// gradient flows through such rows).
ad::Var normalize_rows(ad::Var q, std::size_t valid);

struct PairContext {
  ad::Var weights;  // a: [P x l]
  ad::Var context;  // c: [P x d]
};

/// Single pair: attention tables [heads x l] for subject and object.
/// q = sum over heads of the elementwise product, a = q / sum(q), c = H^T a.
PairContext pair_context(ad::Var hidden, ad::Var subject_attention, ad::Var object_attention, std::size_t valid);

/// Batched over pairs: per head [P x l] subject and object rows.
PairContext pair_context(ad::Var hidden, std::span<const ad::Var> subject_rows, std::span<const ad::Var> object_rows,
                         std::size_t valid);

}  // namespace atlop
