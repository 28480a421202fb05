#pragma once

// Entity-marker insertion and a small transformer encoder producing
// contextual embeddings H [l x d] and last-layer attention A [heads x l x l].

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "atlop/autodiff.hpp"
#include "atlop/corpus.hpp"
#include "atlop/vocab.hpp"

namespace atlop {

/// A document flattened to one token sequence, optionally with "*" inserted
/// around every mention.
struct MarkedDocument {
  std::vector<std::string> tokens;
  /// Per entity, per mention: the anchor position (the opening "*", or the
  /// first mention token when markers are disabled).
  std::vector<std::vector<std::size_t>> anchors;
  /// Per entity, per mention: [start, end) of the mention tokens after
  /// remapping.
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> spans;
};

/// Mentions of one entity must be pairwise disjoint; mentions of different
/// entities must be disjoint or identical (identical spans share markers).
/// Throws DataError naming the document otherwise.
MarkedDocument insert_markers(const Document& doc, bool use_markers = true);

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t model_dim = 64;
  std::size_t ffn_dim = 128;
  std::size_t max_len = 256;
  double dropout = 0.1;

  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

struct EncodeOptions {
  bool train = false;
  /// Required when `train` is set and dropout is non-zero.
  std::mt19937_64* rng = nullptr;
  /// Keys holding `pad_id` receive -inf before the attention softmax.
  bool mask_padding = true;
  std::size_t pad_id = 0;
  /// Cut sequences longer than max_len instead of failing.
  bool truncate = false;
};

struct EncoderOutput {
  ad::Var hidden;                  // [l x d]
  std::vector<ad::Var> attention;  // per head [l x l], post-softmax, pre-dropout
  std::size_t length = 0;
  bool truncated = false;

  /// Copies the attention values into one [heads x l x l] tensor.
  Tensor attention_tensor() const;
};

class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, std::size_t vocab_size, std::uint64_t seed);

  const EncoderConfig& config() const noexcept { return config_; }
  std::size_t vocab_size() const noexcept { return vocab_size_; }

  /// Throws DataError when the input is longer than max_len unless
  /// `options.truncate` is set.
  EncoderOutput encode(ad::Graph& graph, std::span<const std::size_t> ids, const EncodeOptions& options) const;

  std::vector<ad::Parameter*> parameters();
  std::vector<const ad::Parameter*> parameters() const;

 private:
  struct Layer {
    ad::Parameter wq, bq, wk, bk, wv, bv, wo, bo;
    ad::Parameter ln1_gamma, ln1_beta;
    ad::Parameter w1, b1, w2, b2;
    ad::Parameter ln2_gamma, ln2_beta;
  };

  EncoderConfig config_;
  std::size_t vocab_size_ = 0;
  // Parameters are mutated through the Graph only during backward flushes.
  mutable ad::Parameter token_embedding_, position_embedding_, emb_gamma_, emb_beta_, final_gamma_, final_beta_;
  mutable std::vector<Layer> layers_;
};

}  // namespace atlop
