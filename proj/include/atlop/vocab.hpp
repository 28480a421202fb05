#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atlop/corpus.hpp"

namespace atlop {

/// Whitespace-token vocabulary. Serialized as the sorted token list, one
/// token per line, id = line number; the reserved tokens are part of that
/// list.
class Vocabulary {
 public:
  static constexpr std::string_view kPad = "[PAD]";
  static constexpr std::string_view kUnk = "[UNK]";
  static constexpr std::string_view kMarker = "*";

  Vocabulary() : Vocabulary(std::vector<std::string>{}) {}
  /// Adds the reserved tokens, then sorts and deduplicates.
  explicit Vocabulary(std::vector<std::string> tokens);

  static Vocabulary from_corpus(const Corpus& corpus);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  const std::string& token(std::size_t id) const { return tokens_.at(id); }
  /// Unknown tokens map to the UNK id.
  std::size_t id(std::string_view token) const;
  bool contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

  std::size_t pad_id() const noexcept { return pad_; }
  std::size_t unk_id() const noexcept { return unk_; }
  std::size_t marker_id() const noexcept { return marker_; }

  std::vector<std::size_t> encode(std::span<const std::string> tokens) const;

  void save(std::ostream& out) const;
  /// Expects a sorted, duplicate-free list containing the reserved tokens.
  static Vocabulary load(std::istream& in);

  bool operator==(const Vocabulary& o) const { return tokens_ == o.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t pad_ = 0, unk_ = 0, marker_ = 0;
};

}  // namespace atlop
