#pragma once

// Document data model and the JSON Lines corpus format.
//
// One document per line:
//   {"doc_id": "...",
//    "sentences": [["tok", ...], ...],
//    "entities": [{"id": 0, "type": "PER",
//                  "mentions": [{"sentence": 0, "start": 3, "end": 5}]}],
//    "labels": [{"subject": 0, "object": 1, "relation": "born_in",
//                "evidence": [0]}]}
// Mention `end` is exclusive; entity `id` equals its position in the list.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace atlop {

struct Mention {
  std::size_t sentence = 0;
  std::size_t start = 0;
  std::size_t end = 0;

  bool operator==(const Mention&) const = default;
};

struct Entity {
  std::size_t id = 0;
  std::string type;
  std::vector<Mention> mentions;

  bool operator==(const Entity&) const = default;
};

struct RelationLabel {
  std::size_t subject = 0;
  std::size_t object = 0;
  std::size_t relation = 0;
  std::vector<std::size_t> evidence;

  bool operator==(const RelationLabel&) const = default;
};

struct Document {
  std::string doc_id;
  std::vector<std::vector<std::string>> sentences;
  std::vector<Entity> entities;
  std::vector<RelationLabel> labels;

  std::size_t token_count() const;
  /// Offset of the first token of `sentence` in the flattened token list.
  std::size_t sentence_offset(std::size_t sentence) const;
  std::vector<std::string> flat_tokens() const;
  /// Tokens of one mention joined by single spaces.
  std::string surface(const Mention& m) const;

  bool operator==(const Document&) const = default;
};

/// Ordered relation names R. NA is never a member: it is the empty set.
class RelationSchema {
 public:
  RelationSchema() = default;
  explicit RelationSchema(std::vector<std::string> names);

  std::size_t size() const noexcept { return names_.size(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::string& name(std::size_t id) const { return names_.at(id); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t id(std::string_view name) const;

  bool operator==(const RelationSchema& o) const { return names_ == o.names_; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct PredictionRecord {
  std::string doc_id;
  std::size_t subject = 0;
  std::size_t object = 0;
  std::vector<std::size_t> relations;  // empty = NA

  bool operator==(const PredictionRecord&) const = default;
};

using Corpus = std::vector<Document>;

/// Throws DataError naming the document when an invariant is violated.
void validate_document(const Document& doc, const RelationSchema& schema);

Corpus parse_corpus(std::istream& in, const RelationSchema& schema);
Corpus load_corpus(const std::filesystem::path& path, const RelationSchema& schema);
void write_corpus(std::ostream& out, const Corpus& corpus, const RelationSchema& schema);
void save_corpus(const std::filesystem::path& path, const Corpus& corpus, const RelationSchema& schema);

/// Sorted union of relation names used in a corpus file, without validation.
RelationSchema scan_schema(const std::filesystem::path& path);

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& preds, const RelationSchema& schema);
std::vector<PredictionRecord> read_predictions(std::istream& in, const RelationSchema& schema);

}  // namespace atlop
