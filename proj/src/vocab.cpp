#include "atlop/vocab.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "atlop/errors.hpp"

namespace atlop {

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  tokens_.emplace_back(kPad);
  tokens_.emplace_back(kUnk);
  tokens_.emplace_back(kMarker);
  std::sort(tokens_.begin(), tokens_.end());
  tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty() || tokens_[i].find_first_of(" \t\r\n") != std::string::npos)
      throw DataError("vocabulary token must be non-empty and free of whitespace: '" + tokens_[i] + "'");
    index_.emplace(tokens_[i], i);
  }
  pad_ = index_.at(std::string(kPad));
  unk_ = index_.at(std::string(kUnk));
  marker_ = index_.at(std::string(kMarker));
}

Vocabulary Vocabulary::from_corpus(const Corpus& corpus) {
  std::vector<std::string> toks;
  for (const Document& d : corpus)
    for (const auto& s : d.sentences) toks.insert(toks.end(), s.begin(), s.end());
  return Vocabulary(std::move(toks));
}

std::size_t Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? unk_ : it->second;
}

std::vector<std::size_t> Vocabulary::encode(std::span<const std::string> tokens) const {
  std::vector<std::size_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(id(t));
  return ids;
}

void Vocabulary::save(std::ostream& out) const {
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(std::istream& in) {
  std::vector<std::string> toks;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    toks.push_back(line);
  }
  if (!std::is_sorted(toks.begin(), toks.end()) || std::adjacent_find(toks.begin(), toks.end()) != toks.end())
    throw DataError("vocabulary file must be sorted and free of duplicates");
  for (auto r : {kPad, kUnk, kMarker})
    if (!std::binary_search(toks.begin(), toks.end(), std::string(r)))
      throw DataError("vocabulary file is missing reserved token '" + std::string(r) + "'");
  Vocabulary v(std::move(toks));
  return v;
}

}  // namespace atlop
