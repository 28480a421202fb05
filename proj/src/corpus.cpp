#include "atlop/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <tuple>
#include <fstream>
#include <set>
#include <sstream>

#include "atlop/errors.hpp"
#include "json.hpp"

namespace atlop {

using nlohmann::json;

// ---- Document ---------------------------------------------------------------------

std::size_t Document::token_count() const {
  std::size_t n = 0;
  for (const auto& s : sentences) n += s.size();
  return n;
}

std::size_t Document::sentence_offset(std::size_t sentence) const {
  std::size_t off = 0;
  for (std::size_t i = 0; i < sentence && i < sentences.size(); ++i) off += sentences[i].size();
  return off;
}

std::vector<std::string> Document::flat_tokens() const {
  std::vector<std::string> out;
  out.reserve(token_count());
  for (const auto& s : sentences) out.insert(out.end(), s.begin(), s.end());
  return out;
}

std::string Document::surface(const Mention& m) const {
  std::string out;
  const auto& sent = sentences.at(m.sentence);
  for (std::size_t i = m.start; i < m.end && i < sent.size(); ++i) {
    if (!out.empty()) out += ' ';
    out += sent[i];
  }
  return out;
}

// ---- RelationSchema ---------------------------------------------------------------

RelationSchema::RelationSchema(std::vector<std::string> names) : names_(std::move(names)) {
  if (names_.empty()) throw ConfigError("relation schema needs at least one relation");
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i].empty()) throw ConfigError("relation names must be non-empty");
    if (!index_.emplace(names_[i], i).second) throw ConfigError("duplicate relation name '" + names_[i] + "'");
  }
}

std::optional<std::size_t> RelationSchema::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t RelationSchema::id(std::string_view name) const {
  if (auto id = find(name)) return *id;
  throw DataError("unknown relation '" + std::string(name) + "'");
}

// ---- validation -------------------------------------------------------------------

void validate_document(const Document& doc, const RelationSchema& schema) {
  auto fail = [&doc](const std::string& what) { throw DataError("document '" + doc.doc_id + "': " + what); };
  if (doc.doc_id.empty()) throw DataError("document with empty doc_id");
  for (std::size_t e = 0; e < doc.entities.size(); ++e) {
    const Entity& ent = doc.entities[e];
    if (ent.id != e) fail("entity at position " + std::to_string(e) + " has id " + std::to_string(ent.id));
    if (ent.mentions.empty()) fail("entity " + std::to_string(e) + " has no mentions");
    for (const Mention& m : ent.mentions) {
      if (m.sentence >= doc.sentences.size())
        fail("entity " + std::to_string(e) + " mention refers to missing sentence " + std::to_string(m.sentence));
      if (m.start >= m.end) fail("entity " + std::to_string(e) + " mention has start >= end");
      if (m.end > doc.sentences[m.sentence].size())
        fail("entity " + std::to_string(e) + " mention [" + std::to_string(m.start) + ", " + std::to_string(m.end) +
             ") exceeds sentence " + std::to_string(m.sentence));
    }
  }
  std::set<std::tuple<std::size_t, std::size_t, std::size_t>> seen;
  for (const RelationLabel& l : doc.labels) {
    if (l.subject >= doc.entities.size() || l.object >= doc.entities.size()) fail("label refers to missing entity");
    if (l.subject == l.object) fail("label has subject == object");
    if (l.relation >= schema.size()) fail("label relation id out of range");
    for (std::size_t s : l.evidence)
      if (s >= doc.sentences.size()) fail("label evidence refers to missing sentence " + std::to_string(s));
    if (!seen.emplace(l.subject, l.object, l.relation).second) fail("duplicate label");
  }
}

// ---- JSON --------------------------------------------------------------------------

namespace {

class FieldReader {
 public:
  FieldReader(std::size_t line, std::string doc_id) : line_(line), doc_id_(std::move(doc_id)) {}

  void set_doc_id(std::string id) { doc_id_ = std::move(id); }

  [[noreturn]] void fail(const std::string& path, const std::string& what) const {
    std::ostringstream os;
    os << "line " << line_;
    if (!doc_id_.empty()) os << " (doc_id '" << doc_id_ << "')";
    os << ": " << path << ": " << what;
    throw DataError(os.str());
  }

  const json& field(const json& obj, const std::string& key, const std::string& path) const {
    if (!obj.is_object()) fail(path, "expected an object");
    auto it = obj.find(key);
    if (it == obj.end()) fail(path + "/" + key, "missing field");
    return *it;
  }

  std::size_t index(const json& v, const std::string& path) const {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      fail(path, "expected a non-negative integer");
    return v.get<std::size_t>();
  }

  std::string string(const json& v, const std::string& path) const {
    if (!v.is_string()) fail(path, "expected a string");
    return v.get<std::string>();
  }

  const json& array(const json& v, const std::string& path) const {
    if (!v.is_array()) fail(path, "expected an array");
    return v;
  }

 private:
  std::size_t line_;
  std::string doc_id_;
};

Document document_from_json(const json& j, const RelationSchema& schema, std::size_t line) {
  FieldReader r(line, "");
  Document doc;
  doc.doc_id = r.string(r.field(j, "doc_id", ""), "/doc_id");
  r.set_doc_id(doc.doc_id);

  const json& sents = r.array(r.field(j, "sentences", ""), "/sentences");
  for (std::size_t s = 0; s < sents.size(); ++s) {
    const std::string sp = "/sentences/" + std::to_string(s);
    std::vector<std::string> toks;
    for (std::size_t t = 0; t < r.array(sents[s], sp).size(); ++t)
      toks.push_back(r.string(sents[s][t], sp + "/" + std::to_string(t)));
    doc.sentences.push_back(std::move(toks));
  }

  const json& ents = r.array(r.field(j, "entities", ""), "/entities");
  for (std::size_t e = 0; e < ents.size(); ++e) {
    const std::string ep = "/entities/" + std::to_string(e);
    Entity ent;
    ent.id = r.index(r.field(ents[e], "id", ep), ep + "/id");
    if (auto it = ents[e].find("type"); it != ents[e].end()) ent.type = r.string(*it, ep + "/type");
    const json& ms = r.array(r.field(ents[e], "mentions", ep), ep + "/mentions");
    for (std::size_t m = 0; m < ms.size(); ++m) {
      const std::string mp = ep + "/mentions/" + std::to_string(m);
      Mention men;
      men.sentence = r.index(r.field(ms[m], "sentence", mp), mp + "/sentence");
      men.start = r.index(r.field(ms[m], "start", mp), mp + "/start");
      men.end = r.index(r.field(ms[m], "end", mp), mp + "/end");
      ent.mentions.push_back(men);
    }
    doc.entities.push_back(std::move(ent));
  }

  const json& labels = r.array(r.field(j, "labels", ""), "/labels");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const std::string lp = "/labels/" + std::to_string(i);
    RelationLabel l;
    l.subject = r.index(r.field(labels[i], "subject", lp), lp + "/subject");
    l.object = r.index(r.field(labels[i], "object", lp), lp + "/object");
    const std::string rel = r.string(r.field(labels[i], "relation", lp), lp + "/relation");
    auto id = schema.find(rel);
    if (!id) r.fail(lp + "/relation", "relation '" + rel + "' is not in the schema");
    l.relation = *id;
    if (auto it = labels[i].find("evidence"); it != labels[i].end()) {
      const json& ev = r.array(*it, lp + "/evidence");
      for (std::size_t k = 0; k < ev.size(); ++k) l.evidence.push_back(r.index(ev[k], lp + "/evidence/" + std::to_string(k)));
    }
    doc.labels.push_back(std::move(l));
  }
  validate_document(doc, schema);
  return doc;
}

json document_to_json(const Document& doc, const RelationSchema& schema) {
  json j;
  j["doc_id"] = doc.doc_id;
  j["sentences"] = doc.sentences;
  json ents = json::array();
  for (const Entity& e : doc.entities) {
    json ms = json::array();
    for (const Mention& m : e.mentions) ms.push_back({{"sentence", m.sentence}, {"start", m.start}, {"end", m.end}});
    ents.push_back({{"id", e.id}, {"type", e.type}, {"mentions", std::move(ms)}});
  }
  j["entities"] = std::move(ents);
  json labels = json::array();
  for (const RelationLabel& l : doc.labels)
    labels.push_back({{"subject", l.subject},
                      {"object", l.object},
                      {"relation", schema.name(l.relation)},
                      {"evidence", l.evidence}});
  j["labels"] = std::move(labels);
  return j;
}

bool blank(const std::string& s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

Corpus parse_corpus(std::istream& in, const RelationSchema& schema) {
  Corpus corpus;
  std::set<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("line " + std::to_string(lineno) + ": malformed JSON: " + e.what());
    }
    Document doc = document_from_json(j, schema, lineno);
    if (!ids.insert(doc.doc_id).second)
      throw DataError("line " + std::to_string(lineno) + ": duplicate doc_id '" + doc.doc_id + "'");
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const RelationSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return parse_corpus(in, schema);
}

void write_corpus(std::ostream& out, const Corpus& corpus, const RelationSchema& schema) {
  for (const Document& d : corpus) out << document_to_json(d, schema).dump() << '\n';
}

void save_corpus(const std::filesystem::path& path, const Corpus& corpus, const RelationSchema& schema) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file " + path.string());
  write_corpus(out, corpus, schema);
}

RelationSchema scan_schema(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  std::set<std::string> names;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      const json j = json::parse(line);
      for (const auto& l : j.at("labels")) names.insert(l.at("relation").get<std::string>());
    } catch (const json::exception& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (names.empty()) throw DataError("corpus " + path.string() + " has no relation labels to derive a schema from");
  return RelationSchema(std::vector<std::string>(names.begin(), names.end()));
}

void write_predictions(std::ostream& out, const std::vector<PredictionRecord>& preds, const RelationSchema& schema) {
  for (const PredictionRecord& p : preds) {
    json rels = json::array();
    for (std::size_t r : p.relations) rels.push_back(schema.name(r));
    json j{{"doc_id", p.doc_id}, {"subject_idx", p.subject}, {"object_idx", p.object}, {"relations", std::move(rels)}};
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(std::istream& in, const RelationSchema& schema) {
  std::vector<PredictionRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    try {
      const json j = json::parse(line);
      PredictionRecord p;
      p.doc_id = j.at("doc_id").get<std::string>();
      p.subject = j.at("subject_idx").get<std::size_t>();
      p.object = j.at("object_idx").get<std::size_t>();
      for (const auto& r : j.at("relations")) p.relations.push_back(schema.id(r.get<std::string>()));
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw DataError("predictions line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace atlop
