#include "atlop/metrics.hpp"

#include <map>
#include <unordered_map>

#include "atlop/errors.hpp"

namespace atlop {

double MicroCounts::precision() const noexcept {
  return tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double MicroCounts::recall() const noexcept {
  return tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

double MicroCounts::f1() const noexcept {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp) / static_cast<double>(denom);
}

MicroCounts& MicroCounts::operator+=(const MicroCounts& o) noexcept {
  tp += o.tp;
  fp += o.fp;
  fn += o.fn;
  return *this;
}

F1Report make_report(const MicroCounts& c) { return F1Report{c, c.precision(), c.recall(), c.f1()}; }

namespace {

using Tuple = std::tuple<std::size_t, std::size_t, std::size_t>;  // subject, object, relation

struct Indexed {
  std::unordered_map<std::string, std::size_t> doc_index;
  std::vector<std::set<Tuple>> gold;
  std::vector<std::set<Tuple>> predicted;
};

Indexed index_tuples(const std::vector<PredictionRecord>& predictions, const Corpus& gold) {
  Indexed ix;
  ix.gold.resize(gold.size());
  ix.predicted.resize(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) {
    ix.doc_index.emplace(gold[i].doc_id, i);
    for (const RelationLabel& l : gold[i].labels) ix.gold[i].emplace(l.subject, l.object, l.relation);
  }
  for (const PredictionRecord& p : predictions) {
    auto it = ix.doc_index.find(p.doc_id);
    if (it == ix.doc_index.end()) throw DataError("prediction for unknown doc_id '" + p.doc_id + "'");
    const Document& d = gold[it->second];
    if (p.subject >= d.entities.size() || p.object >= d.entities.size())
      throw DataError("prediction for doc '" + p.doc_id + "' names a missing entity");
    for (std::size_t r : p.relations) ix.predicted[it->second].emplace(p.subject, p.object, r);
  }
  return ix;
}

MicroCounts count(const std::set<Tuple>& gold, const std::set<Tuple>& pred) {
  MicroCounts c;
  for (const Tuple& t : pred) (gold.count(t) ? c.tp : c.fp)++;
  for (const Tuple& t : gold)
    if (!pred.count(t)) ++c.fn;
  return c;
}

}  // namespace

F1Report evaluate_f1(const std::vector<PredictionRecord>& predictions, const Corpus& gold) {
  const Indexed ix = index_tuples(predictions, gold);
  MicroCounts total;
  for (std::size_t i = 0; i < gold.size(); ++i) total += count(ix.gold[i], ix.predicted[i]);
  return make_report(total);
}

FactSet extract_facts(const Corpus& corpus, const RelationSchema& schema) {
  FactSet facts;
  for (const Document& d : corpus)
    for (const RelationLabel& l : d.labels)
      facts.emplace(d.surface(d.entities.at(l.subject).mentions.at(0)), schema.name(l.relation),
                    d.surface(d.entities.at(l.object).mentions.at(0)));
  return facts;
}

IgnF1Report evaluate_ign_f1(const std::vector<PredictionRecord>& predictions, const Corpus& gold,
                            const RelationSchema& schema, const FactSet& train_facts) {
  const Indexed ix = index_tuples(predictions, gold);
  IgnF1Report out;
  MicroCounts total;
  std::size_t gold_left = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const Document& d = gold[i];
    auto shared = [&](const Tuple& t) {
      const auto& [s, o, r] = t;
      return train_facts.count(Fact{d.surface(d.entities[s].mentions.at(0)), schema.name(r),
                                    d.surface(d.entities[o].mentions.at(0))}) > 0;
    };
    std::set<Tuple> g, p;
    for (const Tuple& t : ix.gold[i]) (shared(t) ? (void)++out.removed_gold : (void)g.insert(t));
    for (const Tuple& t : ix.predicted[i]) (shared(t) ? (void)++out.removed_predicted : (void)p.insert(t));
    gold_left += g.size();
    total += count(g, p);
  }
  out.report = make_report(total);
  if (gold_left == 0) {
    out.degenerate = true;
    out.report.f1 = 0.0;
  }
  return out;
}

std::vector<BucketRow> bucket_by_entity_count(const Corpus& corpus, const std::vector<PredictionRecord>& predictions,
                                              std::size_t width) {
  if (width == 0) throw ConfigError("bucket width must be positive");
  const Indexed ix = index_tuples(predictions, corpus);
  std::map<std::size_t, BucketRow> rows;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::size_t n = corpus[i].entities.size();
    const std::size_t b = n == 0 ? 0 : (n - 1) / width;
    BucketRow& row = rows[b];
    row.min_entities = b * width + 1;
    row.max_entities = (b + 1) * width;
    row.documents += 1;
    row.report.counts += count(ix.gold[i], ix.predicted[i]);
  }
  std::vector<BucketRow> out;
  for (auto& [_, row] : rows) {
    row.report = make_report(row.report.counts);
    out.push_back(row);
  }
  return out;
}

}  // namespace atlop
