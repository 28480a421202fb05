#include "atlop/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "atlop/errors.hpp"

namespace atlop {

namespace {

// 30 x 30 syllable pairs, sorted; configs take a prefix.
const std::vector<std::string>& name_pool() {
  static const std::vector<std::string> pool = [] {
    const std::vector<std::string> heads{"Al",  "Br",  "Cor", "Dun", "El",  "Far", "Gar", "Hal", "Is",  "Jar",
                                         "Kes", "Lom", "Mar", "Nor", "Or",  "Pel", "Quar", "Row", "Sel", "Tar",
                                         "Ul",  "Var", "Wex", "Yar", "Zel", "Ash", "Bex", "Cal", "Del", "Esk"};
    const std::vector<std::string> tails{"der", "isk", "in",   "more", "wood", "row",  "net",  "den",   "ola",  "vik",
                                         "trel", "ond", "low",  "cott", "rin",  "lam",  "ry",   "an",    "wyn",  "rant",
                                         "ster", "by",  "ley",  "mer",  "ton",  "ham",  "field", "ford", "well", "stone"};
    std::set<std::string> names;
    for (const auto& h : heads)
      for (const auto& t : tails) names.insert(h + t);
    return std::vector<std::string>(names.begin(), names.end());
  }();
  return pool;
}

const std::vector<std::vector<std::string>>& distractor_pair_verbs() {
  static const std::vector<std::vector<std::string>> v{{"met"}, {"visited"}, {"saw"}, {"spoke", "with"}, {"wrote", "to"}};
  return v;
}

const std::vector<std::string>& distractor_leads() {
  static const std::vector<std::string> v{"later", "then", "once", "meanwhile"};
  return v;
}

const std::vector<std::vector<std::string>>& distractor_single() {
  static const std::vector<std::vector<std::string>> v{
      {"arrived", "early"}, {"is", "well", "known"}, {"was", "mentioned", "again"}, {"appeared", "briefly"}};
  return v;
}

const std::vector<std::vector<std::string>>& fillers() {
  static const std::vector<std::vector<std::string>> v{
      {"the", "weather", "was", "calm"}, {"nothing", "else", "happened"}, {"the", "report", "ends", "here"}};
  return v;
}

std::size_t uniform(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

template <class T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& v) {
  return v[uniform(rng, 0, v.size() - 1)];
}

struct Draft {
  std::vector<std::string> tokens;
  // (entity, start, end) of each mention in this sentence
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> mentions;
};

void append_name(Draft& s, std::size_t entity, const std::vector<std::string>& name) {
  const std::size_t start = s.tokens.size();
  s.tokens.insert(s.tokens.end(), name.begin(), name.end());
  s.mentions.emplace_back(entity, start, s.tokens.size());
}

void append(Draft& s, const std::vector<std::string>& words) { s.tokens.insert(s.tokens.end(), words.begin(), words.end()); }

}  // namespace

void SyntheticConfig::validate() const {
  if (min_entities < 2 || min_entities > max_entities) throw ConfigError("entities per document need 2 <= min <= max");
  if (min_mentions < 1 || min_mentions > max_mentions) throw ConfigError("mentions per entity need 1 <= min <= max");
  if (min_positive_pairs < 1 || min_positive_pairs > max_positive_pairs)
    throw ConfigError("positive pairs per document need 1 <= min <= max");
  if (max_positive_pairs >= min_entities * (min_entities - 1))
    throw ConfigError("too many positive pairs: every document must keep an NA pair");
  if (2 * min_positive_pairs > min_entities * max_mentions)
    throw ConfigError("min_positive_pairs needs more mentions than max_mentions allows");
  if (!(multi_label_rate >= 0.0 && multi_label_rate <= 1.0)) throw ConfigError("multi_label_rate must lie in [0, 1]");
  if (!(paired_distractor_rate >= 0.0 && paired_distractor_rate <= 1.0))
    throw ConfigError("paired_distractor_rate must lie in [0, 1]");
  if (!(mention_ratio > 0.0 && mention_ratio <= 1.0)) throw ConfigError("mention_ratio must lie in (0, 1]");
  if (max_name_words < 1) throw ConfigError("names need at least one word");
  if (name_pool_size > name_pool().size())
    throw ConfigError("name_pool_size is capped at " + std::to_string(name_pool().size()));
  if (max_name_words * max_entities > name_pool_size) throw ConfigError("max_entities exceeds the name pool");
}

RelationSchema default_synthetic_schema() {
  return RelationSchema({"born_in", "works_for", "located_in", "founded_by"});
}

std::vector<RelationTemplate> relation_templates(const std::string& relation) {
  static const std::map<std::string, std::vector<RelationTemplate>> known{
      {"born_in", {{"native", {"born", "in"}}, {"native", {"raised", "in"}}}},
      {"works_for", {{"employee", {"works", "for"}}, {"employee", {"employed", "by"}}}},
      {"located_in", {{"landmark", {"located", "within"}}, {"landmark", {"situated", "within"}}}},
      {"founded_by", {{"venture", {"founded", "through"}}, {"venture", {"started", "through"}}}},
  };
  auto it = known.find(relation);
  if (it != known.end()) return it->second;
  return {{relation, {"holds", "with"}}};
}

Corpus generate_synthetic_corpus(std::uint64_t seed, std::size_t n_docs, const RelationSchema& schema,
                                 const SyntheticConfig& config) {
  config.validate();
  if (schema.size() < 2) throw ConfigError("synthetic corpora need at least two relations");
  std::mt19937_64 rng(seed);
  std::vector<double> weights;
  for (std::size_t m = config.min_mentions; m <= config.max_mentions; ++m)
    weights.push_back(std::pow(config.mention_ratio, static_cast<double>(m - config.min_mentions)));
  std::discrete_distribution<std::size_t> mention_count(weights.begin(), weights.end());
  Corpus corpus;
  corpus.reserve(n_docs);

  for (std::size_t di = 0; di < n_docs; ++di) {
    const std::size_t n_ent = uniform(rng, config.min_entities, config.max_entities);

    // Names: 1-2 words, no word shared between entities of a document.
    std::vector<std::string> words(name_pool().begin(),
                                   name_pool().begin() + static_cast<std::ptrdiff_t>(config.name_pool_size));
    std::shuffle(words.begin(), words.end(), rng);
    std::vector<std::vector<std::string>> names(n_ent);
    std::size_t w = 0;
    for (auto& name : names) {
      const std::size_t len = uniform(rng, 1, config.max_name_words);
      for (std::size_t i = 0; i < len; ++i) name.push_back(words[w++]);
    }

    // Facts. Relations are not repeated within a document.
    std::vector<std::size_t> rel_order(schema.size());
    for (std::size_t r = 0; r < rel_order.size(); ++r) rel_order[r] = r;
    std::shuffle(rel_order.begin(), rel_order.end(), rng);
    const std::size_t n_pairs =
        std::min(uniform(rng, config.min_positive_pairs, config.max_positive_pairs), schema.size());
    std::bernoulli_distribution multi(config.multi_label_rate);
    std::set<std::pair<std::size_t, std::size_t>> used_pairs;
    std::vector<RelationLabel> labels;
    std::vector<Draft> drafts;
    std::vector<std::size_t> fact_mentions(n_ent, 0);
    std::size_t next_rel = 0;
    for (std::size_t p = 0; p < n_pairs; ++p) {
      const bool want_two = multi(rng);
      const std::size_t remaining_pairs = n_pairs - p - 1;
      std::size_t n_rel = (want_two && next_rel + 2 + remaining_pairs <= rel_order.size()) ? 2 : 1;
      // Each fact sentence costs one mention of both entities.
      std::vector<std::pair<std::size_t, std::size_t>> candidates;
      for (; n_rel > 0 && candidates.empty(); --n_rel) {
        for (std::size_t a = 0; a < n_ent; ++a)
          for (std::size_t b = 0; b < n_ent; ++b)
            if (a != b && !used_pairs.count({a, b}) && fact_mentions[a] + n_rel <= config.max_mentions &&
                fact_mentions[b] + n_rel <= config.max_mentions)
              candidates.emplace_back(a, b);
        if (!candidates.empty()) break;
      }
      if (candidates.empty()) break;
      const auto [s, o] = candidates[uniform(rng, 0, candidates.size() - 1)];
      used_pairs.insert({s, o});
      for (std::size_t k = 0; k < n_rel; ++k) {
        const std::size_t r = rel_order[next_rel++];
        Draft d;
        const RelationTemplate t = pick(rng, relation_templates(schema.name(r)));
        d.tokens.push_back(t.lead);
        append_name(d, s, names[s]);
        append(d, t.middle);
        append_name(d, o, names[o]);
        d.tokens.push_back(".");
        ++fact_mentions[s];
        ++fact_mentions[o];
        labels.push_back(RelationLabel{s, o, r, {drafts.size()}});
        drafts.push_back(std::move(d));
      }
    }

    // Remaining mentions go into distractor sentences.
    std::vector<std::size_t> slots;
    for (std::size_t e = 0; e < n_ent; ++e) {
      const std::size_t m = config.min_mentions + mention_count(rng);
      for (std::size_t i = fact_mentions[e]; i < m; ++i) slots.push_back(e);
    }
    std::shuffle(slots.begin(), slots.end(), rng);
    std::bernoulli_distribution paired(config.paired_distractor_rate);
    while (!slots.empty()) {
      Draft d;
      if (uniform(rng, 0, 1)) d.tokens.push_back(pick(rng, distractor_leads()));
      const std::size_t a = slots.back();
      slots.pop_back();
      auto partner = std::find_if(slots.rbegin(), slots.rend(), [a](std::size_t e) { return e != a; });
      if (partner != slots.rend() && paired(rng)) {
        const std::size_t b = *partner;
        slots.erase(std::next(partner).base());
        append_name(d, a, names[a]);
        append(d, pick(rng, distractor_pair_verbs()));
        append_name(d, b, names[b]);
      } else {
        append_name(d, a, names[a]);
        append(d, pick(rng, distractor_single()));
      }
      d.tokens.push_back(".");
      drafts.push_back(std::move(d));
    }
    const std::size_t n_fill = uniform(rng, 0, config.max_filler_sentences);
    for (std::size_t i = 0; i < n_fill; ++i) {
      Draft d;
      append(d, pick(rng, fillers()));
      d.tokens.push_back(".");
      drafts.push_back(std::move(d));
    }

    // Shuffle sentence order and remap evidence.
    std::vector<std::size_t> order(drafts.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::size_t> position(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = i;

    Document doc;
    doc.doc_id = config.doc_prefix + "-" + std::to_string(seed) + "-" + std::to_string(di);
    doc.entities.resize(n_ent);
    for (std::size_t e = 0; e < n_ent; ++e) {
      doc.entities[e].id = e;
      doc.entities[e].type = "ENT";
    }
    for (std::size_t i = 0; i < order.size(); ++i) {
      const Draft& d = drafts[order[i]];
      doc.sentences.push_back(d.tokens);
      for (const auto& [e, start, end] : d.mentions) doc.entities[e].mentions.push_back(Mention{i, start, end});
    }
    for (RelationLabel& l : labels)
      for (auto& ev : l.evidence) ev = position[ev];
    std::sort(labels.begin(), labels.end(), [](const RelationLabel& a, const RelationLabel& b) {
      return std::tie(a.subject, a.object, a.relation) < std::tie(b.subject, b.object, b.relation);
    });
    doc.labels = std::move(labels);
    validate_document(doc, schema);
    corpus.push_back(std::move(doc));
  }
  return corpus;
}

Document toy_document() {
  Document d;
  d.doc_id = "toy";
  d.sentences = {{"native", "Alder", "born", "in", "Brisk", "."}, {"Alder", "met", "Brisk", "."}};
  d.entities = {Entity{0, "ENT", {Mention{0, 1, 2}, Mention{1, 0, 1}}}, Entity{1, "ENT", {Mention{0, 4, 5}, Mention{1, 2, 3}}}};
  d.labels = {RelationLabel{0, 1, 0, {0}}};
  return d;
}

bool verify_synthetic_document(const Document& doc, const RelationSchema& schema) {
  for (const RelationLabel& l : doc.labels) {
    bool found = false;
    for (std::size_t ev : l.evidence) {
      if (ev >= doc.sentences.size()) return false;
      const auto& sent = doc.sentences[ev];
      for (const Mention& ms : doc.entities[l.subject].mentions) {
        if (ms.sentence != ev || ms.start != 1) continue;
        for (const Mention& mo : doc.entities[l.object].mentions) {
          if (mo.sentence != ev || mo.end + 1 != sent.size() || sent.back() != ".") continue;
          const std::vector<std::string> middle(sent.begin() + static_cast<std::ptrdiff_t>(ms.end),
                                                sent.begin() + static_cast<std::ptrdiff_t>(mo.start));
          for (const auto& t : relation_templates(schema.name(l.relation)))
            if (t.lead == sent[0] && t.middle == middle) found = true;
        }
      }
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace atlop
