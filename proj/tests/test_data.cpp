#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "atlop/corpus.hpp"
#include "atlop/errors.hpp"
#include "atlop/metrics.hpp"
#include "atlop/synthetic.hpp"

using namespace atlop;

namespace {

const std::filesystem::path kFixtures = ATLOP_FIXTURES;

// One sentence; entity i is the single token names[i].
Document one_token_entities(std::string id, std::vector<std::string> names) {
  Document d;
  d.doc_id = std::move(id);
  d.sentences.push_back(names);
  d.sentences.back().push_back(".");
  for (std::size_t i = 0; i < names.size(); ++i) d.entities.push_back({i, "ENT", {{0, i, i + 1}}});
  return d;
}

std::string write_to_string(const Corpus& c, const RelationSchema& s) {
  std::ostringstream os;
  write_corpus(os, c, s);
  return os.str();
}

Corpus parse_string(const std::string& text, const RelationSchema& s) {
  std::istringstream is(text);
  return parse_corpus(is, s);
}

std::string error_of(const std::string& text, const RelationSchema& s) {
  try {
    parse_string(text, s);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

// Four relations r0..r3 over entities A B C D.
const RelationSchema& toy_schema() {
  static const RelationSchema s({"r0", "r1", "r2", "r3"});
  return s;
}

Document counting_toy() {
  Document d = one_token_entities("toy", {"A", "B", "C", "D"});
  d.labels = {{0, 1, 0, {}}, {0, 2, 1, {}}, {1, 2, 0, {}}, {2, 3, 2, {}}, {3, 0, 3, {}}};
  return d;
}

}  // namespace

TEST(Corpus, EmptyFileIsEmptyCorpus) {
  EXPECT_TRUE(parse_string("", default_synthetic_schema()).empty());
  EXPECT_TRUE(parse_string("\n  \n", default_synthetic_schema()).empty());
}

TEST(Corpus, FixtureParsesToExpectedStructure) {
  const RelationSchema schema = default_synthetic_schema();
  const Corpus c = load_corpus(kFixtures / "two_docs.jsonl", schema);
  ASSERT_EQ(c.size(), 2u);

  Document a;
  a.doc_id = "fx-1";
  a.sentences = {{"Ada", "Vale", "born", "in", "Kerr", "."}, {"Ada", "Vale", "met", "Tom", "."}};
  a.entities = {{0, "PER", {{0, 0, 2}, {1, 0, 2}}}, {1, "LOC", {{0, 4, 5}}}, {2, "PER", {{1, 3, 4}}}};
  a.labels = {{0, 1, schema.id("born_in"), {0}}};
  EXPECT_EQ(c[0], a);

  Document b;
  b.doc_id = "fx-2";
  b.sentences = {{"Orin", "works", "for", "Delta", "Corp", "."}};
  b.entities = {{0, "PER", {{0, 0, 1}}}, {1, "ORG", {{0, 3, 5}}}};
  b.labels = {{0, 1, schema.id("works_for"), {0}}, {1, 0, schema.id("founded_by"), {}}};
  EXPECT_EQ(c[1], b);

  EXPECT_EQ(c[0].surface(c[0].entities[0].mentions[1]), "Ada Vale");
  EXPECT_EQ(c[1].surface(c[1].entities[1].mentions[0]), "Delta Corp");
  EXPECT_EQ(c[0].sentence_offset(1), 6u);
  EXPECT_EQ(c[0].token_count(), 11u);
}

TEST(Corpus, RoundTripIsBitIdentical) {
  const RelationSchema schema = default_synthetic_schema();
  const Corpus c = load_corpus(kFixtures / "two_docs.jsonl", schema);
  const std::string once = write_to_string(c, schema);
  const Corpus again = parse_string(once, schema);
  EXPECT_EQ(again, c);
  EXPECT_EQ(write_to_string(again, schema), once);

  const auto tmp = std::filesystem::temp_directory_path() / "atlop_roundtrip.jsonl";
  save_corpus(tmp, c, schema);
  EXPECT_EQ(load_corpus(tmp, schema), c);
  std::filesystem::remove(tmp);
}

TEST(Corpus, ScanSchemaCollectsRelationNames) {
  const RelationSchema s = scan_schema(kFixtures / "two_docs.jsonl");
  EXPECT_EQ(s.names(), (std::vector<std::string>{"born_in", "founded_by", "works_for"}));
}

TEST(Corpus, MalformedRecordNamesDocAndFieldPath) {
  const RelationSchema schema = default_synthetic_schema();
  const std::string missing_start =
      R"({"doc_id": "bad", "sentences": [["a", "b"]], "entities": [{"id": 0, "mentions": [{"sentence": 0, "start": 0, "end": 1}]}, {"id": 1, "mentions": [{"sentence": 0, "end": 2}]}], "labels": []})";
  const std::string msg = error_of(missing_start, schema);
  EXPECT_NE(msg.find("bad"), std::string::npos) << msg;
  EXPECT_NE(msg.find("/entities/1/mentions/0/start"), std::string::npos) << msg;

  const std::string wrong_type =
      R"({"doc_id": "typed", "sentences": [["a", 3]], "entities": [], "labels": []})";
  EXPECT_NE(error_of(wrong_type, schema).find("/sentences/0/1"), std::string::npos);

  const std::string unknown_rel =
      R"({"doc_id": "rel", "sentences": [["a", "b"]], "entities": [{"id": 0, "mentions": [{"sentence": 0, "start": 0, "end": 1}]}, {"id": 1, "mentions": [{"sentence": 0, "start": 1, "end": 2}]}], "labels": [{"subject": 0, "object": 1, "relation": "married_to"}]})";
  const std::string rel_msg = error_of(unknown_rel, schema);
  EXPECT_NE(rel_msg.find("/labels/0/relation"), std::string::npos) << rel_msg;
  EXPECT_NE(rel_msg.find("married_to"), std::string::npos);

  EXPECT_NE(error_of("{not json", schema).find("line 1"), std::string::npos);
}

TEST(Corpus, InvariantViolationsAreDataErrors) {
  const RelationSchema schema = default_synthetic_schema();
  auto expect_error = [&](const std::string& text, const std::string& fragment) {
    const std::string msg = error_of(text, schema);
    EXPECT_NE(msg.find(fragment), std::string::npos) << msg;
  };
  expect_error(
      R"({"doc_id": "span", "sentences": [["a", "b"]], "entities": [{"id": 0, "mentions": [{"sentence": 0, "start": 1, "end": 3}]}], "labels": []})",
      "document 'span'");
  expect_error(
      R"({"doc_id": "self", "sentences": [["a", "b"]], "entities": [{"id": 0, "mentions": [{"sentence": 0, "start": 0, "end": 1}]}], "labels": [{"subject": 0, "object": 0, "relation": "born_in"}]})",
      "subject == object");
  expect_error(
      R"({"doc_id": "empty", "sentences": [["a"]], "entities": [{"id": 0, "mentions": []}], "labels": []})",
      "no mentions");
  const std::string dup =
      R"({"doc_id": "d", "sentences": [["a"]], "entities": [{"id": 0, "mentions": [{"sentence": 0, "start": 0, "end": 1}]}], "labels": []})";
  expect_error(dup + "\n" + dup, "duplicate doc_id");
  EXPECT_THROW(load_corpus(kFixtures / "does_not_exist.jsonl", schema), DataError);
}

TEST(Predictions, RoundTrip) {
  const RelationSchema& s = toy_schema();
  const std::vector<PredictionRecord> preds{{"toy", 0, 1, {0, 2}}, {"toy", 1, 0, {}}};
  std::ostringstream os;
  write_predictions(os, preds, s);
  std::istringstream is(os.str());
  EXPECT_EQ(read_predictions(is, s), preds);
}

TEST(Synthetic, DeterministicGivenSeed) {
  const RelationSchema schema = default_synthetic_schema();
  const Corpus a = generate_synthetic_corpus(5, 30, schema);
  const Corpus b = generate_synthetic_corpus(5, 30, schema);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, generate_synthetic_corpus(6, 30, schema));
}

TEST(Synthetic, DocumentsRespectConfigAndSelfCheck) {
  const RelationSchema schema = default_synthetic_schema();
  const SyntheticConfig cfg;
  const Corpus c = generate_synthetic_corpus(7, 300, schema, cfg);
  std::set<std::string> ids;
  for (const Document& d : c) {
    EXPECT_TRUE(ids.insert(d.doc_id).second);
    EXPECT_NO_THROW(validate_document(d, schema));
    EXPECT_TRUE(verify_synthetic_document(d, schema)) << d.doc_id;
    EXPECT_GE(d.entities.size(), cfg.min_entities);
    EXPECT_LE(d.entities.size(), cfg.max_entities);
    for (const Entity& e : d.entities) {
      EXPECT_GE(e.mentions.size(), cfg.min_mentions);
      EXPECT_LE(e.mentions.size(), cfg.max_mentions);
    }
    std::set<std::pair<std::size_t, std::size_t>> positive;
    for (const RelationLabel& l : d.labels) positive.emplace(l.subject, l.object);
    EXPECT_GE(positive.size(), cfg.min_positive_pairs);
    EXPECT_LE(positive.size(), cfg.max_positive_pairs);
    const std::size_t n = d.entities.size();
    EXPECT_LT(positive.size(), n * (n - 1)) << "no NA pair in " << d.doc_id;
  }
}

TEST(Synthetic, MultiLabelRateWithinTwoPoints) {
  const RelationSchema schema = default_synthetic_schema();
  const SyntheticConfig cfg;
  const Corpus c = generate_synthetic_corpus(8, 1000, schema, cfg);
  std::size_t pairs = 0, multi = 0;
  for (const Document& d : c) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> count;
    for (const RelationLabel& l : d.labels) ++count[{l.subject, l.object}];
    for (const auto& [_, k] : count) {
      ++pairs;
      multi += k > 1;
    }
  }
  const double rate = static_cast<double>(multi) / static_cast<double>(pairs);
  EXPECT_NEAR(rate, cfg.multi_label_rate, 0.02) << multi << " / " << pairs;
}

TEST(Synthetic, MentionCountsAndNamePool) {
  const RelationSchema schema = default_synthetic_schema();
  auto stats = [&](const SyntheticConfig& cfg) {
    std::map<std::size_t, std::size_t> hist;
    std::set<std::string> words;
    for (const Document& d : generate_synthetic_corpus(10, 400, schema, cfg))
      for (const Entity& e : d.entities) {
        ++hist[e.mentions.size()];
        const Mention& m = e.mentions[0];
        for (std::size_t i = m.start; i < m.end; ++i) words.insert(d.sentences[m.sentence][i]);
      }
    double total = 0, n = 0;
    for (const auto& [k, c] : hist) total += static_cast<double>(k * c), n += static_cast<double>(c);
    return std::tuple{hist, total / n, words.size()};
  };
  SyntheticConfig cfg;
  const auto [skewed, skewed_mean, pool] = stats(cfg);
  EXPECT_EQ(skewed.size(), 3u);
  EXPECT_GT(skewed_mean, 1.15);
  EXPECT_LT(skewed_mean, 1.5);
  EXPECT_EQ(pool, cfg.name_pool_size);

  cfg.mention_ratio = 1.0;
  cfg.name_pool_size = 30;
  const auto [flat, flat_mean, small_pool] = stats(cfg);
  EXPECT_GT(flat_mean, 1.8);
  EXPECT_EQ(small_pool, 30u);

  cfg.mention_ratio = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SyntheticConfig{};
  cfg.name_pool_size = 7;  // fewer words than entities
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.name_pool_size = 5000;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = SyntheticConfig{};
  cfg.paired_distractor_rate = 1.5;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Synthetic, SelfCheckRejectsMissingTrigger) {
  const RelationSchema schema = default_synthetic_schema();
  Document d = generate_synthetic_corpus(9, 1, schema)[0];
  ASSERT_TRUE(verify_synthetic_document(d, schema));
  ASSERT_FALSE(d.labels.empty());
  d.labels[0].relation = (d.labels[0].relation + 1) % schema.size();
  // Evidence now points at a sentence built for another relation.
  EXPECT_FALSE(verify_synthetic_document(d, schema));
}

TEST(Synthetic, ToyDocumentIsValid) {
  const Document d = toy_document();
  EXPECT_NO_THROW(validate_document(d, default_synthetic_schema()));
  EXPECT_TRUE(verify_synthetic_document(d, default_synthetic_schema()));
}

TEST(F1, PerfectAndEmpty) {
  const Corpus gold{counting_toy()};
  std::vector<PredictionRecord> perfect;
  for (const auto& l : gold[0].labels) perfect.push_back({"toy", l.subject, l.object, {l.relation}});
  const F1Report p = evaluate_f1(perfect, gold);
  EXPECT_EQ(p.precision, 1.0);
  EXPECT_EQ(p.recall, 1.0);
  EXPECT_EQ(p.f1, 1.0);
  const F1Report e = evaluate_f1({}, gold);
  EXPECT_EQ(e.recall, 0.0);
  EXPECT_EQ(e.f1, 0.0);
}

TEST(F1, CountingToy) {
  const Corpus gold{counting_toy()};
  const std::vector<PredictionRecord> preds{
      {"toy", 0, 1, {0}}, {"toy", 0, 2, {1}}, {"toy", 1, 2, {0, 1}}, {"toy", 2, 3, {}}, {"toy", 1, 0, {}}};
  const F1Report r = evaluate_f1(preds, gold);
  EXPECT_EQ(r.counts.tp, 3u);
  EXPECT_EQ(r.counts.fp, 1u);
  EXPECT_EQ(r.counts.fn, 2u);
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 0.6);
  EXPECT_NEAR(r.f1, 0.6667, 1e-4);
}

TEST(F1, RelabelingRelationIdsKeepsScore) {
  Corpus gold{counting_toy()};
  std::vector<PredictionRecord> preds{{"toy", 0, 1, {0}}, {"toy", 0, 2, {1}}, {"toy", 1, 2, {0, 1}}};
  const F1Report before = evaluate_f1(preds, gold);
  auto perm = [](std::size_t r) { return (r + 1) % 4; };
  for (auto& l : gold[0].labels) l.relation = perm(l.relation);
  for (auto& p : preds)
    for (auto& r : p.relations) r = perm(r);
  EXPECT_EQ(evaluate_f1(preds, gold).counts, before.counts);
}

TEST(F1, UnknownDocOrEntityIsDataError) {
  const Corpus gold{counting_toy()};
  EXPECT_THROW(evaluate_f1({{"nope", 0, 1, {0}}}, gold), DataError);
  EXPECT_THROW(evaluate_f1({{"toy", 0, 9, {0}}}, gold), DataError);
}

TEST(IgnF1, EmptyTrainFactsEqualsF1) {
  const Corpus gold{counting_toy()};
  const std::vector<PredictionRecord> preds{{"toy", 0, 1, {0}}, {"toy", 1, 2, {0, 1}}};
  const IgnF1Report ign = evaluate_ign_f1(preds, gold, toy_schema(), {});
  const F1Report f = evaluate_f1(preds, gold);
  EXPECT_EQ(ign.report.f1, f.f1);
  EXPECT_EQ(ign.report.counts, f.counts);
  EXPECT_FALSE(ign.degenerate);
}

TEST(IgnF1, OneSharedFactRemoved) {
  Document d = one_token_entities("ign", {"A", "B", "C"});
  d.labels = {{0, 1, 0, {}}, {1, 2, 1, {}}, {2, 0, 2, {}}};
  const Corpus gold{d};
  const std::vector<PredictionRecord> preds{{"ign", 0, 1, {0}}, {"ign", 1, 2, {1}}, {"ign", 2, 0, {2, 3}}};
  const FactSet train{{"B", "r1", "C"}};
  const IgnF1Report r = evaluate_ign_f1(preds, gold, toy_schema(), train);
  // 2 gold left; predictions: 2 TP, 1 FP.
  EXPECT_EQ(r.removed_gold, 1u);
  EXPECT_EQ(r.removed_predicted, 1u);
  EXPECT_EQ(r.report.counts.tp, 2u);
  EXPECT_EQ(r.report.counts.fp, 1u);
  EXPECT_EQ(r.report.counts.fn, 0u);
  EXPECT_NEAR(r.report.f1, 0.8, 1e-12);
  const F1Report full = evaluate_f1(preds, gold);
  EXPECT_LE(r.report.counts.tp + r.report.counts.fp + r.report.counts.fn,
            full.counts.tp + full.counts.fp + full.counts.fn);
}

TEST(IgnF1, AllGoldSharedIsDegenerate) {
  Document d = one_token_entities("ign", {"A", "B"});
  d.labels = {{0, 1, 0, {}}};
  const Corpus gold{d};
  const FactSet train = extract_facts(gold, toy_schema());
  EXPECT_EQ(train, (FactSet{{"A", "r0", "B"}}));
  const IgnF1Report r = evaluate_ign_f1({{"ign", 0, 1, {0}}}, gold, toy_schema(), train);
  EXPECT_TRUE(r.degenerate);
  EXPECT_EQ(r.report.f1, 0.0);
}

TEST(Buckets, SingleBucketEqualsOverall) {
  const Corpus gold{counting_toy()};
  const std::vector<PredictionRecord> preds{{"toy", 0, 1, {0}}, {"toy", 1, 2, {0, 1}}};
  const auto rows = bucket_by_entity_count(gold, preds);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].min_entities, 1u);
  EXPECT_EQ(rows[0].max_entities, 5u);
  EXPECT_EQ(rows[0].documents, 1u);
  EXPECT_EQ(rows[0].report.f1, evaluate_f1(preds, gold).f1);
}

TEST(Buckets, TwoBucketHandCounts) {
  Document small = one_token_entities("small", {"A", "B", "C"});
  small.labels = {{0, 1, 0, {}}, {1, 2, 1, {}}};
  Document big = one_token_entities("big", {"A", "B", "C", "D", "E", "F", "G"});
  big.labels = {{0, 6, 2, {}}, {3, 4, 3, {}}, {5, 1, 0, {}}};
  const Corpus gold{small, big};
  const std::vector<PredictionRecord> preds{
      {"small", 0, 1, {0}},                      // small: tp 1, fn 1
      {"big", 0, 6, {2}}, {"big", 3, 4, {1}},   // big: tp 1, fp 1, fn 2
  };
  const auto rows = bucket_by_entity_count(gold, preds);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].min_entities, 1u);
  EXPECT_EQ(rows[1].min_entities, 6u);
  EXPECT_EQ(rows[1].max_entities, 10u);
  EXPECT_EQ(rows[0].documents + rows[1].documents, 2u);
  EXPECT_EQ(rows[0].report.counts, (MicroCounts{1, 0, 1}));
  EXPECT_EQ(rows[1].report.counts, (MicroCounts{1, 1, 2}));
  EXPECT_NEAR(rows[0].report.f1, 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(rows[1].report.f1, 0.4, 1e-12);
  EXPECT_THROW(bucket_by_entity_count(gold, preds, 0), ConfigError);
}
