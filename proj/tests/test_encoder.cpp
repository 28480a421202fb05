#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "atlop/encoder.hpp"
#include "atlop/errors.hpp"
#include "atlop/vocab.hpp"

using namespace atlop;

namespace {

Document abc_document() {
  Document d;
  d.doc_id = "abc";
  d.sentences = {{"a", "b", "c"}};
  d.entities = {Entity{0, "X", {Mention{0, 1, 2}}}};
  return d;
}

EncoderConfig small_config() {
  EncoderConfig c;
  c.layers = 2;
  c.heads = 2;
  c.model_dim = 8;
  c.ffn_dim = 16;
  c.max_len = 16;
  c.dropout = 0.0;
  return c;
}

}  // namespace

TEST(Markers, SingleMention) {
  const MarkedDocument m = insert_markers(abc_document());
  EXPECT_EQ(m.tokens, (std::vector<std::string>{"a", "*", "b", "*", "c"}));
  ASSERT_EQ(m.anchors.size(), 1u);
  EXPECT_EQ(m.anchors[0], std::vector<std::size_t>{1});
  EXPECT_EQ(m.spans[0][0], (std::pair<std::size_t, std::size_t>{2, 3}));
}

TEST(Markers, TwoDisjointMentionsInsertFourMarkers) {
  Document d;
  d.doc_id = "two";
  d.sentences = {{"x", "y", "z"}, {"u", "v", "w"}};
  d.entities = {Entity{0, "X", {Mention{0, 0, 2}}}, Entity{1, "Y", {Mention{1, 1, 3}}}};
  const MarkedDocument m = insert_markers(d);
  EXPECT_EQ(m.tokens.size(), 10u);
  EXPECT_EQ(std::count(m.tokens.begin(), m.tokens.end(), "*"), 4);
  EXPECT_LT(m.anchors[0][0], m.anchors[1][0]);
  for (const auto& a : m.anchors)
    for (std::size_t p : a) EXPECT_EQ(m.tokens[p], "*");
}

TEST(Markers, IdenticalSpansShareMarkersAndOverlapsFail) {
  Document d;
  d.doc_id = "shared";
  d.sentences = {{"p", "q", "r"}};
  d.entities = {Entity{0, "X", {Mention{0, 0, 2}}}, Entity{1, "Y", {Mention{0, 0, 2}}}};
  const MarkedDocument m = insert_markers(d);
  EXPECT_EQ(m.tokens.size(), 5u);
  EXPECT_EQ(m.anchors[0], m.anchors[1]);

  d.entities[1].mentions[0] = Mention{0, 1, 3};
  try {
    insert_markers(d);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("shared"), std::string::npos);
  }
}

TEST(Markers, OutOfBoundsSpanNamesTheDocument) {
  Document d = abc_document();
  d.entities[0].mentions[0] = Mention{0, 2, 4};
  try {
    insert_markers(d);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("'abc'"), std::string::npos);
  }
}

TEST(Markers, DisabledMarkersAnchorOnFirstMentionToken) {
  const MarkedDocument m = insert_markers(abc_document(), false);
  EXPECT_EQ(m.tokens, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(m.anchors[0], std::vector<std::size_t>{1});
}

TEST(Vocabulary, ReservedIdsAreDistinctAndDense) {
  Vocabulary v({"zeta", "alpha", "alpha"});
  EXPECT_EQ(v.size(), 5u);
  EXPECT_NE(v.pad_id(), v.unk_id());
  EXPECT_NE(v.pad_id(), v.marker_id());
  EXPECT_NE(v.unk_id(), v.marker_id());
  EXPECT_EQ(v.id("never-seen"), v.unk_id());
  EXPECT_EQ(v.token(v.id("zeta")), "zeta");
}

TEST(Vocabulary, SaveLoadRoundTrip) {
  Vocabulary v({"b", "a", "c"});
  std::stringstream ss;
  v.save(ss);
  EXPECT_EQ(Vocabulary::load(ss), v);
  std::stringstream bad("b\na\n");
  EXPECT_THROW(Vocabulary::load(bad), DataError);
}

TEST(Encoder, ShapesAndAttentionRowsAreDistributions) {
  const EncoderConfig cfg = small_config();
  Encoder enc(cfg, 12, 7);
  ad::Graph g;
  const std::vector<std::size_t> ids{3, 4, 5, 6, 7, 8, 9};
  EncoderOutput out = enc.encode(g, ids, {});
  EXPECT_EQ(out.hidden.shape(), (Shape{7, 8}));
  const Tensor a = out.attention_tensor();
  EXPECT_EQ(a.shape(), (Shape{2, 7, 7}));
  for (std::size_t r = 0; r < 14; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 7; ++c) {
      EXPECT_GE(a[r * 7 + c], 0.0);
      s += a[r * 7 + c];
    }
    EXPECT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Encoder, DeterministicWithoutDropout) {
  Encoder e1(small_config(), 12, 7), e2(small_config(), 12, 7);
  const std::vector<std::size_t> ids{3, 4, 5, 6};
  ad::Graph g1, g2;
  auto o1 = e1.encode(g1, ids, {});
  auto o2 = e2.encode(g2, ids, {});
  EXPECT_EQ(o1.hidden.value(), o2.hidden.value());
  EXPECT_EQ(o1.attention_tensor(), o2.attention_tensor());
}

TEST(Encoder, LengthLimitIsExplicit) {
  Encoder enc(small_config(), 12, 7);
  std::vector<std::size_t> ids(20, 3);
  ad::Graph g;
  EXPECT_THROW(enc.encode(g, ids, {}), DataError);
  EncodeOptions opt;
  opt.truncate = true;
  auto out = enc.encode(g, ids, opt);
  EXPECT_TRUE(out.truncated);
  EXPECT_EQ(out.length, 16u);
}

TEST(Encoder, PadTailDoesNotChangeRealPositions) {
  Encoder enc(small_config(), 12, 7);
  const std::size_t pad = 0;
  std::vector<std::size_t> short_ids{3, 4, 5, 6, pad, pad};
  std::vector<std::size_t> long_ids{3, 4, 5, 6, pad, pad, pad, pad};
  EncodeOptions opt;
  opt.pad_id = pad;
  ad::Graph g1, g2;
  auto a = enc.encode(g1, short_ids, opt);
  auto b = enc.encode(g2, long_ids, opt);
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(a.hidden.value().at(r, c), b.hidden.value().at(r, c), 1e-12);
}

TEST(Encoder, DropoutNeedsAnRngInTraining) {
  EncoderConfig cfg = small_config();
  cfg.dropout = 0.1;
  Encoder enc(cfg, 12, 7);
  ad::Graph g;
  const std::vector<std::size_t> ids{3, 4};
  EncodeOptions opt;
  opt.train = true;
  EXPECT_THROW(enc.encode(g, ids, opt), ConfigError);
}

TEST(Encoder, InvalidConfigIsRejected) {
  EncoderConfig cfg = small_config();
  cfg.heads = 3;
  EXPECT_THROW(Encoder(cfg, 12, 1), ConfigError);
}

TEST(Encoder, MeanHiddenGradientMatchesFiniteDifferences) {
  Encoder enc(small_config(), 10, 5);
  const std::vector<std::size_t> ids{3, 4, 5, 6, 7};
  std::vector<ad::Parameter*> params = enc.parameters();
  // The top LayerNorm makes the plain mean of H constant in the inputs, so
  // the mean is taken after a fixed random reweighting.
  Tensor w({5, 8});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1, 1);
  for (auto& v : w.data()) v = u(rng);
  auto rep = ad::grad_check(
      [&](ad::Graph& g) { return ad::mean(ad::mul(enc.encode(g, ids, {}).hidden, g.constant(w))); }, params);
  EXPECT_TRUE(rep.passed) << rep.worst().name << " " << rep.worst().max_rel_error;
  EXPECT_EQ(rep.entries.front().name, "encoder.token_embedding");
  EXPECT_LT(rep.entries.front().max_rel_error, 1e-4);
}
