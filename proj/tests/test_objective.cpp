#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "atlop/errors.hpp"
#include "atlop/objective.hpp"

using namespace atlop;

namespace {

std::vector<double> random_logits(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 2.0);
  std::vector<double> v(n);
  for (auto& x : v) x = nd(rng);
  return v;
}

LabelSets random_labels(std::size_t R, std::mt19937_64& rng) {
  std::vector<std::size_t> pos;
  std::bernoulli_distribution b(0.3);
  for (std::size_t r = 0; r < R; ++r)
    if (b(rng)) pos.push_back(r);
  return LabelSets::from_positives(pos, R);
}

}  // namespace

TEST(AdaptiveLoss, TiedPositiveIsLn2) {
  const std::vector<double> logits{0.4, 0.4};
  const std::vector<std::size_t> pos{0};
  const AdaptiveLoss l = adaptive_threshold_loss(logits, LabelSets::from_positives(pos, 1));
  EXPECT_NEAR(l.positive, std::log(2.0), 1e-12);
  EXPECT_NEAR(l.negative, 0.0, 1e-12);  // no negatives: TH alone in its softmax
}

TEST(AdaptiveLoss, TiedNegativeIsLn2) {
  const std::vector<double> logits{-1.0, -1.0};
  const AdaptiveLoss l = adaptive_threshold_loss(logits, LabelSets::from_positives({}, 1));
  EXPECT_EQ(l.positive, 0.0);
  EXPECT_NEAR(l.total(), std::log(2.0), 1e-12);
}

TEST(AdaptiveLoss, WorkedExample) {
  const std::vector<double> logits{0.0, 2.0, -1.0};
  const std::vector<std::size_t> pos{0};
  const AdaptiveLoss l = adaptive_threshold_loss(logits, LabelSets::from_positives(pos, 2));
  EXPECT_NEAR(l.positive, 0.126928, 1e-6);
  EXPECT_NEAR(l.negative, 0.313262, 1e-6);
  EXPECT_NEAR(l.total(), 0.440190, 1e-6);
}

TEST(AdaptiveLoss, GraphVersionSumsPairs) {
  ad::Graph g;
  ad::Var logits = g.constant(Tensor::matrix({{0.0, 2.0, -1.0}, {-1.0, -1.0, -1.0}}));
  const std::vector<std::size_t> pos{0};
  const std::vector<LabelSets> labels{LabelSets::from_positives(pos, 2), LabelSets::from_positives({}, 2)};
  const double v = adaptive_threshold_loss(logits, labels).value()[0];
  EXPECT_NEAR(v, 0.440190 + std::log(3.0), 1e-6);
}

TEST(AdaptiveLoss, GraphGradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  const std::size_t P = 4, R = 5;
  Tensor init({P, R + 1});
  for (std::size_t p = 0; p < P; ++p) {
    auto row = random_logits(R + 1, rng);
    for (std::size_t c = 0; c <= R; ++c) init.at(p, c) = row[c];
  }
  std::vector<LabelSets> labels;
  for (std::size_t p = 0; p < P; ++p) labels.push_back(random_labels(R, rng));
  ad::Parameter logits("logits", init);
  std::vector<ad::Parameter*> ps{&logits};
  ad::GradCheckOptions opt;
  opt.tolerance = 1e-6;
  for (bool bce : {false, true}) {
    auto rep = ad::grad_check(
        [&](ad::Graph& g) {
          ad::Var l = g.parameter(logits);
          return bce ? bce_loss(l, labels) : adaptive_threshold_loss(l, labels);
        },
        ps, opt);
    EXPECT_TRUE(rep.passed) << bce << " " << rep.worst().max_rel_error;
  }
}

TEST(AdaptiveLoss, ShiftInvariance) {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> shift(-50.0, 50.0);
  std::uniform_int_distribution<std::size_t> rsize(1, 8);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t R = rsize(rng);
    auto logits = random_logits(R + 1, rng);
    const LabelSets labels = random_labels(R, rng);
    const double c = shift(rng);
    auto shifted = logits;
    for (auto& x : shifted) x += c;
    EXPECT_NEAR(adaptive_threshold_loss(logits, labels).total(), adaptive_threshold_loss(shifted, labels).total(),
                1e-9);
  }
}

TEST(AdaptiveLoss, Monotonicity) {
  std::mt19937_64 rng(23);
  for (int t = 0; t < 200; ++t) {
    auto logits = random_logits(5, rng);
    const std::vector<std::size_t> pos{2};
    const LabelSets labels = LabelSets::from_positives(pos, 4);
    const AdaptiveLoss base = adaptive_threshold_loss(logits, labels);
    auto up_pos = logits;
    up_pos[logit_column(2)] += 0.5;
    EXPECT_LT(adaptive_threshold_loss(up_pos, labels).positive, base.positive);
    auto up_neg = logits;
    up_neg[logit_column(1)] += 0.5;
    EXPECT_GT(adaptive_threshold_loss(up_neg, labels).negative, base.negative);
  }
}

TEST(AdaptiveLoss, SeveralPositivesCompeteInL1) {
  // With k positives, d L1 / d l_r = k * s_r - 1: raising a dominant
  // positive can increase L1.
  const std::vector<double> logits{0.0, 3.0, 0.0};
  const std::vector<std::size_t> pos{0, 1};
  const LabelSets labels = LabelSets::from_positives(pos, 2);
  auto up = logits;
  up[logit_column(0)] += 0.1;
  EXPECT_GT(adaptive_threshold_loss(up, labels).positive, adaptive_threshold_loss(logits, labels).positive);
}

TEST(AdaptiveLoss, LargeLogitsStayFinite) {
  const std::vector<double> logits{800.0, -900.0, 1000.0};
  const std::vector<std::size_t> pos{0};
  const AdaptiveLoss l = adaptive_threshold_loss(logits, LabelSets::from_positives(pos, 2));
  EXPECT_TRUE(std::isfinite(l.total()));
  EXPECT_NEAR(l.positive, 1700.0, 1e-9);
  EXPECT_NEAR(l.negative, 200.0, 1e-9);
}

TEST(LabelSets, Validation) {
  EXPECT_THROW(LabelSets::from_positives(std::vector<std::size_t>{3}, 3), DataError);
  LabelSets bad{{0}, {0, 1}};
  EXPECT_THROW(bad.validate(2), DataError);
  LabelSets missing{{0}, {}};
  EXPECT_THROW(missing.validate(2), DataError);
  LabelSets outside{{0}, {1, 5}};
  EXPECT_THROW(outside.validate(2), DataError);
  const std::vector<double> logits{0.0, 1.0, 2.0};
  EXPECT_THROW(adaptive_threshold_loss(logits, LabelSets{{0}, {2}}), DataError);
}

TEST(BceLoss, ClosedForms) {
  const std::vector<double> half{0.5, 0.5, 0.5}, y{1, 0, 1};
  EXPECT_NEAR(bce_loss(half, y), std::log(2.0), 1e-12);
  const std::vector<double> p{0.9, 0.2}, t{1, 0};
  EXPECT_NEAR(bce_loss(p, t), 0.164252, 1e-6);
  const std::vector<double> perfect{1.0, 0.0};
  EXPECT_LT(bce_loss(perfect, t), 1e-11);
  const std::vector<double> wrong{0.0, 1.0};
  EXPECT_TRUE(std::isfinite(bce_loss(wrong, t)));
  EXPECT_THROW(bce_loss(p, half), DimensionError);
}

TEST(BceLoss, GraphIgnoresThresholdColumn) {
  ad::Graph g;
  const double l9 = std::log(0.9 / 0.1), l2 = std::log(0.2 / 0.8);
  const std::vector<std::size_t> pos{0};
  const std::vector<LabelSets> labels{LabelSets::from_positives(pos, 2)};
  for (double th : {-5.0, 0.0, 7.0}) {
    ad::Var logits = g.constant(Tensor::matrix({{th, l9, l2}}));
    EXPECT_NEAR(bce_loss(logits, labels).value()[0], 0.164252, 1e-6);
  }
}

TEST(Decisions, Examples) {
  EXPECT_EQ(decide_adaptive(std::vector<double>{0.0, 1.2, -0.5}), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(decide_adaptive(std::vector<double>{3.0, 1.2, -0.5}).empty());
  EXPECT_TRUE(decide_adaptive(std::vector<double>{1.0, 1.0}).empty());  // tie is NA
  EXPECT_EQ(decide_global(std::vector<double>{0.9, 0.1}, 0.5), (std::vector<std::size_t>{0}));
  EXPECT_TRUE(decide_global(std::vector<double>{0.95, 0.3}, 0.95).empty());
  EXPECT_EQ(decide_per_class(std::vector<double>{0.4, 0.4}, std::vector<double>{0.3, 0.5}),
            (std::vector<std::size_t>{0}));
  EXPECT_THROW(decide_per_class(std::vector<double>{0.4}, std::vector<double>{0.3, 0.5}), DimensionError);
}

TEST(Decisions, MatchNaiveScan) {
  std::mt19937_64 rng(24);
  std::uniform_int_distribution<std::size_t> rsize(1, 10);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> coarse(-2, 2);
  for (int t = 0; t < 10000; ++t) {
    const std::size_t R = rsize(rng);
    std::vector<double> logits(R + 1), probs(R), thetas(R);
    // Coarse integer logits make ties with TH common.
    for (auto& x : logits) x = t % 2 ? coarse(rng) : u(rng) * 4 - 2;
    for (auto& x : probs) x = t % 3 ? u(rng) : std::round(u(rng) * 10) / 10;
    for (auto& x : thetas) x = 0.05 + 0.9 * u(rng);
    const double theta = std::round(u(rng) * 8 + 1) / 10;
    std::vector<std::size_t> ea, eg, ep;
    for (std::size_t r = 0; r < R; ++r) {
      if (logits[r + 1] > logits[0]) ea.push_back(r);
      if (probs[r] > theta) eg.push_back(r);
      if (probs[r] > thetas[r]) ep.push_back(r);
    }
    ASSERT_EQ(decide_adaptive(logits), ea);
    ASSERT_EQ(decide_global(probs, theta), eg);
    ASSERT_EQ(decide_per_class(probs, thetas), ep);
    auto shifted = logits;
    for (auto& x : shifted) x += 3.5;
    ASSERT_EQ(decide_adaptive(shifted), ea);
  }
}

TEST(ThresholdConfig, ValidationAndParsing) {
  EXPECT_EQ(parse_strategy("per-class"), ThresholdStrategy::PerClass);
  EXPECT_EQ(parse_strategy("per_class"), ThresholdStrategy::PerClass);
  EXPECT_EQ(parse_strategy(to_string(ThresholdStrategy::Global)), ThresholdStrategy::Global);
  EXPECT_THROW(parse_strategy("softmax"), ConfigError);
  ThresholdConfig c;
  c.strategy = ThresholdStrategy::Global;
  c.theta = 1.0;
  EXPECT_THROW(c.validate(2), ConfigError);
  c.theta = 0.3;
  EXPECT_NO_THROW(c.validate(2));
  c.strategy = ThresholdStrategy::PerClass;
  c.per_class = {0.2};
  EXPECT_THROW(c.validate(2), ConfigError);
  c.per_class = {0.2, 0.7};
  EXPECT_NO_THROW(c.validate(2));
}
