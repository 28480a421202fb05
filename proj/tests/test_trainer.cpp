#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "atlop/checkpoint.hpp"
#include "atlop/config.hpp"
#include "atlop/errors.hpp"
#include "atlop/optimizer.hpp"
#include "atlop/synthetic.hpp"
#include "atlop/trainer.hpp"

using namespace atlop;
namespace fs = std::filesystem;

namespace {

TrainConfig tiny_config() {
  TrainConfig c;
  c.layers = 1;
  c.heads = 2;
  c.model_dim = 16;
  c.ffn_dim = 32;
  c.max_len = 128;
  c.groups = 2;
  c.epochs = 2;
  c.batch_size = 3;
  c.seed = 4;
  return c;
}

struct TinyData {
  RelationSchema schema = default_synthetic_schema();
  Corpus train = generate_synthetic_corpus(101, 9, schema);
  Corpus dev = generate_synthetic_corpus(202, 4, schema);
};

const TinyData& data() {
  static const TinyData d;
  return d;
}

fs::path temp_path(const std::string& name) { return fs::temp_directory_path() / ("atlop_test_" + name); }

struct CliRun {
  int status = 0;
  std::string out, err;
};

// Runs the CLI with stdout and stderr captured to files.
CliRun run_cli(const std::string& args) {
  const fs::path out = temp_path("cli.out"), err = temp_path("cli.err");
  const std::string cmd = std::string("\"") + ATLOP_CLI + "\" " + args + " >" + out.string() + " 2>" + err.string();
  CliRun r;
  const int raw = std::system(cmd.c_str());
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  };
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

}  // namespace

TEST(Schedule, WarmupThenLinearDecay) {
  EXPECT_EQ(lr_schedule(0, 100, 0.06), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(3, 100, 0.06), 0.5);
  EXPECT_DOUBLE_EQ(lr_schedule(6, 100, 0.06), 1.0);
  EXPECT_DOUBLE_EQ(lr_schedule(53, 100, 0.06), 0.5);
  EXPECT_EQ(lr_schedule(100, 100, 0.06), 0.0);
  EXPECT_DOUBLE_EQ(lr_schedule(0, 10, 0.0), 1.0);
  double prev = 1.0;
  for (std::size_t s = 6; s <= 100; ++s) {
    EXPECT_LE(lr_schedule(s, 100, 0.06), prev);
    prev = lr_schedule(s, 100, 0.06);
  }
}

TEST(Clipping, ScalesToMaxNorm) {
  ad::Parameter a("a", Tensor::vector({0, 0})), b("b", Tensor::vector({0}));
  a.grad = Tensor::vector({3, 0});
  b.grad = Tensor::vector({4});
  std::vector<ad::Parameter*> ps{&a, &b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(ps, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
  // Below the limit nothing changes.
  EXPECT_NEAR(clip_grad_norm(ps, 1.0), 1.0, 1e-15);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_THROW(clip_grad_norm(ps, 0.0), ConfigError);
}

TEST(AdamW, FirstStepAndDecoupledDecay) {
  ad::Parameter bias("bias", Tensor::vector({1.0}));
  ad::Parameter weight("weight", Tensor({1, 1}, 1.0));
  AdamWConfig cfg;
  cfg.weight_decay = 0.01;
  AdamW opt({{{&bias}, 0.1}, {{&weight}, 0.2}}, cfg);
  bias.grad[0] = 2.0;
  opt.step(1.0);
  // Bias-corrected first step moves by lr * g / (|g| + eps); no decay on rank 1.
  EXPECT_NEAR(bias.value[0], 1.0 - 0.1 * 2.0 / (2.0 + 1e-6), 1e-12);
  EXPECT_NEAR(weight.value[0], 1.0 - 0.2 * 0.01, 1e-12);
  EXPECT_EQ(opt.steps(), 1u);
  opt.zero_grad();
  EXPECT_EQ(bias.grad[0], 0.0);
  opt.step(0.0);
  EXPECT_NEAR(weight.value[0], 1.0 - 0.2 * 0.01, 1e-12);
}

TEST(Config, ParseRoundTripAndErrors) {
  std::istringstream in("# comment\nlr_encoder = 0.005\nloss = bce\ncontext_pooling = false\n\ngroups = 8\n");
  const TrainConfig c = parse_train_config(in);
  EXPECT_EQ(c.lr_encoder, 0.005);
  EXPECT_EQ(c.loss, LossKind::BCE);
  EXPECT_FALSE(c.context_pooling);
  EXPECT_EQ(c.groups, 8u);
  EXPECT_EQ(c.warmup_fraction, 0.06);

  std::ostringstream os;
  write_train_config(os, c);
  std::istringstream back(os.str());
  EXPECT_EQ(parse_train_config(back), c);
  EXPECT_EQ(from_map(to_map(c)), c);

  auto error_for = [](const std::string& text) -> std::string {
    std::istringstream is(text);
    try {
      parse_train_config(is);
    } catch (const ConfigError& e) {
      return e.what();
    }
    return "";
  };
  EXPECT_NE(error_for("learning_rate = 1").find("learning_rate"), std::string::npos);
  EXPECT_NE(error_for("epochs = 3\nepochs = 4").find("epochs"), std::string::npos);
  EXPECT_NE(error_for("lr_head = -1").find("lr_head"), std::string::npos);
  EXPECT_NE(error_for("warmup_fraction = 1").find("warmup_fraction"), std::string::npos);
  EXPECT_NE(error_for("loss = hinge").find("loss"), std::string::npos);
  EXPECT_NE(error_for("model_dim = 30\nheads = 4").find("model_dim"), std::string::npos);
  EXPECT_NE(error_for("groups = 5").find("groups"), std::string::npos);
  EXPECT_NE(error_for("no equals sign").size(), 0u);
}

TEST(Trainer, SameSeedSameHistory) {
  const TrainConfig cfg = tiny_config();
  const TrainedModel a = train(cfg, data().train, data().dev, data().schema);
  const TrainedModel b = train(cfg, data().train, data().dev, data().schema);
  ASSERT_EQ(a.history.size(), cfg.epochs);
  EXPECT_EQ(a.history, b.history);
  EXPECT_EQ(a.best_epoch, b.best_epoch);
  for (const auto& r : a.history) EXPECT_TRUE(std::isfinite(r.train_loss));
}

TEST(Trainer, CheckpointRoundTripIsBitIdentical) {
  const TrainedModel tm = train(tiny_config(), data().train, data().dev, data().schema);
  const fs::path p = temp_path("roundtrip.ckpt");
  save_checkpoint(p, tm);
  const TrainedModel back = load_checkpoint(p);
  EXPECT_EQ(back.config, tm.config);
  EXPECT_EQ(back.history, tm.history);
  EXPECT_EQ(back.best_epoch, tm.best_epoch);
  EXPECT_EQ(back.thresholds.strategy, tm.thresholds.strategy);
  EXPECT_EQ(back.thresholds.theta, tm.thresholds.theta);
  EXPECT_EQ(back.thresholds.per_class, tm.thresholds.per_class);
  EXPECT_EQ(back.model.vocab(), tm.model.vocab());

  const auto s1 = score_corpus(tm.model, data().dev);
  const auto s2 = score_corpus(back.model, data().dev);
  for (std::size_t i = 0; i < s1.size(); ++i) EXPECT_EQ(s1[i].logits, s2[i].logits);
  for (ThresholdStrategy st : {ThresholdStrategy::Adaptive, ThresholdStrategy::Global, ThresholdStrategy::PerClass}) {
    const EvalReport e1 = evaluate(tm, data().dev, st), e2 = evaluate(back, data().dev, st);
    EXPECT_EQ(e1.predictions, e2.predictions);
    EXPECT_EQ(e1.f1.f1, e2.f1.f1);
  }
  fs::remove(p);
}

TEST(Trainer, CorruptCheckpointIsDataError) {
  const fs::path p = temp_path("corrupt.ckpt");
  {
    std::ofstream out(p, std::ios::binary);
    out << "NOTACKPT and some bytes";
  }
  EXPECT_THROW(load_checkpoint(p), DataError);
  EXPECT_THROW(load_checkpoint(temp_path("missing.ckpt")), DataError);

  const TrainedModel tm = train(tiny_config(), data().train, data().dev, data().schema);
  const fs::path good = temp_path("truncated.ckpt");
  save_checkpoint(good, tm);
  fs::resize_file(good, fs::file_size(good) - 16);
  EXPECT_THROW(load_checkpoint(good), DataError);
  fs::remove(p);
  fs::remove(good);
}

TEST(Trainer, PredictionsCoverEveryOrderedPair) {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  const TrainedModel tm = train(cfg, data().train, data().dev, data().schema);
  const EvalReport r = evaluate(tm, data().dev);
  std::size_t expected = 0;
  for (const Document& d : data().dev) expected += d.entities.size() * (d.entities.size() - 1);
  EXPECT_EQ(r.predictions.size(), expected);
  EXPECT_FALSE(r.buckets.empty());
}

TEST(Trainer, ContextDumpIsADistributionMatchingForward) {
  TrainConfig cfg = tiny_config();
  cfg.epochs = 1;
  const TrainedModel tm = train(cfg, data().train, data().dev, data().schema);
  const Document& doc = data().dev[0];
  ad::Graph g;
  const DocumentForward f = tm.model.forward(g, doc);
  for (std::size_t p = 0; p < f.pairs.size(); ++p) {
    const auto [s, o] = f.pairs[p];
    const ContextDump cd = dump_context_weights(tm.model, doc, s, o);
    ASSERT_EQ(cd.weights.size(), cd.tokens.size());
    double sum = 0;
    for (std::size_t i = 0; i < cd.weights.size(); ++i) {
      EXPECT_GE(cd.weights[i], 0.0);
      EXPECT_NEAR(cd.weights[i], f.context_weights.value().at(p, i), 1e-12);
      sum += cd.weights[i];
    }
    EXPECT_NEAR(sum, 1.0, 1e-9);
    const ContextDump swapped = dump_context_weights(tm.model, doc, o, s);
    for (std::size_t i = 0; i < cd.weights.size(); ++i) EXPECT_NEAR(swapped.weights[i], cd.weights[i], 1e-12);
  }
  EXPECT_THROW(dump_context_weights(tm.model, doc, 0, 0), DataError);
  EXPECT_THROW(dump_context_weights(tm.model, doc, 0, 99), DataError);
}

TEST(Trainer, EveryAblationSwitchTrains) {
  std::vector<std::pair<std::string, std::string>> switches{
      {"loss", "bce"}, {"context_pooling", "false"}, {"pooling", "mean"}, {"entity_markers", "false"},
      {"groups", "1"}, {"groups", "16"}, {"strategy", "global"}, {"strategy", "per-class"}};
  for (const auto& [key, value] : switches) {
    auto kv = to_map(tiny_config());
    kv["epochs"] = "1";
    kv[key] = value;
    const TrainConfig cfg = from_map(kv);
    const TrainedModel tm = train(cfg, data().train, data().dev, data().schema);
    ASSERT_EQ(tm.history.size(), 1u) << key;
    EXPECT_TRUE(std::isfinite(tm.history[0].train_loss)) << key << "=" << value;
    const EvalReport r = evaluate(tm, data().dev);
    EXPECT_GE(r.f1.f1, 0.0);
  }
}

TEST(Trainer, RejectsBadInput) {
  TrainConfig cfg = tiny_config();
  EXPECT_THROW(train(cfg, {}, data().dev, data().schema), DataError);
  cfg.lr_encoder = 0;
  EXPECT_THROW(train(cfg, data().train, data().dev, data().schema), ConfigError);
}

TEST(Cli, EndToEndAndErrorJson) {
  const fs::path dir = temp_path("cli");
  fs::create_directories(dir);
  const std::string tr = (dir / "train.jsonl").string(), dv = (dir / "dev.jsonl").string();
  ASSERT_EQ(run_cli("gen-data --seed 3 --docs 8 --out " + tr).status, 0);
  ASSERT_EQ(run_cli("gen-data --seed 4 --docs 3 --out " + dv + " --prefix dev").status, 0);

  const fs::path cfg = dir / "tiny.cfg";
  {
    std::ofstream out(cfg);
    TrainConfig c = tiny_config();
    c.epochs = 1;
    write_train_config(out, c);
  }
  const std::string ck = (dir / "model.ckpt").string();
  const CliRun t = run_cli("train --config " + cfg.string() + " --train " + tr + " --dev " + dv + " --out " + ck);
  ASSERT_EQ(t.status, 0) << t.err;
  EXPECT_NO_THROW((void)nlohmann::json::parse(t.out));

  const CliRun e = run_cli("eval --ckpt " + ck + " --data " + dv + " --strategy global --train-facts " + tr);
  ASSERT_EQ(e.status, 0) << e.err;
  const auto report = nlohmann::json::parse(e.out);
  EXPECT_TRUE(report.contains("f1"));
  EXPECT_TRUE(report.contains("ign_f1"));

  const std::string pred = (dir / "pred.jsonl").string();
  ASSERT_EQ(run_cli("predict --ckpt " + ck + " --data " + dv + " --out " + pred).status, 0);
  std::ifstream pin(pred);
  std::size_t lines = 0;
  for (std::string line; std::getline(pin, line);) lines += !line.empty();
  const Corpus dev = load_corpus(dv, default_synthetic_schema());
  std::size_t pairs = 0;
  for (const Document& d : dev) pairs += d.entities.size() * (d.entities.size() - 1);
  EXPECT_EQ(lines, pairs);

  const CliRun d = run_cli("dump-context --ckpt " + ck + " --data " + dv + " --doc dev-4-0 --subject 0 --object 1");
  ASSERT_EQ(d.status, 0) << d.err;
  double sum = 0;
  const auto dump = nlohmann::json::parse(d.out);
  for (double w : dump["weights"]) sum += w;
  EXPECT_NEAR(sum, 1.0, 1e-9);

  const CliRun bad = run_cli("dump-context --ckpt " + ck + " --data " + dv + " --doc dev-4-0 --subject 0 --object 0");
  EXPECT_EQ(bad.status, 1);
  const auto err = nlohmann::json::parse(bad.err);
  EXPECT_EQ(err["error"], "data_error");

  const CliRun missing = run_cli("eval --ckpt " + (dir / "nope.ckpt").string() + " --data " + dv);
  EXPECT_EQ(missing.status, 2);
  EXPECT_EQ(nlohmann::json::parse(missing.err)["error"], "usage_error");

  const fs::path badcfg = dir / "bad.cfg";
  {
    std::ofstream out(badcfg);
    out << "epochs = 2\nmystery = 1\n";
  }
  const CliRun c = run_cli("train --config " + badcfg.string() + " --train " + tr + " --dev " + dv + " --out " + ck);
  EXPECT_EQ(c.status, 1);
  const auto cerr = nlohmann::json::parse(c.err);
  EXPECT_EQ(cerr["error"], "config_error");
  EXPECT_NE(cerr["message"].get<std::string>().find("mystery"), std::string::npos);
  fs::remove_all(dir);
}
