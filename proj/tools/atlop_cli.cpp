// atlop: train, evaluate and inspect relation extraction models.

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "atlop/checkpoint.hpp"
#include "atlop/config.hpp"
#include "atlop/corpus.hpp"
#include "atlop/errors.hpp"
#include "atlop/kernels.hpp"
#include "atlop/metrics.hpp"
#include "atlop/synthetic.hpp"
#include "atlop/trainer.hpp"
#include "json.hpp"

using nlohmann::json;
using namespace atlop;

namespace {

json report_json(const F1Report& r) {
  return {{"precision", r.precision}, {"recall", r.recall}, {"f1", r.f1},
          {"tp", r.counts.tp},        {"fp", r.counts.fp},   {"fn", r.counts.fn}};
}

// Rejects corpora naming relations the checkpoint does not know.
Corpus load_for(const TrainedModel& tm, const std::string& path) {
  const RelationSchema found = scan_schema(path);
  for (const std::string& name : found.names())
    if (!tm.model.schema().find(name))
      throw DataError("schema mismatch: relation '" + name + "' in '" + path + "' is not in the checkpoint schema");
  return load_corpus(path, tm.model.schema());
}

// TSV "subject<TAB>relation<TAB>object" lines, or a corpus JSONL file.
FactSet load_facts(const std::string& path, const RelationSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open facts file '" + path + "'");
  const int first = in.peek();
  if (first == '{') return extract_facts(load_corpus(path, scan_schema(path)), schema);
  FactSet facts;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.empty()) continue;
    const auto a = line.find('\t');
    const auto b = a == std::string::npos ? a : line.find('\t', a + 1);
    if (b == std::string::npos) throw DataError("facts line " + std::to_string(n) + ": expected three tab-separated fields");
    facts.emplace(line.substr(0, a), line.substr(a + 1, b - a - 1), line.substr(b + 1));
  }
  return facts;
}

int run_train(const std::string& config_path, const std::string& train_path, const std::string& dev_path,
              const std::string& out_path) {
  const TrainConfig cfg = load_train_config(config_path);
  const RelationSchema schema = cfg.relations.empty() ? scan_schema(train_path) : RelationSchema(cfg.relations);
  const Corpus train_docs = load_corpus(train_path, schema);
  const Corpus dev_docs = load_corpus(dev_path, schema);
  const TrainedModel tm = train(cfg, train_docs, dev_docs, schema, [](const EpochRecord& r) {
    std::cerr << json{{"epoch", r.epoch}, {"train_loss", r.train_loss}, {"dev_f1", r.dev_f1}, {"seconds", r.seconds}}
              << "\n";
  });
  save_checkpoint(out_path, tm);
  std::cout << json{{"checkpoint", out_path}, {"best_epoch", tm.best_epoch}, {"best_dev_f1", tm.best_dev_f1},
                    {"strategy", to_string(tm.thresholds.strategy)}, {"theta", tm.thresholds.theta}}
            << "\n";
  return 0;
}

int run_eval(const std::string& ckpt, const std::string& data, const std::string& strategy, const std::string& facts,
             const std::string& out_path) {
  const TrainedModel tm = load_checkpoint(ckpt);
  const Corpus corpus = load_for(tm, data);
  std::optional<ThresholdStrategy> override_strategy;
  if (!strategy.empty()) override_strategy = parse_strategy(strategy);
  std::optional<FactSet> fact_set;
  if (!facts.empty()) fact_set = load_facts(facts, tm.model.schema());
  const EvalReport r = evaluate(tm, corpus, override_strategy, fact_set ? &*fact_set : nullptr);
  json j = report_json(r.f1);
  j["strategy"] = to_string(r.strategy);
  j["documents"] = corpus.size();
  if (r.ign) {
    j["ign_f1"] = report_json(r.ign->report);
    j["ign_f1"]["degenerate"] = r.ign->degenerate;
  }
  json buckets = json::array();
  for (const BucketRow& b : r.buckets) {
    json row = report_json(b.report);
    row["min_entities"] = b.min_entities;
    row["max_entities"] = b.max_entities;
    row["documents"] = b.documents;
    buckets.push_back(row);
  }
  j["buckets"] = buckets;
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw DataError("cannot write '" + out_path + "'");
    out << j.dump(2) << "\n";
  }
  std::cout << j.dump() << "\n";
  return 0;
}

int run_predict(const std::string& ckpt, const std::string& data, const std::string& out_path) {
  const TrainedModel tm = load_checkpoint(ckpt);
  const Corpus corpus = load_for(tm, data);
  const auto scores = score_corpus(tm.model, corpus, tm.config.threads);
  const auto preds = make_predictions(tm.model, corpus, scores, tm.thresholds);
  std::ofstream out(out_path);
  if (!out) throw DataError("cannot write '" + out_path + "'");
  write_predictions(out, preds, tm.model.schema());
  std::cout << json{{"predictions", preds.size()}, {"out", out_path}} << "\n";
  return 0;
}

int run_gen(std::uint64_t seed, std::size_t docs, const std::string& out_path, const SyntheticConfig& sc) {
  const RelationSchema schema = default_synthetic_schema();
  const Corpus c = generate_synthetic_corpus(seed, docs, schema, sc);
  save_corpus(out_path, c, schema);
  std::cout << json{{"documents", c.size()}, {"out", out_path}} << "\n";
  return 0;
}

int run_grad_check(const std::string& config_path, double tolerance) {
  TrainConfig cfg = load_train_config(config_path);
  const Document doc = toy_document();
  const RelationSchema schema = cfg.relations.empty() ? default_synthetic_schema() : RelationSchema(cfg.relations);
  validate_document(doc, schema);
  cfg.dropout = 0.0;
  Model model(cfg.model_config(), Vocabulary::from_corpus({doc}), schema, cfg.seed);
  std::vector<ad::Parameter*> params = model.parameters();
  ad::GradCheckOptions opt;
  opt.tolerance = tolerance;
  const ad::GradCheckReport rep = ad::grad_check(
      [&](ad::Graph& g) {
        DocumentForward f = model.forward(g, doc);
        return model.loss(f, doc);
      },
      params, opt);
  json entries = json::array();
  for (const auto& e : rep.entries)
    entries.push_back({{"parameter", e.name},
                       {"max_rel_error", e.max_rel_error},
                       {"index", e.worst_index},
                       {"analytic", e.analytic},
                       {"numeric", e.numeric}});
  const auto& w = rep.worst();
  std::cout << json{{"passed", rep.passed},
                    {"tolerance", rep.tolerance},
                    {"worst", {{"parameter", w.name}, {"max_rel_error", w.max_rel_error}}},
                    {"parameters", entries}}
            << "\n";
  if (!rep.passed) throw TrainingError("gradient check failed: worst parameter '" + w.name + "'");
  return 0;
}

int run_dump(const std::string& ckpt, const std::string& data, const std::string& doc_id, std::size_t s,
             std::size_t o) {
  const TrainedModel tm = load_checkpoint(ckpt);
  const Corpus corpus = load_for(tm, data);
  for (const Document& d : corpus)
    if (d.doc_id == doc_id) {
      const ContextDump cd = dump_context_weights(tm.model, d, s, o);
      std::cout << json{{"doc_id", cd.doc_id}, {"subject", cd.subject}, {"object", cd.object},
                        {"tokens", cd.tokens}, {"weights", cd.weights}}
                << "\n";
      return 0;
    }
  throw DataError("no document with doc_id '" + doc_id + "' in '" + data + "'");
}

void print_error(const std::string& kind, const std::string& message) {
  std::cerr << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"document-level relation extraction"};
  app.require_subcommand(1);

  std::string config, train_path, dev_path, out, ckpt, data, strategy, facts, doc_id;
  std::uint64_t seed = 1;
  std::size_t docs = 200, subject = 0, object = 1;
  double tolerance = 1e-4;
  SyntheticConfig sc;

  auto* tr = app.add_subcommand("train", "train a model and write a checkpoint");
  tr->add_option("--config", config, "training config file")->required()->check(CLI::ExistingFile);
  tr->add_option("--train", train_path, "training corpus (JSONL)")->required()->check(CLI::ExistingFile);
  tr->add_option("--dev", dev_path, "dev corpus (JSONL)")->required()->check(CLI::ExistingFile);
  tr->add_option("--out", out, "checkpoint path")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a corpus");
  ev->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  ev->add_option("--data", data)->required()->check(CLI::ExistingFile);
  ev->add_option("--strategy", strategy, "adaptive | global | per-class");
  ev->add_option("--train-facts", facts, "TSV facts or training corpus, enables Ign F1")->check(CLI::ExistingFile);
  ev->add_option("--out", out, "also write the report here");

  auto* pr = app.add_subcommand("predict", "write predictions for every ordered entity pair");
  pr->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  pr->add_option("--data", data)->required()->check(CLI::ExistingFile);
  pr->add_option("--out", out)->required();

  auto* gd = app.add_subcommand("gen-data", "generate a synthetic corpus");
  gd->add_option("--seed", seed)->required();
  gd->add_option("--docs", docs)->required();
  gd->add_option("--out", out)->required();
  gd->add_option("--multi-label-rate", sc.multi_label_rate);
  gd->add_option("--min-entities", sc.min_entities);
  gd->add_option("--max-entities", sc.max_entities);
  gd->add_option("--min-mentions", sc.min_mentions);
  gd->add_option("--max-mentions", sc.max_mentions);
  gd->add_option("--mention-ratio", sc.mention_ratio, "geometric ratio of mention counts, 1 = uniform");
  gd->add_option("--max-name-words", sc.max_name_words);
  gd->add_option("--name-pool", sc.name_pool_size);
  gd->add_option("--prefix", sc.doc_prefix);

  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the full model loss");
  gc->add_option("--config", config)->required()->check(CLI::ExistingFile);
  gc->add_option("--tolerance", tolerance);

  auto* dc = app.add_subcommand("dump-context", "context weights of one entity pair");
  dc->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  dc->add_option("--data", data)->required()->check(CLI::ExistingFile);
  dc->add_option("--doc", doc_id)->required();
  dc->add_option("--subject", subject)->required();
  dc->add_option("--object", object)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage_error", e.what());
    return 2;
  }

  try {
    if (*tr) return run_train(config, train_path, dev_path, out);
    if (*ev) return run_eval(ckpt, data, strategy, facts, out);
    if (*pr) return run_predict(ckpt, data, out);
    if (*gd) return run_gen(seed, docs, out, sc);
    if (*gc) return run_grad_check(config, tolerance);
    if (*dc) return run_dump(ckpt, data, doc_id, subject, object);
  } catch (const Error& e) {
    print_error(e.kind(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal_error", e.what());
    return 1;
  }
  return 0;
}
