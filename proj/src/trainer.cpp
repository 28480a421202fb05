#include "atlop/trainer.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <memory>
#include <numeric>
#include <random>

#include "atlop/checkpoint.hpp"
#include "atlop/errors.hpp"
#include "atlop/kernels.hpp"
#include "atlop/optimizer.hpp"

namespace atlop {

namespace {

std::mt19937_64 seeded(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

// Runs body(i) for i in [0, n), in parallel when threads > 1; the first
// exception (lowest index) is rethrown.
template <class F>
void for_each_index(std::size_t n, std::size_t threads, F&& body) {
  std::vector<std::exception_ptr> errors(n);
#pragma omp parallel for schedule(dynamic) num_threads(static_cast<int>(threads)) if (threads > 1)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

std::vector<Tensor> snapshot(const Model& m) {
  std::vector<Tensor> out;
  for (const ad::Parameter* p : m.parameters()) out.push_back(p->value);
  return out;
}

void restore(Model& m, const std::vector<Tensor>& values) {
  auto ps = m.parameters();
  for (std::size_t i = 0; i < ps.size(); ++i) ps[i]->value = values[i];
}

double decision_f1(const Model& model, const Corpus& dev, const std::vector<DocumentScores>& scores,
                   const ThresholdConfig& th) {
  return evaluate_f1(make_predictions(model, dev, scores, th), dev).f1;
}

}  // namespace

void round_parameters_to_f32(Model& model) {
  for (ad::Parameter* p : model.parameters())
    for (double& v : p->value.data()) v = static_cast<double>(static_cast<float>(v));
}

std::vector<DocumentScores> score_corpus(const Model& model, const Corpus& corpus, std::size_t threads) {
  std::vector<DocumentScores> out(corpus.size());
  for_each_index(corpus.size(), threads, [&](std::size_t i) {
    ad::Graph g;
    DocumentForward f = model.forward(g, corpus[i]);
    out[i].pairs = std::move(f.pairs);
    out[i].logits = f.logits.value();
  });
  return out;
}

std::vector<ScoredPair> scored_pairs(const Model& model, const Corpus& corpus,
                                     const std::vector<DocumentScores>& scores) {
  std::vector<ScoredPair> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const std::vector<LabelSets> labels = model.pair_labels(corpus[i], scores[i].pairs);
    for (std::size_t p = 0; p < scores[i].pairs.size(); ++p)
      out.push_back(ScoredPair{model.probabilities(scores[i].logits.row(p)), labels[p].positives});
  }
  return out;
}

std::vector<PredictionRecord> make_predictions(const Model& model, const Corpus& corpus,
                                               const std::vector<DocumentScores>& scores,
                                               const ThresholdConfig& th) {
  th.validate(model.schema().size());
  std::vector<PredictionRecord> out;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const DocumentScores& ds = scores[i];
    for (std::size_t p = 0; p < ds.pairs.size(); ++p) {
      PredictionRecord rec{corpus[i].doc_id, ds.pairs[p].first, ds.pairs[p].second, {}};
      const auto row = ds.logits.row(p);
      switch (th.strategy) {
        case ThresholdStrategy::Adaptive:
          rec.relations = decide_adaptive(row);
          break;
        case ThresholdStrategy::Global:
          rec.relations = decide_global(model.probabilities(row), th.theta);
          break;
        case ThresholdStrategy::PerClass:
          rec.relations = decide_per_class(model.probabilities(row), th.per_class);
          break;
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

TunedThresholds tune_thresholds(std::span<const ScoredPair> pairs, std::size_t num_relations,
                                std::size_t max_sweeps) {
  TunedThresholds t;
  t.theta = tune_global_threshold(pairs);
  t.per_class = tune_per_class_thresholds(pairs, num_relations, max_sweeps).thresholds;
  return t;
}

TrainedModel train(const TrainConfig& config, const Corpus& train_docs, const Corpus& dev_docs,
                   const RelationSchema& schema, const EpochCallback& on_epoch) {
  config.validate();
  if (train_docs.empty()) throw DataError("training corpus is empty");
  if (dev_docs.empty()) throw DataError("dev corpus is empty");
  const RelationSchema rs = config.relations.empty() ? schema : RelationSchema(config.relations);
  for (const Document& d : train_docs) validate_document(d, rs);
  for (const Document& d : dev_docs) validate_document(d, rs);
  kernels::set_num_threads(static_cast<int>(config.threads));

  TrainedModel tm;
  tm.config = config;
  tm.config.relations = rs.names();
  tm.model = Model(config.model_config(), Vocabulary::from_corpus(train_docs), rs, config.seed);
  Model& model = tm.model;
  round_parameters_to_f32(model);

  std::vector<ad::Parameter*> params = model.parameters();
  const std::size_t n_enc = model.encoder_parameter_count();
  AdamWConfig ac{config.adam_beta1, config.adam_beta2, config.adam_eps, config.weight_decay};
  AdamW opt({ParamGroup{{params.begin(), params.begin() + static_cast<std::ptrdiff_t>(n_enc)}, config.lr_encoder},
             ParamGroup{{params.begin() + static_cast<std::ptrdiff_t>(n_enc), params.end()}, config.lr_head}},
            ac);
  opt.zero_grad();

  const std::size_t batches = (train_docs.size() + config.batch_size - 1) / config.batch_size;
  const std::size_t total_steps = batches * config.epochs;
  std::size_t step = 0;
  std::vector<Tensor> best;
  std::size_t since_best = 0;
  tm.best_dev_f1 = -1.0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(train_docs.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 shuffle_rng = seeded(config.seed, epoch, 0xD0C5);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(lo + config.batch_size, order.size());
      std::size_t total_pairs = 0;
      for (std::size_t i = lo; i < hi; ++i) {
        const std::size_t n = train_docs[order[i]].entities.size();
        total_pairs += n * (n - 1);
      }
      const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(total_pairs, 1));

      std::vector<std::unique_ptr<ad::Graph>> graphs(hi - lo);
      std::vector<double> losses(hi - lo, 0.0);
      for_each_index(hi - lo, config.threads, [&](std::size_t k) {
        const Document& doc = train_docs[order[lo + k]];
        graphs[k] = std::make_unique<ad::Graph>();
        std::mt19937_64 rng = seeded(config.seed, epoch, lo + k + 1);
        DocumentForward f = model.forward(*graphs[k], doc, ForwardOptions{true, &rng});
        ad::Var loss = ad::scale(model.loss(f, doc), inv);
        losses[k] = loss.value().item();
        if (!std::isfinite(losses[k]))
          throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step) + ", document '" + doc.doc_id + "'");
        graphs[k]->backward(loss, false);
      });
      for (auto& g : graphs) g->flush_parameter_grads();
      for (double l : losses) epoch_loss += l;

      clip_grad_norm(params, config.clip_norm);
      opt.step(lr_schedule(step, total_steps, config.warmup_fraction));
      opt.zero_grad();
      ++step;
    }

    // Dev evaluation on f32-rounded weights; training continues from the
    // unrounded ones.
    const std::vector<Tensor> live = snapshot(model);
    round_parameters_to_f32(model);
    const std::vector<DocumentScores> scores = score_corpus(model, dev_docs, config.threads);
    const std::vector<ScoredPair> sp = scored_pairs(model, dev_docs, scores);
    const TunedThresholds tuned = tune_thresholds(sp, rs.size(), config.max_sweeps);
    ThresholdConfig th{config.strategy, tuned.theta, tuned.per_class};
    const double f1 = decision_f1(model, dev_docs, scores, th);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(batches);
    rec.dev_f1 = f1;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    tm.history.push_back(rec);
    if (f1 > tm.best_dev_f1) {
      tm.best_dev_f1 = f1;
      tm.best_epoch = epoch;
      tm.thresholds = th;
      best = snapshot(model);
      since_best = 0;
    } else {
      ++since_best;
    }
    restore(model, live);
    if (on_epoch) on_epoch(rec);
    if (config.patience > 0 && since_best >= config.patience) break;
  }
  restore(model, best);
  for (ad::Parameter* p : params) p->zero_grad();
  return tm;
}

EvalReport evaluate(const TrainedModel& tm, const Corpus& corpus, std::optional<ThresholdStrategy> strategy,
                    const FactSet* train_facts) {
  for (const Document& d : corpus) validate_document(d, tm.model.schema());
  EvalReport r;
  ThresholdConfig th = tm.thresholds;
  if (strategy) th.strategy = *strategy;
  r.strategy = th.strategy;
  const std::vector<DocumentScores> scores = score_corpus(tm.model, corpus, tm.config.threads);
  r.predictions = make_predictions(tm.model, corpus, scores, th);
  r.f1 = evaluate_f1(r.predictions, corpus);
  if (train_facts) r.ign = evaluate_ign_f1(r.predictions, corpus, tm.model.schema(), *train_facts);
  r.buckets = bucket_by_entity_count(corpus, r.predictions);
  return r;
}

ContextDump dump_context_weights(const Model& model, const Document& doc, std::size_t subject, std::size_t object) {
  const std::size_t n = doc.entities.size();
  if (subject >= n || object >= n || subject == object)
    throw DataError("document '" + doc.doc_id + "' has no entity pair (" + std::to_string(subject) + ", " +
                    std::to_string(object) + ")");
  ad::Graph g;
  DocumentForward f = model.forward(g, doc);
  ad::Var sa = entity_attention(f.encoded.attention, f.anchors[subject]);
  ad::Var oa = entity_attention(f.encoded.attention, f.anchors[object]);
  PairContext pc = pair_context(f.encoded.hidden, sa, oa, f.encoded.length);
  ContextDump out;
  out.doc_id = doc.doc_id;
  out.subject = subject;
  out.object = object;
  out.tokens.assign(f.marked.tokens.begin(), f.marked.tokens.begin() + static_cast<std::ptrdiff_t>(f.encoded.length));
  const auto w = pc.weights.value().data();
  out.weights.assign(w.begin(), w.end());
  return out;
}

}  // namespace atlop
