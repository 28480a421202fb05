#pragma once

// Training loop, scoring, evaluation and prediction.

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "atlop/config.hpp"
#include "atlop/corpus.hpp"
#include "atlop/metrics.hpp"
#include "atlop/model.hpp"
#include "atlop/objective.hpp"
#include "atlop/thresholds.hpp"

namespace atlop {

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double dev_f1 = 0.0;
  double seconds = 0.0;   // wall clock, not part of equality
  bool operator==(const EpochRecord& o) const {
    return epoch == o.epoch && train_loss == o.train_loss && dev_f1 == o.dev_f1;
  }
};

/// A trained model with everything evaluation needs.
struct TrainedModel {
  TrainConfig config;
  Model model;
  /// Strategy from the config; theta and per-class values tuned on dev at
  /// the best epoch (present whatever the strategy, for overrides).
  ThresholdConfig thresholds;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_dev_f1 = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Schema from config.relations when given, else `schema`. Parameters are
/// kept rounded to 32-bit floats at every epoch boundary so that the best
/// epoch can be stored and reloaded exactly. Throws TrainingError on a
/// non-finite loss.
TrainedModel train(const TrainConfig& config, const Corpus& train_docs, const Corpus& dev_docs,
                   const RelationSchema& schema, const EpochCallback& on_epoch = {});

/// Logits of every ordered pair of one document.
struct DocumentScores {
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  Tensor logits;  // [P x (|R| + 1)]
};

/// Dropout off; documents scored in parallel when threads > 1.
std::vector<DocumentScores> score_corpus(const Model& model, const Corpus& corpus, std::size_t threads = 1);

/// Probability rows and gold sets of every pair, for threshold tuning.
std::vector<ScoredPair> scored_pairs(const Model& model, const Corpus& corpus,
                                     const std::vector<DocumentScores>& scores);

std::vector<PredictionRecord> make_predictions(const Model& model, const Corpus& corpus,
                                               const std::vector<DocumentScores>& scores,
                                               const ThresholdConfig& thresholds);

struct TunedThresholds {
  double theta = 0.5;
  std::vector<double> per_class;
};
TunedThresholds tune_thresholds(std::span<const ScoredPair> pairs, std::size_t num_relations,
                                std::size_t max_sweeps);

struct EvalReport {
  ThresholdStrategy strategy = ThresholdStrategy::Adaptive;
  F1Report f1;
  std::optional<IgnF1Report> ign;
  std::vector<BucketRow> buckets;
  std::vector<PredictionRecord> predictions;
};

EvalReport evaluate(const TrainedModel& tm, const Corpus& corpus, std::optional<ThresholdStrategy> strategy = {},
                    const FactSet* train_facts = nullptr);

/// Context weights a of one pair over the encoded (marked) tokens.
struct ContextDump {
  std::string doc_id;
  std::size_t subject = 0;
  std::size_t object = 0;
  std::vector<std::string> tokens;
  std::vector<double> weights;
};

/// Throws DataError when the pair does not exist in `doc`.
ContextDump dump_context_weights(const Model& model, const Document& doc, std::size_t subject, std::size_t object);

}  // namespace atlop
