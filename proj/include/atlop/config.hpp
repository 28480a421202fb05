#pragma once

// Training configuration as a flat "key = value" file. Lines starting with
// '#' and blank lines are ignored; unknown keys are errors.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "atlop/model.hpp"
#include "atlop/objective.hpp"

namespace atlop {

struct TrainConfig {
  double lr_encoder = 1e-3;
  double lr_head = 2e-3;
  std::size_t batch_size = 2;
  std::size_t epochs = 30;
  double warmup_fraction = 0.06;
  double clip_norm = 1.0;
  double dropout = 0.1;
  std::uint64_t seed = 1;
  LossKind loss = LossKind::Adaptive;
  bool context_pooling = true;
  PoolingKind pooling = PoolingKind::LogSumExp;
  bool entity_markers = true;
  std::size_t groups = 4;

  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t model_dim = 64;
  std::size_t ffn_dim = 128;
  std::size_t max_len = 256;
  bool truncate = false;

  double weight_decay = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-6;

  ThresholdStrategy strategy = ThresholdStrategy::Adaptive;
  std::size_t max_sweeps = 10;
  /// Stop after this many epochs without a dev improvement; 0 = never.
  std::size_t patience = 0;
  std::size_t threads = 1;
  /// Relation names; empty = taken from the training corpus.
  std::vector<std::string> relations;

  /// Throws ConfigError naming the offending key.
  void validate() const;
  ModelConfig model_config() const;
  bool operator==(const TrainConfig&) const = default;
};

/// key -> value text, in a fixed key order.
std::map<std::string, std::string> to_map(const TrainConfig& c);
TrainConfig from_map(const std::map<std::string, std::string>& kv);

TrainConfig parse_train_config(std::istream& in);
TrainConfig load_train_config(const std::filesystem::path& path);
void write_train_config(std::ostream& out, const TrainConfig& c);

}  // namespace atlop
