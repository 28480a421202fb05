#pragma once

// AdamW with per-group learning rates, the warmup/decay schedule and
// global-norm gradient clipping.

#include <cstddef>
#include <span>
#include <vector>

#include "atlop/autodiff.hpp"

namespace atlop {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-6;
  double weight_decay = 0.01;
};

struct ParamGroup {
  std::vector<ad::Parameter*> params;
  double lr = 1e-3;
};

/// Decoupled weight decay applies to weight matrices only (rank >= 2);
/// biases and normalization gains are not decayed.
class AdamW {
 public:
  AdamW(std::vector<ParamGroup> groups, const AdamWConfig& config);

  /// One update with every group's rate multiplied by `lr_scale`.
  void step(double lr_scale);
  void zero_grad();
  std::size_t steps() const noexcept { return t_; }

 private:
  struct Slot {
    ad::Parameter* p;
    std::size_t group;
    Tensor m, v;
  };
  std::vector<ParamGroup> groups_;
  AdamWConfig config_;
  std::vector<Slot> slots_;
  std::size_t t_ = 0;
};

/// Multiplier at `step` of `total`: 0 -> 1 linearly over the first
/// round(warmup_fraction * total) steps, then linearly to 0 at `total`.
double lr_schedule(std::size_t step, std::size_t total, double warmup_fraction);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_grad_norm(std::span<ad::Parameter* const> params, double max_norm);

}  // namespace atlop
