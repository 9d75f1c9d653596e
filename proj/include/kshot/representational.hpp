#pragma once

#include "kshot/data.hpp"
#include "kshot/optim.hpp"

#include <optional>

namespace kshot {

struct TrainConfig {
  double l2_strength = 1e-4;
  int max_iters = 1000;
  double grad_tolerance = 1e-6;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainResult {
  WeightMatrix weights;
  LbfgsStatus status;
  double final_loss;
  double grad_norm;
  std::vector<LbfgsTraceEntry> log;

  bool converged() const noexcept { return status == LbfgsStatus::converged; }
};

/// Mean softmax cross-entropy + (l2_strength / 2) ||W||^2 over the base
/// table; value and gradient w.r.t. the C x p weights.
double base_training_loss(const FeatureTable& base, const Matrix& w, double l2_strength,
                          Matrix* grad);

/// Trains the bias-free linear softmax head from W = 0 with L-BFGS.
/// Rows of the result follow base.class_ids().
TrainResult train_linear_softmax(const FeatureTable& base, const TrainConfig& cfg);

struct SyntheticWorldConfig {
  int p = 16;
  int n_base = 40;
  int n_novel = 20;
  int per_class = 100;
  /// Extra held-out examples per base class (online protocol); 0 disables.
  int heldout_per_class = 0;
  Vector weight_mean;  // empty means zeros
  double weight_var = 1.0;
  double noise_var = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticWorld {
  FeatureTable base;
  FeatureTable novel;
  WeightMatrix true_weights;  // base classes first, then novel
  std::optional<FeatureTable> base_test;
};

/// Class weights w_c ~ N(weight_mean, weight_var I); features x ~ N(w_c,
/// noise_var I). Base classes get ids 0..n_base-1, novel ids follow.
SyntheticWorld generate_synthetic_world(const SyntheticWorldConfig& cfg);

}  // namespace kshot
