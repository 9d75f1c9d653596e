#pragma once

// Episodic testing protocol and calibration metrics.

#include "kshot/methods.hpp"

#include <span>
#include <string>
#include <vector>

namespace kshot {

struct Protocol {
  int n_tasks = 600;
  int way = 5;
  std::vector<int> shots{1, 5};
  int n_query = 15;
  std::uint64_t base_seed = 0;

  void validate() const;
  /// Throws ConfigError unless every class-count / row-count requirement holds.
  void check_feasible(const FeatureTable& novel) const;
};

/// The seed/stream pair of task `t`; identical for every method and shot count.
Episode protocol_episode(const FeatureTable& novel, const Protocol& protocol, int k, int task);

struct CalibrationBin {
  double mean_confidence = 0;
  double accuracy = 0;
  long count = 0;
  double lower = 0;  // bin covers (lower, upper]; the first bin also holds 0
  double upper = 0;
};

/// Bin of a confidence among n_bins equal-width, right-inclusive bins.
int confidence_bin(double confidence, int n_bins);

/// Throws ConfigError naming the first row that is not a distribution
/// (negative entry, or sum off by more than 1e-9).
void check_distribution_rows(const Matrix& probs);

std::vector<CalibrationBin> calibration_curve(const Matrix& probs, std::span<const int> labels, int n_bins = 10);
/// Sum over bins of (count/N) |accuracy - confidence|.
double ece(const Matrix& probs, std::span<const int> labels, int n_bins = 10);
double ece_from_bins(const std::vector<CalibrationBin>& bins);

/// Probabilities are clamped below at this value before taking logs.
inline constexpr double kNllClamp = 1e-12;
double nll(const Matrix& probs, std::span<const int> labels);
double accuracy(const Matrix& probs, std::span<const int> labels);

/// Mean with its standard error (sample standard deviation / sqrt(n)).
struct Estimate {
  double mean = 0;
  double sem = 0;
};
Estimate estimate(std::span<const double> values);

struct CalibrationReport {
  Estimate accuracy;  // pooled over query points; sem over per-task means
  Estimate nll;
  double ece = 0;
  std::vector<CalibrationBin> bins;
  long n_points = 0;
  int n_tasks = 0;
  int n_failed = 0;
  std::vector<std::string> failures;  // first few failure messages
};

/// Pools per-task predictions into one report.
CalibrationReport make_report(const std::vector<Matrix>& probs, const std::vector<std::vector<int>>& labels,
                              int n_bins, int n_failed = 0);

struct EvalOptions {
  MethodOptions method;
  int n_bins = 10;
  int workers = 1;
};

struct BenchmarkEntry {
  std::string method;
  int k = 0;
  std::optional<double> c;  // regularisation constant, logistic regression only
  CalibrationReport report;
};

struct BenchmarkResult {
  Protocol protocol;
  std::vector<BenchmarkEntry> entries;  // method-major, then k

  const BenchmarkEntry& at(const std::string& method, int k) const;
};

/// Runs every method on the same seeded episodes. `wtilde` (base weights,
/// C~ x p) may be null when no method needs it. Failed episodes are skipped
/// and counted.
BenchmarkResult run_benchmark(const FeatureTable& novel, const Matrix* wtilde, const std::vector<MethodSpec>& methods,
                              const Protocol& protocol, const EvalOptions& options = {});

struct SweepResult {
  BenchmarkResult grid;        // one logreg:fixed:C entry per grid value
  BenchmarkResult from_weights;  // logreg:wtilde
};

SweepResult reg_sweep(const FeatureTable& novel, const Matrix& wtilde, const Protocol& protocol,
                      const std::vector<double>& grid, const EvalOptions& options = {});

struct OnlineOptions {
  /// Learn new rows without the old rows in the softmax (ablation).
  bool only_new = false;
  /// Score with the new-class logits forced to -infinity.
  bool mask_new_rows = false;
};

struct OnlineReport {
  Estimate acc_all;
  Estimate acc_old;
  Estimate acc_new;
  int n_episodes = 0;
  int n_failed = 0;
};

/// Joint (old + new)-way evaluation: per episode, new-class weights are
/// learned with the old rows fixed in the softmax, then old test points and
/// new query points are scored with the combined classifier.
OnlineReport online_eval(const WeightMatrix& wtilde, const MethodSpec& method, const FeatureTable& base_test,
                         const FeatureTable& novel, const Protocol& protocol, int k, const OnlineOptions& online = {},
                         const EvalOptions& options = {});

}  // namespace kshot
