#pragma once

// Named k-shot methods as used by the benchmark harness and the CLI.
//
//   <prior>[:hmc]      prior-based MAP (or HMC), <prior> as in parse_prior_spec
//   logreg:mle | logreg:cv | logreg:fixed:<C> | logreg:wtilde[:zero]
//   nn | oracle | uniform

#include "kshot/inference.hpp"
#include "kshot/priors.hpp"

#include <string>

namespace kshot {

struct MethodSpec {
  enum class Kind { prior_map, prior_hmc, logreg, nearest_neighbor, oracle, uniform };
  enum class LogRegMode { mle, cross_validated, fixed, from_weights };

  Kind kind = Kind::prior_map;
  PriorSpec prior;
  LogRegMode logreg = LogRegMode::mle;
  double c = 1.0;                       // LogRegMode::fixed
  RegCenter center = RegCenter::mean;   // LogRegMode::from_weights

  bool needs_wtilde() const noexcept;
  /// Whether new-class rows can be learned next to fixed old rows.
  bool supports_online() const noexcept;
};

MethodSpec parse_method_spec(const std::string& text);
std::string to_string(const MethodSpec& spec);

struct MethodOptions {
  OptimizerConfig optimizer;
  HmcConfig hmc;
  LogRegCrossValidated cv;
};

/// A method with everything that depends only on the base weights (the fitted
/// prior, the regularisation constant) computed once up front.
class PreparedMethod {
 public:
  /// `wtilde` may be null for methods that do not use it.
  PreparedMethod(MethodSpec spec, const Matrix* wtilde, MethodOptions options = {}, std::uint64_t seed = 0);

  const MethodSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return name_; }
  const std::optional<WeightPrior>& prior() const noexcept { return prior_; }
  std::optional<double> c() const noexcept { return c_; }

  /// Query-set class probabilities (n_query x way) for one episode.
  /// `task_seed` feeds stochastic methods.
  Matrix solve(const Episode& episode, std::uint64_t task_seed) const;

  /// Weights of `way` new classes learned from (features, targets), with the
  /// softmax optionally shared with `fixed_rows`. Throws ConfigError for
  /// methods without weights (nn, oracle, uniform).
  Predictor learn(const Matrix& features, std::span<const int> targets, int way, const Matrix* fixed_rows,
                  std::uint64_t task_seed) const;

 private:
  MethodSpec spec_;
  std::string name_;
  MethodOptions options_;
  std::optional<WeightPrior> prior_;
  std::optional<double> c_;
};

}  // namespace kshot
