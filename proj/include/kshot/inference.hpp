#pragma once

// k-shot learning and testing: the weight posterior of the new classes under
// a transferred prior, its MAP estimate or HMC samples, the predictive
// distribution, and the baselines it is compared against.

#include "kshot/data.hpp"
#include "kshot/optim.hpp"
#include "kshot/priors.hpp"

#include <optional>
#include <variant>

namespace kshot {

/// Prior on the new rows plus the k-shot support set. When `fixed_rows` is
/// set, those (old-class) weights join the softmax normaliser but are not
/// learned; targets always index the new rows.
struct PosteriorSpec {
  WeightPrior prior;
  Matrix features;           // N x p; may have zero rows
  std::vector<int> targets;  // 0..way-1
  int way = 0;
  std::optional<Matrix> fixed_rows;

  /// Labels of `support` mapped to positions in its sorted class ids.
  static PosteriorSpec from_support(WeightPrior prior, const FeatureTable& support);
  static PosteriorSpec from_episode(WeightPrior prior, const Episode& episode);

  Eigen::Index dim() const noexcept { return features.cols(); }
  void validate() const;
};

/// -log p(W) - sum_n log softmax([fixed; W] x_n)[y_n], with its gradient
/// (shaped like W) when `grad` is non-null.
double neg_log_posterior(const PosteriorSpec& spec, const Matrix& w, Matrix* grad);

struct OptimizerConfig {
  enum class Init { prior_mean, zeros };
  int max_iters = 1000;
  double grad_tolerance = 1e-6;
  int history = 10;
  Init init = Init::prior_mean;
};

struct MapResult {
  Matrix weights;  // way x p
  double value = 0;
  double grad_norm = 0;
  int iterations = 0;
  LbfgsStatus status = LbfgsStatus::max_iters;
  std::vector<LbfgsTraceEntry> trace;

  bool converged() const noexcept { return status == LbfgsStatus::converged; }
};

MapResult map_kshot(const PosteriorSpec& spec, const OptimizerConfig& cfg = {});

struct HmcConfig {
  int n_samples = 1000;
  int n_warmup = 1000;
  int leapfrog_steps = 20;
  double target_accept = 0.8;
  /// Uniform relative jitter of the step size on every transition.
  double step_jitter = 0.5;
  /// Start from the MAP estimate (otherwise the prior anchor).
  bool init_from_map = true;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Averaged softmax predictor: one matrix for a point estimate, many for draws.
struct Predictor {
  std::vector<Matrix> weights;

  static Predictor point(Matrix w);
  bool is_point() const noexcept { return weights.size() == 1; }
};

struct HmcResult {
  Predictor samples;
  double acceptance_rate = 0;
  double step_size = 0;
};

/// Leapfrog HMC with dual-averaging step-size adaptation during warmup.
/// Throws NumericError if the post-warmup acceptance rate is below 0.1.
HmcResult hmc_kshot(const PosteriorSpec& spec, const HmcConfig& cfg);

/// Rows: softmax(W x) for a point predictor, the mean over draws otherwise.
Matrix predict(const Predictor& predictor, const Matrix& features);
Matrix predict(const Predictor& predictor, const FeatureTable& query);

enum class RegCenter { mean, zero };

/// C_reg = 2 * (empirical variance of all entries about `center`).
double reg_from_weights(const Matrix& wtilde, RegCenter center = RegCenter::mean);

struct LogRegMle {};
struct LogRegFixed {
  double c = 1.0;
};
struct LogRegCrossValidated {
  int max_folds = 5;
  std::vector<double> grid;  // empty means the default 1e-5 ... 10 grid
};
using LogRegReg = std::variant<LogRegMle, LogRegFixed, LogRegCrossValidated>;

/// Seven log-spaced values 1e-5, 1e-4, ..., 10.
std::vector<double> default_c_grid();

struct LogRegResult {
  Matrix weights;          // way x p
  std::optional<double> c; // regularisation constant used (none for MLE)
  bool warning = false;    // optimiser did not converge
  std::vector<double> cv_accuracy;  // per grid value, cross-validated runs only
};

/// Softmax regression minimising sum_n CE + ||W||^2 / C, optionally sharing
/// the softmax with fixed rows (targets index the learned rows).
LogRegResult logreg_fit(const Matrix& features, std::span<const int> targets, int way, const LogRegReg& reg,
                        const OptimizerConfig& cfg = {}, const Matrix* fixed_rows = nullptr);
LogRegResult logreg_baseline(const FeatureTable& support, const LogRegReg& reg, const OptimizerConfig& cfg = {});

struct NearestNeighborResult {
  std::vector<int> predicted;  // positions in the support's sorted class ids
  Matrix probabilities;        // one-hot
};

/// Cosine nearest neighbour over the support rows; ties go to the lowest class.
NearestNeighborResult nearest_neighbor(const FeatureTable& support, const Matrix& query);

}  // namespace kshot
