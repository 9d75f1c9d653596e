#pragma once

// Probabilistic models p(w | theta) of softmax weight rows, fitted to the
// base-class weights and used as priors on the weights of new classes.

#include "kshot/data.hpp"

#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace kshot {

enum class CovKind { isotropic, diagonal, full };
enum class LaplaceKind { diagonal, isotropic };

const char* to_string(CovKind kind) noexcept;
const char* to_string(LaplaceKind kind) noexcept;
CovKind parse_cov_kind(const std::string& text);

/// Normal-inverse-Wishart hyperparameters (mu, kappa, Lambda, nu).
struct NIWParams {
  Vector mu;
  double kappa = 1;
  Matrix lambda;
  double nu = 0;

  Eigen::Index dim() const noexcept { return mu.size(); }
  /// Throws ConfigError unless kappa > 0, nu > p - 1 and lambda is SPD.
  void validate() const;
};

class GaussianPrior {
 public:
  static GaussianPrior isotropic(Vector mean, double variance);
  static GaussianPrior diagonal(Vector mean, Vector variances);
  static GaussianPrior full(Vector mean, Matrix covariance);

  CovKind kind() const noexcept { return kind_; }
  const Vector& mean() const noexcept { return mean_; }
  Eigen::Index dim() const noexcept { return mean_.size(); }
  /// Isotropic variance (kind == isotropic only).
  double variance() const;
  /// Per-dimension variances (diagonal of the covariance for every kind).
  Vector variances() const;
  /// Dense covariance for every kind.
  Matrix covariance() const;

  /// log N(w | mean, cov); adds d/dw to *grad when non-null.
  double log_density(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> grad) const;
  double log_density(const Eigen::Ref<const Vector>& w) const;
  /// Value of the log-density at the mean.
  double log_normalizer() const noexcept { return log_norm_; }

 private:
  GaussianPrior(CovKind kind, Vector mean) : kind_(kind), mean_(std::move(mean)) {}

  CovKind kind_;
  Vector mean_;
  Vector var_;  // isotropic: size 1; diagonal: size p
  Matrix cov_;  // full only
  Eigen::LLT<Matrix> chol_;
  double log_norm_ = 0;
};

/// Multivariate Student-t: the NIW posterior predictive.
class StudentTPredictive {
 public:
  StudentTPredictive(double dof, Vector location, Matrix scale);

  double dof() const noexcept { return dof_; }
  const Vector& location() const noexcept { return location_; }
  const Matrix& scale() const noexcept { return scale_; }
  Eigen::Index dim() const noexcept { return location_.size(); }

  double log_density(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> grad) const;
  double log_density(const Eigen::Ref<const Vector>& w) const;

 private:
  double dof_;
  Vector location_;
  Matrix scale_;
  Eigen::LLT<Matrix> chol_;
  double log_norm_ = 0;
};

class GMMPrior {
 public:
  GMMPrior(std::vector<double> weights, std::vector<GaussianPrior> components);

  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<GaussianPrior>& components() const noexcept { return components_; }
  Eigen::Index dim() const noexcept { return components_.front().dim(); }
  CovKind kind() const noexcept { return components_.front().kind(); }

  double log_density(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> grad) const;
  double log_density(const Eigen::Ref<const Vector>& w) const;
  /// Posterior component probabilities for one row.
  Vector responsibilities(const Eigen::Ref<const Vector>& w) const;

 private:
  std::vector<double> weights_;
  std::vector<GaussianPrior> components_;
};

/// Product of independent Laplace densities. Isotropic models carry a single
/// location/scale broadcast over all dimensions.
class LaplacePrior {
 public:
  static LaplacePrior diagonal(Vector location, Vector scale);
  static LaplacePrior isotropic(double location, double scale, Eigen::Index dim);

  LaplaceKind kind() const noexcept { return kind_; }
  const Vector& location() const noexcept { return location_; }
  const Vector& scale() const noexcept { return scale_; }
  Eigen::Index dim() const noexcept { return location_.size(); }

  /// At a kink (w_j == location_j) the gradient uses the subgradient 0.
  double log_density(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> grad) const;
  double log_density(const Eigen::Ref<const Vector>& w) const;

 private:
  LaplacePrior(LaplaceKind kind, Vector location, Vector scale);

  LaplaceKind kind_;
  Vector location_;
  Vector scale_;
};

using WeightPrior = std::variant<GaussianPrior, StudentTPredictive, GMMPrior, LaplacePrior>;

Eigen::Index prior_dim(const WeightPrior& prior);
std::string prior_name(const WeightPrior& prior);
/// Starting point for k-shot optimisation: the prior's location, or the mean
/// of the heaviest mixture component.
Vector prior_anchor(const WeightPrior& prior);

/// Sum over the rows of W of log p(w_c | theta). When `grad` is non-null it
/// receives the gradient, shaped like W.
double log_prior_density(const WeightPrior& prior, const Matrix& w, Matrix* grad);

struct PriorDensity {
  double value;
  Matrix gradient;
};
PriorDensity log_prior_density(const WeightPrior& prior, const Matrix& w);

// ---------------------------------------------------------------------------
// Normal-inverse-Wishart conjugate model

/// Conjugate update with the rows of `rows` (which may be empty). The scatter
/// S is the sum of outer products of the rows about their mean.
NIWParams niw_posterior(const NIWParams& prior, const Matrix& rows);
NIWParams niw_posterior(const NIWParams& prior, const WeightMatrix& wtilde);

/// Joint NIW mode: mean mu_N, covariance Lambda_N / (nu_N + p + 2).
GaussianPrior niw_map(const NIWParams& params);

/// Posterior predictive t_{nu-p+1}(mu, Lambda (kappa+1) / (kappa (nu-p+1))).
StudentTPredictive student_t_predictive(const NIWParams& params);

/// Overrides for the data-dependent NIW defaults.
struct NiwHyperConfig {
  std::optional<double> kappa0;        // default 0.01
  std::optional<double> nu0_offset;    // nu0 = p + offset, default 2
  std::optional<double> lambda_scale;  // Lambda0 = scale * p * pooled_var * I, default 1
};

/// mu0 = column means, kappa0 = 0.01, nu0 = p + 2, Lambda0 = p * pooled_var * I.
NIWParams default_niw_hyper(const Matrix& wtilde, const NiwHyperConfig& overrides = {});

// ---------------------------------------------------------------------------
// Maximum-likelihood fits (population variance convention, divisor N)

/// Pooled variance of all entries about their column means.
double pooled_variance(const Matrix& rows);

GaussianPrior fit_gaussian(const Matrix& rows, CovKind kind);

/// Relative jitter added to full covariances fitted with N <= p.
inline constexpr double kFullCovJitter = 1e-6;
/// Per-dimension floor on mixture component variances.
inline constexpr double kGmmVarianceFloor = 1e-8;

struct GmmOptions {
  int components = 1;
  CovKind kind = CovKind::isotropic;
  /// Hard initial assignment of every row to a component (0..S-1). Empty means
  /// random initialisation from `seed`.
  std::vector<int> label_groups;
  std::uint64_t seed = 0;
  int max_iters = 200;
  /// Stop when the mean per-row log-likelihood improves by less than tol.
  double tol = 1e-8;
};

struct GmmFit {
  GMMPrior prior;
  /// Total log-likelihood after every E-step, starting with the initial model.
  std::vector<double> loglik_trace;
  /// Responsibilities (N x S) of the first E-step.
  Matrix first_responsibilities;
  int restarts = 0;
  bool converged = false;
};

/// EM for a Gaussian mixture. A component that empties triggers a restart
/// with a fresh random initialisation (at most 3), then NumericError.
GmmFit fit_gmm(const Matrix& rows, const GmmOptions& options);

/// Median (midpoint for even counts) and mean absolute deviation.
LaplacePrior fit_laplace(const Matrix& rows, LaplaceKind kind);

double median(std::vector<double> values);

// ---------------------------------------------------------------------------
// Model specifications and held-out evaluation

struct PriorSpec {
  enum class Family { gaussian, niw_map, niw_integrated, gmm, laplace };
  Family family = Family::gaussian;
  CovKind cov = CovKind::isotropic;
  LaplaceKind laplace = LaplaceKind::diagonal;
  int components = 1;
  NiwHyperConfig niw;
  int gmm_max_iters = 200;
};

/// Text form: gauss:iso|diag|full, niw-map[:iso|diag|full], niw-integrated,
/// gmm:S:iso|diag|full, laplace:diag|iso.
PriorSpec parse_prior_spec(const std::string& text);
std::string to_string(const PriorSpec& spec);

WeightPrior fit_prior(const Matrix& wtilde, const PriorSpec& spec, std::uint64_t seed = 0);

struct HeldoutResult {
  double mean = 0;
  double sem = 0;
  int n_used = 0;
  int n_skipped = 0;
  bool warning = false;  // more than 20% of splits skipped
  std::vector<double> per_split;
};

/// For each seeded split, fits on all but n_heldout rows and sums the
/// log-density of the held-out rows. Mean and standard error over splits.
HeldoutResult heldout_logprob(const Matrix& wtilde, const PriorSpec& spec, int n_heldout,
                              int n_splits, std::uint64_t seed);

}  // namespace kshot
