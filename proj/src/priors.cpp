#include "kshot/priors.hpp"

#include "kshot/error.hpp"
#include "kshot/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace kshot {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

double log_sum_exp(const Vector& v) {
  const double top = v.maxCoeff();
  if (!std::isfinite(top)) return top;
  return top + std::log((v.array() - top).exp().sum());
}

Eigen::LLT<Matrix> checked_llt(const Matrix& m, const std::string& what) {
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw NumericError(what + " is not symmetric");
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericError(what + " is not positive definite");
  return llt;
}

double log_det(const Eigen::LLT<Matrix>& llt) {
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Vector column_means(const Matrix& rows) { return rows.colwise().mean().transpose(); }

}  // namespace

const char* to_string(CovKind kind) noexcept {
  switch (kind) {
    case CovKind::isotropic: return "iso";
    case CovKind::diagonal: return "diag";
    case CovKind::full: return "full";
  }
  return "?";
}

const char* to_string(LaplaceKind kind) noexcept {
  return kind == LaplaceKind::diagonal ? "diag" : "iso";
}

CovKind parse_cov_kind(const std::string& text) {
  if (text == "iso" || text == "isotropic") return CovKind::isotropic;
  if (text == "diag" || text == "diagonal") return CovKind::diagonal;
  if (text == "full") return CovKind::full;
  throw ConfigError("unknown covariance kind '" + text + "' (expected iso, diag or full)");
}

void NIWParams::validate() const {
  const auto p = dim();
  if (p < 1) throw ConfigError("NIW: empty mean");
  if (lambda.rows() != p || lambda.cols() != p) throw ConfigError("NIW: lambda must be p x p");
  if (!(kappa > 0)) throw ConfigError("NIW: kappa must be > 0");
  if (!(nu > static_cast<double>(p) - 1))
    throw ConfigError("NIW: nu = " + std::to_string(nu) + " must exceed p - 1 = " + std::to_string(p - 1));
  if ((lambda - lambda.transpose()).cwiseAbs().maxCoeff() > 1e-12)
    throw ConfigError("NIW: lambda is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(lambda, Eigen::EigenvaluesOnly);
  if (!(eig.eigenvalues().minCoeff() > 0)) throw ConfigError("NIW: lambda is not positive definite");
}

// ---------------------------------------------------------------------------

GaussianPrior GaussianPrior::isotropic(Vector mean, double variance) {
  if (!(variance > 0) || !std::isfinite(variance))
    throw NumericError("gaussian: isotropic variance must be > 0");
  GaussianPrior g(CovKind::isotropic, std::move(mean));
  g.var_ = Vector::Constant(1, variance);
  g.log_norm_ = -0.5 * static_cast<double>(g.dim()) * (kLog2Pi + std::log(variance));
  return g;
}

GaussianPrior GaussianPrior::diagonal(Vector mean, Vector variances) {
  if (variances.size() != mean.size()) throw ConfigError("gaussian: variance length mismatch");
  for (Eigen::Index j = 0; j < variances.size(); ++j)
    if (!(variances(j) > 0) || !std::isfinite(variances(j)))
      throw NumericError("gaussian: variance of dimension " + std::to_string(j) + " must be > 0");
  GaussianPrior g(CovKind::diagonal, std::move(mean));
  g.var_ = std::move(variances);
  g.log_norm_ = -0.5 * (static_cast<double>(g.dim()) * kLog2Pi + g.var_.array().log().sum());
  return g;
}

GaussianPrior GaussianPrior::full(Vector mean, Matrix covariance) {
  if (covariance.rows() != mean.size() || covariance.cols() != mean.size())
    throw ConfigError("gaussian: covariance must be p x p");
  GaussianPrior g(CovKind::full, std::move(mean));
  g.chol_ = checked_llt(covariance, "gaussian covariance");
  g.cov_ = std::move(covariance);
  g.log_norm_ = -0.5 * (static_cast<double>(g.dim()) * kLog2Pi + log_det(g.chol_));
  return g;
}

double GaussianPrior::variance() const {
  if (kind_ != CovKind::isotropic) throw ConfigError("gaussian: not isotropic");
  return var_(0);
}

Vector GaussianPrior::variances() const {
  switch (kind_) {
    case CovKind::isotropic: return Vector::Constant(dim(), var_(0));
    case CovKind::diagonal: return var_;
    case CovKind::full: return cov_.diagonal();
  }
  return {};
}

Matrix GaussianPrior::covariance() const {
  if (kind_ == CovKind::full) return cov_;
  return variances().asDiagonal();
}

double GaussianPrior::log_density(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> grad) const {
  const Vector d = w - mean_;
  switch (kind_) {
    case CovKind::isotropic:
      grad = -d / var_(0);
      return log_norm_ - 0.5 * d.squaredNorm() / var_(0);
    case CovKind::diagonal:
      grad = -(d.array() / var_.array()).matrix();
      return log_norm_ - 0.5 * (d.array().square() / var_.array()).sum();
    case CovKind::full: {
      const Vector solved = chol_.solve(d);
      grad = -solved;
      return log_norm_ - 0.5 * d.dot(solved);
    }
  }
  return 0;
}

double GaussianPrior::log_density(const Eigen::Ref<const Vector>& w) const {
  Vector scratch(dim());
  return log_density(w, scratch);
}

// ---------------------------------------------------------------------------

StudentTPredictive::StudentTPredictive(double dof, Vector location, Matrix scale)
    : dof_(dof), location_(std::move(location)), scale_(std::move(scale)) {
  if (!(dof_ > 0)) throw ConfigError("student-t: dof must be > 0");
  if (scale_.rows() != dim() || scale_.cols() != dim()) throw ConfigError("student-t: scale must be p x p");
  chol_ = checked_llt(scale_, "student-t scale");
  const double p = static_cast<double>(dim());
  log_norm_ = std::lgamma(0.5 * (dof_ + p)) - std::lgamma(0.5 * dof_) -
              0.5 * p * std::log(dof_ * std::numbers::pi) - 0.5 * log_det(chol_);
}

double StudentTPredictive::log_density(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> grad) const {
  const Vector d = w - location_;
  const Vector solved = chol_.solve(d);
  const double maha = d.dot(solved);
  const double p = static_cast<double>(dim());
  grad = -((dof_ + p) / (dof_ + maha)) * solved;
  return log_norm_ - 0.5 * (dof_ + p) * std::log1p(maha / dof_);
}

double StudentTPredictive::log_density(const Eigen::Ref<const Vector>& w) const {
  Vector scratch(dim());
  return log_density(w, scratch);
}

// ---------------------------------------------------------------------------

GMMPrior::GMMPrior(std::vector<double> weights, std::vector<GaussianPrior> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (components_.empty()) throw ConfigError("gmm: needs at least one component");
  if (weights_.size() != components_.size()) throw ConfigError("gmm: weight/component count mismatch");
  double total = 0;
  for (double pi : weights_) {
    if (!(pi >= 0)) throw ConfigError("gmm: negative mixture weight");
    total += pi;
  }
  if (std::abs(total - 1.0) > 1e-12) throw ConfigError("gmm: mixture weights must sum to 1");
  for (const auto& c : components_)
    if (c.dim() != dim() || c.kind() != kind())
      throw ConfigError("gmm: components must share dimension and covariance kind");
}

Vector GMMPrior::responsibilities(const Eigen::Ref<const Vector>& w) const {
  const auto s = static_cast<Eigen::Index>(components_.size());
  Vector logs(s);
  for (Eigen::Index i = 0; i < s; ++i) {
    const double pi = weights_[static_cast<std::size_t>(i)];
    logs(i) = pi > 0 ? std::log(pi) + components_[static_cast<std::size_t>(i)].log_density(w)
                     : -std::numeric_limits<double>::infinity();
  }
  return (logs.array() - log_sum_exp(logs)).exp();
}

double GMMPrior::log_density(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> grad) const {
  if (components_.size() == 1) return components_.front().log_density(w, grad);
  const auto s = static_cast<Eigen::Index>(components_.size());
  Vector logs(s);
  Matrix grads(dim(), s);
  for (Eigen::Index i = 0; i < s; ++i) {
    const double pi = weights_[static_cast<std::size_t>(i)];
    Vector g(dim());
    logs(i) = pi > 0 ? std::log(pi) + components_[static_cast<std::size_t>(i)].log_density(w, g)
                     : -std::numeric_limits<double>::infinity();
    grads.col(i) = pi > 0 ? g : Vector::Zero(dim());
  }
  const double total = log_sum_exp(logs);
  grad = grads * (logs.array() - total).exp().matrix();
  return total;
}

double GMMPrior::log_density(const Eigen::Ref<const Vector>& w) const {
  Vector scratch(dim());
  return log_density(w, scratch);
}

// ---------------------------------------------------------------------------

LaplacePrior::LaplacePrior(LaplaceKind kind, Vector location, Vector scale)
    : kind_(kind), location_(std::move(location)), scale_(std::move(scale)) {
  for (Eigen::Index j = 0; j < scale_.size(); ++j)
    if (!(scale_(j) > 0) || !std::isfinite(scale_(j)))
      throw NumericError("laplace: scale of dimension " + std::to_string(j) + " must be > 0");
}

LaplacePrior LaplacePrior::diagonal(Vector location, Vector scale) {
  if (location.size() != scale.size() || location.size() < 1)
    throw ConfigError("laplace: location/scale length mismatch");
  return LaplacePrior(LaplaceKind::diagonal, std::move(location), std::move(scale));
}

LaplacePrior LaplacePrior::isotropic(double location, double scale, Eigen::Index dim) {
  if (dim < 1) throw ConfigError("laplace: dimension must be >= 1");
  return LaplacePrior(LaplaceKind::isotropic, Vector::Constant(dim, location), Vector::Constant(dim, scale));
}

double LaplacePrior::log_density(const Eigen::Ref<const Vector>& w, Eigen::Ref<Vector> grad) const {
  const Eigen::ArrayXd d = (w - location_).array();
  grad = (-d.sign() / scale_.array()).matrix();
  return -((2.0 * scale_.array()).log() + d.abs() / scale_.array()).sum();
}

double LaplacePrior::log_density(const Eigen::Ref<const Vector>& w) const {
  Vector scratch(dim());
  return log_density(w, scratch);
}

// ---------------------------------------------------------------------------

Eigen::Index prior_dim(const WeightPrior& prior) {
  return std::visit([](const auto& p) { return p.dim(); }, prior);
}

std::string prior_name(const WeightPrior& prior) {
  return std::visit(overloaded{
                        [](const GaussianPrior& g) { return std::string("gauss(") + to_string(g.kind()) + ")"; },
                        [](const StudentTPredictive&) { return std::string("student-t"); },
                        [](const GMMPrior& g) {
                          return "gmm(" + std::to_string(g.components().size()) + "," + to_string(g.kind()) + ")";
                        },
                        [](const LaplacePrior& l) { return std::string("laplace(") + to_string(l.kind()) + ")"; },
                    },
                    prior);
}

Vector prior_anchor(const WeightPrior& prior) {
  return std::visit(overloaded{
                        [](const GaussianPrior& g) -> Vector { return g.mean(); },
                        [](const StudentTPredictive& t) -> Vector { return t.location(); },
                        [](const GMMPrior& g) -> Vector {
                          const auto& w = g.weights();
                          const auto best = std::max_element(w.begin(), w.end()) - w.begin();
                          return g.components()[static_cast<std::size_t>(best)].mean();
                        },
                        [](const LaplacePrior& l) -> Vector { return l.location(); },
                    },
                    prior);
}

double log_prior_density(const WeightPrior& prior, const Matrix& w, Matrix* grad) {
  const auto p = prior_dim(prior);
  if (w.cols() != p)
    throw ConfigError("prior density: weights have " + std::to_string(w.cols()) + " columns, prior has " +
                      std::to_string(p));
  if (grad) grad->resize(w.rows(), w.cols());
  double total = 0;
  Vector row(p), g(p);
  for (Eigen::Index c = 0; c < w.rows(); ++c) {
    row = w.row(c).transpose();
    total += std::visit([&](const auto& model) { return model.log_density(row, g); }, prior);
    if (grad) grad->row(c) = g.transpose();
  }
  return total;
}

PriorDensity log_prior_density(const WeightPrior& prior, const Matrix& w) {
  PriorDensity out;
  out.value = log_prior_density(prior, w, &out.gradient);
  return out;
}

// ---------------------------------------------------------------------------

NIWParams niw_posterior(const NIWParams& prior, const Matrix& rows) {
  prior.validate();
  if (rows.rows() == 0) return prior;
  if (rows.cols() != prior.dim())
    throw ConfigError("NIW posterior: rows have " + std::to_string(rows.cols()) + " columns, prior has " +
                      std::to_string(prior.dim()));
  const double n = static_cast<double>(rows.rows());
  const Vector mean = column_means(rows);
  const Matrix centered = rows.rowwise() - mean.transpose();
  const Matrix scatter = centered.transpose() * centered;
  const Vector shift = mean - prior.mu;

  NIWParams post;
  post.kappa = prior.kappa + n;
  post.mu = (prior.kappa * prior.mu + n * mean) / post.kappa;
  post.lambda = prior.lambda + scatter + (prior.kappa * n / post.kappa) * shift * shift.transpose();
  post.lambda = 0.5 * (post.lambda + post.lambda.transpose());
  post.nu = prior.nu + n;
  return post;
}

NIWParams niw_posterior(const NIWParams& prior, const WeightMatrix& wtilde) {
  return niw_posterior(prior, wtilde.rows());
}

GaussianPrior niw_map(const NIWParams& params) {
  params.validate();
  const double p = static_cast<double>(params.dim());
  if (!(params.nu + p + 2 > 0)) throw ConfigError("NIW MAP: nu + p + 2 must be > 0");
  return GaussianPrior::full(params.mu, params.lambda / (params.nu + p + 2));
}

StudentTPredictive student_t_predictive(const NIWParams& params) {
  params.validate();
  const double p = static_cast<double>(params.dim());
  const double dof = params.nu - p + 1;
  if (!(dof > 0))
    throw ConfigError("student-t predictive: dof = nu - p + 1 <= 0 (nu = " + std::to_string(params.nu) +
                      ", p = " + std::to_string(params.dim()) + ")");
  return StudentTPredictive(dof, params.mu, params.lambda * (params.kappa + 1) / (params.kappa * dof));
}

double pooled_variance(const Matrix& rows) {
  const Matrix centered = rows.rowwise() - rows.colwise().mean();
  return centered.squaredNorm() / static_cast<double>(rows.size());
}

NIWParams default_niw_hyper(const Matrix& wtilde, const NiwHyperConfig& overrides) {
  if (wtilde.rows() < 2) throw ConfigError("NIW defaults need at least 2 weight rows");
  const auto p = wtilde.cols();
  const double var = pooled_variance(wtilde);
  if (!(var > 0)) throw NumericError("NIW defaults: weights have zero variance");
  NIWParams h;
  h.mu = column_means(wtilde);
  h.kappa = overrides.kappa0.value_or(0.01);
  h.nu = static_cast<double>(p) + overrides.nu0_offset.value_or(2.0);
  h.lambda = overrides.lambda_scale.value_or(1.0) * static_cast<double>(p) * var * Matrix::Identity(p, p);
  return h;
}

// ---------------------------------------------------------------------------

GaussianPrior fit_gaussian(const Matrix& rows, CovKind kind) {
  const auto n = rows.rows();
  if (n < 2) throw ConfigError("fit_gaussian: needs at least 2 rows, got " + std::to_string(n));
  const Vector mean = column_means(rows);
  const Matrix centered = rows.rowwise() - mean.transpose();
  const double dn = static_cast<double>(n);
  switch (kind) {
    case CovKind::isotropic: {
      const double var = centered.squaredNorm() / (dn * static_cast<double>(rows.cols()));
      if (!(var > 0)) throw NumericError("fit_gaussian: zero variance in every dimension");
      return GaussianPrior::isotropic(mean, var);
    }
    case CovKind::diagonal: {
      const Vector var = centered.colwise().squaredNorm().transpose() / dn;
      for (Eigen::Index j = 0; j < var.size(); ++j)
        if (!(var(j) > 0)) throw NumericError("fit_gaussian: zero variance in dimension " + std::to_string(j));
      return GaussianPrior::diagonal(mean, var);
    }
    case CovKind::full: {
      Matrix cov = centered.transpose() * centered / dn;
      for (Eigen::Index j = 0; j < cov.rows(); ++j)
        if (!(cov(j, j) > 0)) throw NumericError("fit_gaussian: zero variance in dimension " + std::to_string(j));
      if (n <= rows.cols()) cov.diagonal().array() += kFullCovJitter * cov.trace() / static_cast<double>(cov.rows());
      return GaussianPrior::full(mean, std::move(cov));
    }
  }
  throw ConfigError("fit_gaussian: unknown covariance kind");
}

// ---------------------------------------------------------------------------

namespace {

struct EmState {
  std::vector<double> weights;
  std::vector<GaussianPrior> components;
};

GaussianPrior weighted_component(const Matrix& rows, const Vector& r, CovKind kind) {
  const double mass = r.sum();
  const Vector mean = rows.transpose() * r / mass;
  const Matrix centered = rows.rowwise() - mean.transpose();
  switch (kind) {
    case CovKind::isotropic: {
      const double var = (centered.rowwise().squaredNorm().array() * r.array()).sum() /
                         (mass * static_cast<double>(rows.cols()));
      return GaussianPrior::isotropic(mean, std::max(var, kGmmVarianceFloor));
    }
    case CovKind::diagonal: {
      const Vector var = (centered.array().square().colwise() * r.array()).colwise().sum().transpose() / mass;
      return GaussianPrior::diagonal(mean, var.cwiseMax(kGmmVarianceFloor));
    }
    case CovKind::full: {
      Matrix cov = centered.transpose() * r.asDiagonal() * centered / mass;
      cov = 0.5 * (cov + cov.transpose());
      cov.diagonal() = cov.diagonal().cwiseMax(kGmmVarianceFloor);
      if (cov.llt().info() != Eigen::Success)
        cov.diagonal().array() += kFullCovJitter * cov.trace() / static_cast<double>(cov.rows()) + kGmmVarianceFloor;
      return GaussianPrior::full(mean, std::move(cov));
    }
  }
  throw ConfigError("gmm: unknown covariance kind");
}

// Returns total log-likelihood; fills responsibilities (N x S).
double e_step(const Matrix& rows, const EmState& state, Matrix& resp) {
  const auto n = rows.rows();
  const auto s = static_cast<Eigen::Index>(state.components.size());
  resp.resize(n, s);
  double total = 0;
  Vector logs(s);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = rows.row(i).transpose();
    for (Eigen::Index k = 0; k < s; ++k) {
      const double pi = state.weights[static_cast<std::size_t>(k)];
      logs(k) = pi > 0 ? std::log(pi) + state.components[static_cast<std::size_t>(k)].log_density(x)
                       : -std::numeric_limits<double>::infinity();
    }
    const double lse = log_sum_exp(logs);
    total += lse;
    resp.row(i) = (logs.array() - lse).exp().transpose();
  }
  return total;
}

// Thrown internally when a component loses all responsibility mass.
struct EmptyComponent {};

EmState m_step(const Matrix& rows, const Matrix& resp, CovKind kind) {
  EmState state;
  const double n = static_cast<double>(rows.rows());
  for (Eigen::Index k = 0; k < resp.cols(); ++k) {
    const Vector r = resp.col(k);
    const double mass = r.sum();
    if (!(mass > 1e-10)) throw EmptyComponent{};
    state.weights.push_back(mass / n);
    state.components.push_back(weighted_component(rows, r, kind));
  }
  const double total = std::accumulate(state.weights.begin(), state.weights.end(), 0.0);
  for (double& w : state.weights) w /= total;
  return state;
}

EmState random_init(const Matrix& rows, int components, CovKind kind, std::uint64_t seed, int restart) {
  CounterRng rng(seed, streams::gmm_init + static_cast<std::uint64_t>(restart));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(rows.rows()));
  std::iota(order.begin(), order.end(), 0);
  rng.partial_shuffle(order, static_cast<std::size_t>(components));

  // Every component starts with the global spread around a distinct data row.
  const Vector ones = Vector::Ones(rows.rows());
  const GaussianPrior global = weighted_component(rows, ones, kind);
  EmState state;
  for (int k = 0; k < components; ++k) {
    const Vector mean = rows.row(order[static_cast<std::size_t>(k)]).transpose();
    switch (kind) {
      case CovKind::isotropic: state.components.push_back(GaussianPrior::isotropic(mean, global.variance())); break;
      case CovKind::diagonal: state.components.push_back(GaussianPrior::diagonal(mean, global.variances())); break;
      case CovKind::full: state.components.push_back(GaussianPrior::full(mean, global.covariance())); break;
    }
    state.weights.push_back(1.0 / components);
  }
  return state;
}

}  // namespace

GmmFit fit_gmm(const Matrix& rows, const GmmOptions& options) {
  const int s = options.components;
  if (s < 1) throw ConfigError("fit_gmm: components must be >= 1");
  if (rows.rows() < s)
    throw ConfigError("fit_gmm: " + std::to_string(rows.rows()) + " rows cannot fit " + std::to_string(s) +
                      " components");
  if (options.max_iters < 1 || !(options.tol > 0)) throw ConfigError("fit_gmm: bad max_iters/tol");
  const bool grouped = !options.label_groups.empty();
  if (grouped) {
    if (static_cast<Eigen::Index>(options.label_groups.size()) != rows.rows())
      throw ConfigError("fit_gmm: label_groups must assign every row");
    std::vector<int> counts(static_cast<std::size_t>(s), 0);
    for (int g : options.label_groups) {
      if (g < 0 || g >= s) throw ConfigError("fit_gmm: label group " + std::to_string(g) + " out of range");
      ++counts[static_cast<std::size_t>(g)];
    }
    for (int k = 0; k < s; ++k)
      if (counts[static_cast<std::size_t>(k)] == 0)
        throw ConfigError("fit_gmm: label group " + std::to_string(k) + " is empty");
  }

  const double n = static_cast<double>(rows.rows());
  constexpr int kMaxRestarts = 3;
  for (int attempt = 0; attempt <= kMaxRestarts; ++attempt) {
    try {
      EmState state;
      if (grouped && attempt == 0) {
        Matrix hard = Matrix::Zero(rows.rows(), s);
        for (Eigen::Index i = 0; i < rows.rows(); ++i) hard(i, options.label_groups[static_cast<std::size_t>(i)]) = 1.0;
        state = m_step(rows, hard, options.kind);
      } else {
        state = random_init(rows, s, options.kind, options.seed, attempt);
      }

      GmmFit fit{GMMPrior({1.0}, {state.components.front()}), {}, {}, attempt, false};
      Matrix resp;
      double loglik = e_step(rows, state, resp);
      fit.first_responsibilities = resp;
      fit.loglik_trace.push_back(loglik);
      for (int it = 0; it < options.max_iters; ++it) {
        state = m_step(rows, resp, options.kind);
        const double next = e_step(rows, state, resp);
        fit.loglik_trace.push_back(next);
        const double gain = (next - loglik) / n;
        loglik = next;
        if (gain < options.tol) {
          fit.converged = true;
          break;
        }
      }
      if (!std::isfinite(loglik)) throw NumericError("fit_gmm: non-finite log-likelihood");
      fit.prior = GMMPrior(state.weights, state.components);
      return fit;
    } catch (const EmptyComponent&) {
      continue;
    }
  }
  throw NumericError("fit_gmm: a component emptied in " + std::to_string(kMaxRestarts + 1) + " attempts");
}

// ---------------------------------------------------------------------------

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of empty set");
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

LaplacePrior fit_laplace(const Matrix& rows, LaplaceKind kind) {
  if (rows.rows() < 2) throw ConfigError("fit_laplace: needs at least 2 rows, got " + std::to_string(rows.rows()));
  if (kind == LaplaceKind::isotropic) {
    std::vector<double> all(rows.data(), rows.data() + rows.size());
    const double loc = median(all);
    const double scale = (rows.array() - loc).abs().mean();
    if (!(scale > 0)) throw NumericError("fit_laplace: zero scale in every dimension");
    return LaplacePrior::isotropic(loc, scale, rows.cols());
  }
  Vector loc(rows.cols()), scale(rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    std::vector<double> col(static_cast<std::size_t>(rows.rows()));
    Eigen::Map<Vector>(col.data(), rows.rows()) = rows.col(j);
    loc(j) = median(col);
    scale(j) = (rows.col(j).array() - loc(j)).abs().mean();
    if (!(scale(j) > 0)) throw NumericError("fit_laplace: zero scale in dimension " + std::to_string(j));
  }
  return LaplacePrior::diagonal(std::move(loc), std::move(scale));
}

// ---------------------------------------------------------------------------

PriorSpec parse_prior_spec(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.empty()) throw ConfigError("empty prior spec");

  PriorSpec spec;
  const auto& head = parts[0];
  auto bad = [&]() { return ConfigError("bad prior spec '" + text + "'"); };
  if (head == "gauss") {
    if (parts.size() != 2) throw bad();
    spec.family = PriorSpec::Family::gaussian;
    spec.cov = parse_cov_kind(parts[1]);
  } else if (head == "niw-map") {
    if (parts.size() > 2) throw bad();
    spec.family = PriorSpec::Family::niw_map;
    spec.cov = parts.size() == 2 ? parse_cov_kind(parts[1]) : CovKind::full;
  } else if (head == "niw-integrated") {
    if (parts.size() != 1) throw bad();
    spec.family = PriorSpec::Family::niw_integrated;
    spec.cov = CovKind::full;
  } else if (head == "gmm") {
    if (parts.size() != 3) throw bad();
    spec.family = PriorSpec::Family::gmm;
    try {
      spec.components = std::stoi(parts[1]);
    } catch (const std::exception&) {
      throw bad();
    }
    if (spec.components < 1) throw bad();
    spec.cov = parse_cov_kind(parts[2]);
  } else if (head == "laplace") {
    if (parts.size() != 2) throw bad();
    spec.family = PriorSpec::Family::laplace;
    if (parts[1] == "diag") spec.laplace = LaplaceKind::diagonal;
    else if (parts[1] == "iso") spec.laplace = LaplaceKind::isotropic;
    else throw bad();
  } else {
    throw bad();
  }
  return spec;
}

std::string to_string(const PriorSpec& spec) {
  switch (spec.family) {
    case PriorSpec::Family::gaussian: return std::string("gauss:") + to_string(spec.cov);
    case PriorSpec::Family::niw_map: return std::string("niw-map:") + to_string(spec.cov);
    case PriorSpec::Family::niw_integrated: return "niw-integrated";
    case PriorSpec::Family::gmm: return "gmm:" + std::to_string(spec.components) + ":" + to_string(spec.cov);
    case PriorSpec::Family::laplace: return std::string("laplace:") + to_string(spec.laplace);
  }
  return "?";
}

WeightPrior fit_prior(const Matrix& wtilde, const PriorSpec& spec, std::uint64_t seed) {
  switch (spec.family) {
    case PriorSpec::Family::gaussian: return fit_gaussian(wtilde, spec.cov);
    case PriorSpec::Family::niw_map: {
      const GaussianPrior full = niw_map(niw_posterior(default_niw_hyper(wtilde, spec.niw), wtilde));
      switch (spec.cov) {
        case CovKind::full: return full;
        case CovKind::diagonal: return GaussianPrior::diagonal(full.mean(), full.variances());
        case CovKind::isotropic: return GaussianPrior::isotropic(full.mean(), full.variances().mean());
      }
      break;
    }
    case PriorSpec::Family::niw_integrated:
      return student_t_predictive(niw_posterior(default_niw_hyper(wtilde, spec.niw), wtilde));
    case PriorSpec::Family::gmm: {
      GmmOptions opt;
      opt.components = spec.components;
      opt.kind = spec.cov;
      opt.seed = seed;
      opt.max_iters = spec.gmm_max_iters;
      return fit_gmm(wtilde, opt).prior;
    }
    case PriorSpec::Family::laplace: return fit_laplace(wtilde, spec.laplace);
  }
  throw ConfigError("fit_prior: unknown family");
}

HeldoutResult heldout_logprob(const Matrix& wtilde, const PriorSpec& spec, int n_heldout, int n_splits,
                              std::uint64_t seed) {
  const auto n = wtilde.rows();
  if (n_heldout < 1 || n_heldout >= n)
    throw ConfigError("heldout: need 1 <= n_heldout < rows (" + std::to_string(n_heldout) + " vs " +
                      std::to_string(n) + ")");
  if (n_splits < 2) throw ConfigError("heldout: n_splits must be >= 2");

  HeldoutResult out;
  for (int split = 0; split < n_splits; ++split) {
    CounterRng rng(seed, streams::heldout_splits + static_cast<std::uint64_t>(split));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    rng.partial_shuffle(order, static_cast<std::size_t>(n_heldout));
    std::vector<Eigen::Index> held(order.begin(), order.begin() + n_heldout);
    std::vector<Eigen::Index> train(order.begin() + n_heldout, order.end());
    std::sort(held.begin(), held.end());
    std::sort(train.begin(), train.end());

    try {
      const WeightPrior prior = fit_prior(wtilde(train, Eigen::all), spec, seed + static_cast<std::uint64_t>(split));
      const double value = log_prior_density(prior, wtilde(held, Eigen::all), nullptr);
      if (!std::isfinite(value)) throw NumericError("non-finite held-out log-probability");
      out.per_split.push_back(value);
    } catch (const Error&) {
      ++out.n_skipped;
    }
  }
  out.n_used = static_cast<int>(out.per_split.size());
  out.warning = out.n_skipped * 5 > n_splits;
  if (out.n_used == 0) throw NumericError("heldout: every split failed for " + to_string(spec));
  const double m = static_cast<double>(out.n_used);
  out.mean = std::accumulate(out.per_split.begin(), out.per_split.end(), 0.0) / m;
  if (out.n_used > 1) {
    double ss = 0;
    for (double v : out.per_split) ss += (v - out.mean) * (v - out.mean);
    out.sem = std::sqrt(ss / (m - 1) / m);
  }
  return out;
}

}  // namespace kshot
