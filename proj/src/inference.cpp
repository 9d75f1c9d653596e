#include "kshot/inference.hpp"

#include "kshot/error.hpp"
#include "kshot/rng.hpp"
#include "kshot/softmax.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace kshot {

namespace {

std::vector<int> local_targets(const FeatureTable& table) {
  const auto& ids = table.class_ids();
  std::vector<int> out;
  for (ClassId label : table.labels())
    out.push_back(static_cast<int>(std::lower_bound(ids.begin(), ids.end(), label) - ids.begin()));
  return out;
}

Vector flatten(const Matrix& m) { return Eigen::Map<const Vector>(m.data(), m.size()); }

}  // namespace

PosteriorSpec PosteriorSpec::from_support(WeightPrior prior, const FeatureTable& support) {
  PosteriorSpec spec{std::move(prior), support.features(), local_targets(support),
                     static_cast<int>(support.class_ids().size()), std::nullopt};
  spec.validate();
  return spec;
}

PosteriorSpec PosteriorSpec::from_episode(WeightPrior prior, const Episode& episode) {
  PosteriorSpec spec{std::move(prior), episode.support.features(), episode.support_targets, episode.way,
                     std::nullopt};
  spec.validate();
  return spec;
}

void PosteriorSpec::validate() const {
  if (way < 1) throw ConfigError("posterior: way must be >= 1");
  if (prior_dim(prior) != features.cols())
    throw ConfigError("posterior: prior dimension " + std::to_string(prior_dim(prior)) +
                      " != feature dimension " + std::to_string(features.cols()));
  if (static_cast<Eigen::Index>(targets.size()) != features.rows())
    throw ConfigError("posterior: target count does not match support rows");
  for (int t : targets)
    if (t < 0 || t >= way) throw ConfigError("posterior: target " + std::to_string(t) + " out of range");
  if (fixed_rows && fixed_rows->cols() != features.cols())
    throw ConfigError("posterior: fixed rows have the wrong dimension");
}

double neg_log_posterior(const PosteriorSpec& spec, const Matrix& w, Matrix* grad) {
  if (w.rows() != spec.way || w.cols() != spec.dim())
    throw ConfigError("posterior: weights must be way x p");
  Matrix prior_grad;
  const double log_prior = log_prior_density(spec.prior, w, grad ? &prior_grad : nullptr);

  std::vector<int> targets = spec.targets;
  const Matrix* fixed = spec.fixed_rows ? &*spec.fixed_rows : nullptr;
  if (fixed)
    for (int& t : targets) t += static_cast<int>(fixed->rows());
  Matrix like_grad;
  const double nll = softmax_cross_entropy(w, spec.features, targets, grad ? &like_grad : nullptr, fixed);

  const double value = nll - log_prior;
  if (!std::isfinite(value)) {
    double largest = 0;
    if (spec.features.rows() > 0) largest = (spec.features * w.transpose()).cwiseAbs().maxCoeff();
    std::ostringstream msg;
    msg << "posterior: non-finite objective (log prior " << log_prior << ", largest |logit| " << largest << ")";
    throw NumericError(msg.str());
  }
  if (grad) *grad = like_grad - prior_grad;
  return value;
}

MapResult map_kshot(const PosteriorSpec& spec, const OptimizerConfig& cfg) {
  spec.validate();
  const Eigen::Index way = spec.way, p = spec.dim();
  Matrix init = Matrix::Zero(way, p);
  if (cfg.init == OptimizerConfig::Init::prior_mean) init.rowwise() = prior_anchor(spec.prior).transpose();

  Matrix g(way, p);
  Objective objective = [&](const Vector& x, Vector& grad) {
    const double v = neg_log_posterior(spec, Eigen::Map<const Matrix>(x.data(), way, p), &g);
    grad = flatten(g);
    return v;
  };
  LbfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.grad_tolerance = cfg.grad_tolerance;
  opt.history = cfg.history;
  auto res = minimize_lbfgs(objective, flatten(init), opt);

  MapResult out;
  out.weights = Eigen::Map<const Matrix>(res.x.data(), way, p);
  out.value = res.value;
  out.grad_norm = res.grad_norm;
  out.iterations = res.iterations;
  out.status = res.status;
  out.trace = std::move(res.trace);
  return out;
}

// ---------------------------------------------------------------------------

void HmcConfig::validate() const {
  if (n_samples < 1) throw ConfigError("hmc: n_samples must be >= 1");
  if (n_warmup < 0) throw ConfigError("hmc: n_warmup must be >= 0");
  if (leapfrog_steps < 1) throw ConfigError("hmc: leapfrog_steps must be >= 1");
  if (!(target_accept > 0 && target_accept < 1)) throw ConfigError("hmc: target_accept must be in (0, 1)");
  if (!(step_jitter >= 0 && step_jitter < 1)) throw ConfigError("hmc: step_jitter must be in [0, 1)");
}

namespace {

// Potential energy U(q) = neg_log_posterior; returns +inf instead of throwing
// so that divergent trajectories are simply rejected.
struct Potential {
  const PosteriorSpec& spec;
  Eigen::Index way, p;

  double operator()(const Vector& q, Vector& grad) const {
    Matrix g(way, p);
    try {
      const double v = neg_log_posterior(spec, Eigen::Map<const Matrix>(q.data(), way, p), &g);
      grad = Eigen::Map<const Vector>(g.data(), g.size());
      if (!grad.allFinite()) return std::numeric_limits<double>::infinity();
      return v;
    } catch (const NumericError&) {
      return std::numeric_limits<double>::infinity();
    }
  }
};

// One leapfrog trajectory; returns the final potential energy.
double leapfrog(const Potential& potential, Vector& q, Vector& mom, Vector& grad, double step, int steps) {
  double u = 0;
  mom -= 0.5 * step * grad;
  for (int i = 0; i < steps; ++i) {
    q += step * mom;
    u = potential(q, grad);
    if (!std::isfinite(u)) return u;
    if (i + 1 < steps) mom -= step * grad;
  }
  mom -= 0.5 * step * grad;
  return u;
}

Vector draw_normal(CounterRng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

// Heuristic initial step size: double/halve until the one-step acceptance
// probability crosses 1/2.
double initial_step_size(const Potential& potential, const Vector& q0, const Vector& grad0, double u0,
                         CounterRng& rng) {
  double step = 1.0;
  const Vector mom0 = draw_normal(rng, q0.size());
  const double h0 = u0 + 0.5 * mom0.squaredNorm();
  auto log_ratio = [&](double eps) {
    Vector q = q0, mom = mom0, grad = grad0;
    const double u = leapfrog(potential, q, mom, grad, eps, 1);
    const double h = u + 0.5 * mom.squaredNorm();
    return std::isfinite(h) ? h0 - h : -std::numeric_limits<double>::infinity();
  };
  double lr = log_ratio(step);
  const double direction = lr > std::log(0.5) ? 1.0 : -1.0;
  for (int i = 0; i < 100; ++i) {
    if (direction > 0 ? !(lr > std::log(0.5)) : (lr > std::log(0.5))) break;
    step *= std::pow(2.0, direction);
    lr = log_ratio(step);
  }
  return step;
}

}  // namespace

HmcResult hmc_kshot(const PosteriorSpec& spec, const HmcConfig& cfg) {
  spec.validate();
  cfg.validate();
  const Eigen::Index way = spec.way, p = spec.dim();
  const Potential potential{spec, way, p};

  Matrix start;
  if (cfg.init_from_map) {
    start = map_kshot(spec).weights;
  } else {
    start = Matrix(way, p);
    start.rowwise() = prior_anchor(spec.prior).transpose();
  }
  Vector q = flatten(start);
  Vector grad(q.size());
  double u = potential(q, grad);
  if (!std::isfinite(u)) throw NumericError("hmc: non-finite log-density at the starting point");

  CounterRng rng(cfg.seed, streams::hmc);
  double step = initial_step_size(potential, q, grad, u, rng);

  // Dual averaging (Nesterov 2009, as adapted by Hoffman & Gelman 2014).
  const double mu = std::log(10.0 * step), gamma = 0.05, t0 = 10.0, kappa = 0.75;
  double h_bar = 0.0, log_step_bar = 0.0;

  HmcResult out;
  int accepted = 0;
  for (int iter = 0; iter < cfg.n_warmup + cfg.n_samples; ++iter) {
    const bool warmup = iter < cfg.n_warmup;
    const double eps = step * (1.0 + cfg.step_jitter * (2.0 * rng.uniform01() - 1.0));
    Vector mom = draw_normal(rng, q.size());
    const double h0 = u + 0.5 * mom.squaredNorm();

    Vector q_new = q, g_new = grad;
    const double u_new = leapfrog(potential, q_new, mom, g_new, eps, cfg.leapfrog_steps);
    const double h1 = u_new + 0.5 * mom.squaredNorm();
    const double accept_prob = std::isfinite(h1) ? std::min(1.0, std::exp(h0 - h1)) : 0.0;
    const bool accept = rng.uniform01() < accept_prob;
    if (accept) {
      q = std::move(q_new);
      grad = std::move(g_new);
      u = u_new;
    }

    if (warmup) {
      const double m = iter + 1.0;
      h_bar = (1.0 - 1.0 / (m + t0)) * h_bar + (cfg.target_accept - accept_prob) / (m + t0);
      const double log_step = mu - std::sqrt(m) / gamma * h_bar;
      const double w = std::pow(m, -kappa);
      log_step_bar = w * log_step + (1.0 - w) * log_step_bar;
      step = std::exp(log_step);
      if (iter + 1 == cfg.n_warmup) step = std::exp(log_step_bar);
    } else {
      accepted += accept ? 1 : 0;
      out.samples.weights.push_back(Eigen::Map<const Matrix>(q.data(), way, p));
    }
  }
  out.acceptance_rate = static_cast<double>(accepted) / cfg.n_samples;
  out.step_size = step;
  if (out.acceptance_rate < 0.1) {
    std::ostringstream msg;
    msg << "hmc: acceptance rate " << out.acceptance_rate << " after warmup (step size " << step
        << "); lower the step bound or lengthen warmup";
    throw NumericError(msg.str());
  }
  return out;
}

// ---------------------------------------------------------------------------

Predictor Predictor::point(Matrix w) { return Predictor{{std::move(w)}}; }

Matrix predict(const Predictor& predictor, const Matrix& features) {
  if (predictor.weights.empty()) throw ConfigError("predict: empty predictor");
  const auto& first = predictor.weights.front();
  if (first.cols() != features.cols())
    throw ConfigError("predict: weights have " + std::to_string(first.cols()) + " columns, features " +
                      std::to_string(features.cols()));
  if (predictor.is_point()) return softmax_rows(features * first.transpose());
  Matrix sum = Matrix::Zero(features.rows(), first.rows());
  for (const auto& w : predictor.weights) {
    if (w.rows() != first.rows() || w.cols() != first.cols()) throw ConfigError("predict: draws differ in shape");
    sum += softmax_rows(features * w.transpose());
  }
  return sum / static_cast<double>(predictor.weights.size());
}

Matrix predict(const Predictor& predictor, const FeatureTable& query) { return predict(predictor, query.features()); }

double reg_from_weights(const Matrix& wtilde, RegCenter center) {
  if (wtilde.size() < 2) throw ConfigError("reg_from_weights: needs at least 2 entries");
  const double c = center == RegCenter::mean ? wtilde.mean() : 0.0;
  const double var = (wtilde.array() - c).square().mean();
  if (!(var > 0)) throw NumericError("reg_from_weights: weights have zero variance");
  return 2.0 * var;
}

std::vector<double> default_c_grid() { return {1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0}; }

namespace {

// Plain regularised softmax regression; kept separate from the posterior
// objective so that the two routes can be compared.
LogRegResult logreg_solve(const Matrix& x, std::span<const int> y, int way, std::optional<double> c,
                          const OptimizerConfig& cfg, const Matrix* fixed) {
  const Eigen::Index p = x.cols();
  const int offset = fixed ? static_cast<int>(fixed->rows()) : 0;
  const Eigen::Index total = offset + way;
  const double penalty = c ? 1.0 / *c : 0.0;

  Objective objective = [&](const Vector& v, Vector& grad) {
    Eigen::Map<const Matrix> w(v.data(), way, p);
    Matrix logits(x.rows(), total);
    if (fixed) logits.leftCols(offset) = x * fixed->transpose();
    logits.rightCols(way) = x * w.transpose();
    Matrix residual(x.rows(), way);
    double loss = 0;
    for (Eigen::Index n = 0; n < x.rows(); ++n) {
      const int target = y[static_cast<std::size_t>(n)] + offset;
      const double top = logits.row(n).maxCoeff();
      const double log_z = top + std::log((logits.row(n).array() - top).exp().sum());
      loss += log_z - logits(n, target);
      residual.row(n) = (logits.row(n).rightCols(way).array() - log_z).exp();
      if (target >= offset) residual(n, target - offset) -= 1.0;
    }
    Eigen::Map<Matrix>(grad.data(), way, p) = residual.transpose() * x + 2.0 * penalty * w;
    return loss + penalty * w.squaredNorm();
  };
  LbfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.grad_tolerance = cfg.grad_tolerance;
  opt.history = cfg.history;
  const auto res = minimize_lbfgs(objective, Vector::Zero(way * p), opt);

  LogRegResult out;
  out.weights = Eigen::Map<const Matrix>(res.x.data(), way, p);
  out.c = c;
  out.warning = !res.converged();
  return out;
}

}  // namespace

LogRegResult logreg_fit(const Matrix& features, std::span<const int> targets, int way, const LogRegReg& reg,
                        const OptimizerConfig& cfg, const Matrix* fixed_rows) {
  if (way < 1) throw ConfigError("logreg: way must be >= 1");
  if (static_cast<Eigen::Index>(targets.size()) != features.rows())
    throw ConfigError("logreg: target count does not match rows");

  if (std::holds_alternative<LogRegMle>(reg)) return logreg_solve(features, targets, way, std::nullopt, cfg, fixed_rows);
  if (const auto* fixed = std::get_if<LogRegFixed>(&reg)) {
    if (!(fixed->c > 0)) throw ConfigError("logreg: C must be > 0");
    return logreg_solve(features, targets, way, fixed->c, cfg, fixed_rows);
  }

  const auto& cv = std::get<LogRegCrossValidated>(reg);
  const auto grid = cv.grid.empty() ? default_c_grid() : cv.grid;
  std::vector<int> per_class(static_cast<std::size_t>(way), 0);
  for (int t : targets) ++per_class[static_cast<std::size_t>(t)];
  const int k = *std::min_element(per_class.begin(), per_class.end());
  if (k < 2)
    throw ConfigError("cv-inapplicable: cross-validation needs at least 2 examples per class (k = " +
                      std::to_string(k) + ")");
  const int folds = std::min(k, cv.max_folds);
  if (folds < 2) throw ConfigError("cv-inapplicable: fewer than 2 folds");

  // Stratified folds: the i-th example of each class goes to fold i mod folds.
  std::vector<int> fold_of(targets.size());
  std::vector<int> seen(static_cast<std::size_t>(way), 0);
  for (std::size_t n = 0; n < targets.size(); ++n) fold_of[n] = seen[static_cast<std::size_t>(targets[n])]++ % folds;

  LogRegResult best;
  double best_acc = -1;
  double best_c = 0;
  std::vector<double> accuracies;
  for (double c : grid) {
    if (!(c > 0)) throw ConfigError("logreg: grid values must be > 0");
    int correct = 0, total = 0;
    for (int f = 0; f < folds; ++f) {
      std::vector<Eigen::Index> train, held;
      for (std::size_t n = 0; n < targets.size(); ++n)
        (fold_of[n] == f ? held : train).push_back(static_cast<Eigen::Index>(n));
      std::vector<int> train_y;
      for (auto n : train) train_y.push_back(targets[static_cast<std::size_t>(n)]);
      const auto fit = logreg_solve(features(train, Eigen::all), train_y, way, c, cfg, fixed_rows);
      Predictor pred = Predictor::point(fit.weights);
      if (fixed_rows) {
        Matrix stacked(fixed_rows->rows() + way, features.cols());
        stacked << *fixed_rows, fit.weights;
        pred = Predictor::point(std::move(stacked));
      }
      const Matrix probs = predict(pred, features(held, Eigen::all));
      const Eigen::Index offset = fixed_rows ? fixed_rows->rows() : 0;
      for (std::size_t i = 0; i < held.size(); ++i) {
        Eigen::Index arg;
        probs.row(static_cast<Eigen::Index>(i)).maxCoeff(&arg);
        correct += (arg == offset + targets[static_cast<std::size_t>(held[i])]) ? 1 : 0;
        ++total;
      }
    }
    const double acc = static_cast<double>(correct) / total;
    accuracies.push_back(acc);
    if (acc > best_acc || (acc == best_acc && c > best_c)) {
      best_acc = acc;
      best_c = c;
    }
  }
  best = logreg_solve(features, targets, way, best_c, cfg, fixed_rows);
  best.cv_accuracy = std::move(accuracies);
  return best;
}

LogRegResult logreg_baseline(const FeatureTable& support, const LogRegReg& reg, const OptimizerConfig& cfg) {
  const auto targets = local_targets(support);
  return logreg_fit(support.features(), targets, static_cast<int>(support.class_ids().size()), reg, cfg);
}

NearestNeighborResult nearest_neighbor(const FeatureTable& support, const Matrix& query) {
  if (query.cols() != support.dim()) throw ConfigError("nearest neighbour: dimension mismatch");
  const auto targets = local_targets(support);
  const auto way = static_cast<Eigen::Index>(support.class_ids().size());

  Matrix s = support.features();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    const double norm = s.row(i).norm();
    if (!(norm > 0)) throw ConfigError("nearest neighbour: support row " + std::to_string(i) + " has zero norm");
    s.row(i) /= norm;
  }
  NearestNeighborResult out;
  out.probabilities = Matrix::Zero(query.rows(), way);
  for (Eigen::Index q = 0; q < query.rows(); ++q) {
    const double norm = query.row(q).norm();
    if (!(norm > 0)) throw ConfigError("nearest neighbour: query row " + std::to_string(q) + " has zero norm");
    const Vector sims = s * query.row(q).transpose() / norm;
    int best = -1;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < sims.size(); ++i) {
      const int cls = targets[static_cast<std::size_t>(i)];
      if (sims(i) > best_sim || (sims(i) == best_sim && cls < best)) {
        best_sim = sims(i);
        best = cls;
      }
    }
    out.predicted.push_back(best);
    out.probabilities(q, best) = 1.0;
  }
  return out;
}

}  // namespace kshot
