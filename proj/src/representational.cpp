#include "kshot/representational.hpp"

#include "kshot/error.hpp"
#include "kshot/rng.hpp"
#include "kshot/softmax.hpp"

#include <algorithm>
#include <cmath>

namespace kshot {

void TrainConfig::validate() const {
  if (!(l2_strength >= 0)) throw ConfigError("train: l2_strength must be >= 0");
  if (max_iters < 1) throw ConfigError("train: max_iters must be >= 1");
  if (!(grad_tolerance > 0)) throw ConfigError("train: grad_tolerance must be > 0");
}

namespace {

std::vector<int> dense_targets(const FeatureTable& table) {
  const auto& ids = table.class_ids();
  std::vector<int> targets;
  targets.reserve(table.labels().size());
  for (ClassId label : table.labels())
    targets.push_back(static_cast<int>(std::lower_bound(ids.begin(), ids.end(), label) - ids.begin()));
  return targets;
}

}  // namespace

double base_training_loss(const FeatureTable& base, const Matrix& w, double l2_strength,
                          Matrix* grad) {
  const auto targets = dense_targets(base);
  const double n = static_cast<double>(base.rows());
  double loss = softmax_cross_entropy(w, base.features(), targets, grad) / n;
  loss += 0.5 * l2_strength * w.squaredNorm();
  if (grad) {
    *grad /= n;
    *grad += l2_strength * w;
  }
  return loss;
}

TrainResult train_linear_softmax(const FeatureTable& base, const TrainConfig& cfg) {
  cfg.validate();
  const auto num_classes = static_cast<Eigen::Index>(base.class_ids().size());
  if (num_classes < 2) throw ConfigError("train: base table needs at least 2 classes");
  const Eigen::Index p = base.dim();
  const auto targets = dense_targets(base);
  const double n = static_cast<double>(base.rows());

  Matrix grad_w(num_classes, p);
  Objective objective = [&](const Vector& x, Vector& grad) {
    Eigen::Map<const Matrix> w(x.data(), num_classes, p);
    const double ce = softmax_cross_entropy(w, base.features(), targets, &grad_w);
    Eigen::Map<Matrix>(grad.data(), num_classes, p) = grad_w / n + cfg.l2_strength * w;
    return ce / n + 0.5 * cfg.l2_strength * w.squaredNorm();
  };

  LbfgsOptions opt;
  opt.max_iters = cfg.max_iters;
  opt.grad_tolerance = cfg.grad_tolerance;
  opt.history = 10;
  auto res = minimize_lbfgs(objective, Vector::Zero(num_classes * p), opt);
  for (const auto& e : res.trace)
    if (!std::isfinite(e.value))
      throw NumericError("train: non-finite loss at iteration " + std::to_string(e.iteration));

  Matrix w = Eigen::Map<const Matrix>(res.x.data(), num_classes, p);
  return TrainResult{WeightMatrix(std::move(w), base.class_ids()), res.status, res.value,
                     res.grad_norm, std::move(res.trace)};
}

void SyntheticWorldConfig::validate() const {
  if (p < 1 || n_base < 1 || n_novel < 1 || per_class < 1 || heldout_per_class < 0)
    throw ConfigError("synthetic world: counts must be positive");
  if (!(weight_var > 0) || !(noise_var > 0))
    throw ConfigError("synthetic world: variances must be > 0");
  if (weight_mean.size() != 0 && weight_mean.size() != p)
    throw ConfigError("synthetic world: weight_mean has length " + std::to_string(weight_mean.size()) +
                      ", expected " + std::to_string(p));
}

SyntheticWorld generate_synthetic_world(const SyntheticWorldConfig& cfg) {
  cfg.validate();
  const int total = cfg.n_base + cfg.n_novel;
  const Vector mean = cfg.weight_mean.size() ? cfg.weight_mean : Vector::Zero(cfg.p);

  CounterRng weight_rng(cfg.seed, streams::world_weights);
  Matrix weights(total, cfg.p);
  const double weight_sd = std::sqrt(cfg.weight_var);
  for (int c = 0; c < total; ++c)
    for (int j = 0; j < cfg.p; ++j) weights(c, j) = mean(j) + weight_sd * weight_rng.normal();

  CounterRng feature_rng(cfg.seed, streams::world_features);
  const double noise_sd = std::sqrt(cfg.noise_var);
  auto draw = [&](int first_class, int n_classes, int per_class) {
    Matrix x(n_classes * per_class, cfg.p);
    std::vector<ClassId> labels;
    for (int c = 0; c < n_classes; ++c)
      for (int i = 0; i < per_class; ++i) {
        const Eigen::Index row = c * per_class + i;
        for (int j = 0; j < cfg.p; ++j)
          x(row, j) = weights(first_class + c, j) + noise_sd * feature_rng.normal();
        labels.push_back(first_class + c);
      }
    return FeatureTable(std::move(x), std::move(labels));
  };

  FeatureTable base = draw(0, cfg.n_base, cfg.per_class);
  FeatureTable novel = draw(cfg.n_base, cfg.n_novel, cfg.per_class);
  std::optional<FeatureTable> base_test;
  if (cfg.heldout_per_class > 0) base_test = draw(0, cfg.n_base, cfg.heldout_per_class);

  std::vector<ClassId> ids(static_cast<std::size_t>(total));
  for (int c = 0; c < total; ++c) ids[static_cast<std::size_t>(c)] = c;
  return SyntheticWorld{std::move(base), std::move(novel), WeightMatrix(std::move(weights), std::move(ids)),
                        std::move(base_test)};
}

}  // namespace kshot
