#include "kshot/error.hpp"
#include "kshot/inference.hpp"
#include "kshot/rng.hpp"
#include "kshot/softmax.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

using namespace kshot;

namespace {

Matrix normal_matrix(CounterRng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = sd * rng.normal();
  return m;
}

struct Instance {
  Matrix x;
  std::vector<int> y;
  Matrix query;
};

// way-class support with k shots per class around random class centres.
Instance make_instance(std::uint64_t seed, int way, int k, Eigen::Index p) {
  CounterRng rng(seed, 0);
  const Matrix centres = normal_matrix(rng, way, p);
  Instance in{Matrix(way * k, p), {}, normal_matrix(rng, 10, p)};
  for (int c = 0; c < way; ++c)
    for (int i = 0; i < k; ++i) {
      in.x.row(c * k + i) = centres.row(c) + 0.7 * normal_matrix(rng, 1, p);
      in.y.push_back(c);
    }
  return in;
}

PosteriorSpec spec_for(const WeightPrior& prior, const Instance& in, int way) {
  return PosteriorSpec{prior, in.x, in.y, way, std::nullopt};
}

GaussianPrior zero_iso(Eigen::Index p, double var) { return GaussianPrior::isotropic(Vector::Zero(p), var); }

double fd_check(const PosteriorSpec& spec, const Matrix& w) {
  Matrix grad;
  neg_log_posterior(spec, w, &grad);
  double worst = 0;
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      Matrix wp = w, wm = w;
      wp(i, j) += h;
      wm(i, j) -= h;
      const double fd = (neg_log_posterior(spec, wp, nullptr) - neg_log_posterior(spec, wm, nullptr)) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad(i, j)) / std::max(1.0, std::abs(fd)));
    }
  return worst;
}

}  // namespace

TEST(Posterior, FlatPriorLimitIsCrossEntropy) {
  const auto in = make_instance(1, 3, 4, 5);
  CounterRng rng(2, 0);
  const Matrix w = normal_matrix(rng, 3, 5);
  Matrix g_post, g_ce;
  neg_log_posterior(spec_for(zero_iso(5, 1e12), in, 3), w, &g_post);
  softmax_cross_entropy(w, in.x, in.y, &g_ce);
  for (Eigen::Index i = 0; i < w.size(); ++i)
    EXPECT_LE(std::abs(g_post(i) - g_ce(i)), 1e-8 * std::max(1.0, std::abs(g_ce(i))));
}

TEST(Posterior, GradientVanishesAtPriorModeWithoutData) {
  const Vector mu = (Vector(3) << 1, -2, 0.5).finished();
  const PosteriorSpec spec{GaussianPrior::diagonal(mu, Vector::Constant(3, 0.3)), Matrix(0, 3), {}, 4, std::nullopt};
  Matrix grad;
  neg_log_posterior(spec, mu.transpose().replicate(4, 1), &grad);
  EXPECT_EQ(grad.lpNorm<Eigen::Infinity>(), 0.0);
}

TEST(Posterior, GradientMatchesFiniteDifferences) {
  const auto in = make_instance(3, 4, 3, 6);
  CounterRng rng(4, 0);
  const Matrix a = normal_matrix(rng, 6, 6);
  const std::vector<WeightPrior> priors{
      zero_iso(6, 0.7),
      GaussianPrior::full(Vector::Constant(6, 0.2), a * a.transpose() / 6 + Matrix::Identity(6, 6)),
      StudentTPredictive(5.0, Vector::Zero(6), Matrix::Identity(6, 6)),
      LaplacePrior::diagonal(Vector::Constant(6, 0.01), Vector::Constant(6, 0.8)),
  };
  for (const auto& prior : priors) {
    auto spec = spec_for(prior, in, 4);
    EXPECT_LT(fd_check(spec, normal_matrix(rng, 4, 6)), 1e-5) << prior_name(prior);
    spec.fixed_rows = normal_matrix(rng, 7, 6);
    EXPECT_LT(fd_check(spec, normal_matrix(rng, 4, 6)), 1e-5) << prior_name(prior) << " with fixed rows";
  }
}

TEST(Posterior, NonFiniteValueNamesLargestLogit) {
  const auto in = make_instance(5, 2, 2, 3);
  Matrix w = Matrix::Zero(2, 3);
  w(0, 0) = std::numeric_limits<double>::infinity();
  try {
    neg_log_posterior(spec_for(zero_iso(3, 1.0), in, 2), w, nullptr);
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("logit"), std::string::npos) << e.what();
  }
}

TEST(Posterior, ConvexAlongRandomSegmentsForGaussianPrior) {
  const auto in = make_instance(6, 5, 2, 4);
  CounterRng rng(7, 0);
  const Matrix a = normal_matrix(rng, 4, 4);
  const auto spec = spec_for(GaussianPrior::full(Vector::Ones(4), a * a.transpose() + 0.1 * Matrix::Identity(4, 4)),
                             in, 5);
  for (int s = 0; s < 20; ++s) {
    const Matrix u = normal_matrix(rng, 5, 4, 3.0), v = normal_matrix(rng, 5, 4, 3.0);
    const double mid = neg_log_posterior(spec, 0.5 * (u + v), nullptr);
    const double ends = 0.5 * (neg_log_posterior(spec, u, nullptr) + neg_log_posterior(spec, v, nullptr));
    EXPECT_LE(mid, ends + 1e-9);
  }
}

TEST(MapKshot, StrongPriorPinsToMean) {
  const auto in = make_instance(8, 3, 5, 4);
  const Vector mu = (Vector(4) << 0.5, -1, 2, 0).finished();
  const auto r = map_kshot(spec_for(GaussianPrior::isotropic(mu, 1e-8), in, 3));
  EXPECT_LT((r.weights.rowwise() - mu.transpose()).lpNorm<Eigen::Infinity>(), 1e-4);
}

TEST(MapKshot, EqualsRegularisedLogisticRegression) {
  const double var = 0.6;
  OptimizerConfig cfg;
  cfg.grad_tolerance = 1e-8;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto in = make_instance(100 + seed, 5, 5, 16);
    const auto map = map_kshot(spec_for(zero_iso(16, var), in, 5), cfg);
    const auto lr = logreg_fit(in.x, in.y, 5, LogRegFixed{2 * var}, cfg);
    EXPECT_LT((map.weights - lr.weights).lpNorm<Eigen::Infinity>(), 1e-4);
    const Matrix pa = predict(Predictor::point(map.weights), in.query);
    const Matrix pb = predict(Predictor::point(lr.weights), in.query);
    EXPECT_LT((pa - pb).lpNorm<Eigen::Infinity>(), 1e-6);
    EXPECT_EQ(lr.c, 2 * var);
  }
}

TEST(MapKshot, SymmetricOrthogonalOneShot) {
  Matrix x(2, 2);
  x << 1, 0, 0, 1;
  const PosteriorSpec spec{zero_iso(2, 0.01), x, {0, 1}, 2, std::nullopt};
  const auto r = map_kshot(spec);
  ASSERT_TRUE(r.converged());
  EXPECT_NEAR(r.weights.row(0).norm(), r.weights.row(1).norm(), 1e-6);
}

TEST(MapKshot, ZeroInitReachesSameOptimum) {
  const auto in = make_instance(9, 3, 3, 4);
  const auto spec = spec_for(GaussianPrior::isotropic(Vector::Constant(4, 0.3), 0.5), in, 3);
  OptimizerConfig zeros;
  zeros.init = OptimizerConfig::Init::zeros;
  EXPECT_LT((map_kshot(spec).weights - map_kshot(spec, zeros).weights).lpNorm<Eigen::Infinity>(), 1e-5);
}

TEST(Hmc, RecoversGaussianTarget) {
  const Vector mu = (Vector(2) << 1.5, -0.5).finished();
  const PosteriorSpec spec{GaussianPrior::isotropic(mu, 1.0), Matrix(0, 2), {}, 2, std::nullopt};
  HmcConfig cfg;
  cfg.n_samples = 5000;
  cfg.n_warmup = 500;
  cfg.seed = 11;
  const auto r = hmc_kshot(spec, cfg);
  ASSERT_EQ(r.samples.weights.size(), 5000u);
  Matrix sum = Matrix::Zero(2, 2), sq = Matrix::Zero(2, 2);
  for (const auto& w : r.samples.weights) {
    sum += w;
    sq += w.cwiseProduct(w);
  }
  const Matrix mean = sum / 5000.0;
  const Matrix var = sq / 5000.0 - mean.cwiseProduct(mean);
  for (Eigen::Index c = 0; c < 2; ++c)
    for (Eigen::Index j = 0; j < 2; ++j) {
      EXPECT_NEAR(mean(c, j), mu(j), 0.05);
      EXPECT_NEAR(var(c, j), 1.0, 0.1);
    }
  EXPECT_GT(r.acceptance_rate, 0.5);
}

TEST(Hmc, DeterministicUnderSeed) {
  const auto in = make_instance(12, 2, 2, 3);
  HmcConfig cfg;
  cfg.n_samples = 50;
  cfg.n_warmup = 50;
  cfg.seed = 3;
  const auto spec = spec_for(zero_iso(3, 1.0), in, 2);
  const auto a = hmc_kshot(spec, cfg), b = hmc_kshot(spec, cfg);
  ASSERT_EQ(a.samples.weights.size(), b.samples.weights.size());
  for (std::size_t i = 0; i < a.samples.weights.size(); ++i) EXPECT_EQ(a.samples.weights[i], b.samples.weights[i]);
  cfg.seed = 4;
  EXPECT_NE(hmc_kshot(spec, cfg).samples.weights.back(), a.samples.weights.back());
}

TEST(Hmc, DeltaPosteriorMatchesPointPrediction) {
  const auto in = make_instance(13, 3, 2, 4);
  CounterRng rng(14, 0);
  const Matrix w0 = normal_matrix(rng, 3, 4);
  // Rows share one prior, so the peaked posterior sits at the common mean row.
  const Vector row_mean = w0.colwise().mean().transpose();
  const PosteriorSpec spec{GaussianPrior::isotropic(row_mean, 1e-6), in.x, in.y, 3, std::nullopt};
  HmcConfig cfg;
  cfg.n_samples = 300;
  cfg.n_warmup = 300;
  cfg.seed = 5;
  const auto r = hmc_kshot(spec, cfg);
  const Matrix w_point = row_mean.transpose().replicate(3, 1);
  const Matrix diff = predict(r.samples, in.query) - predict(Predictor::point(w_point), in.query);
  const double tv = 0.5 * diff.cwiseAbs().rowwise().sum().maxCoeff();
  EXPECT_LT(tv, 1e-3);
}

TEST(Hmc, RejectsBadConfig) {
  HmcConfig cfg;
  cfg.target_accept = 1.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = HmcConfig{};
  cfg.n_samples = 0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Predict, ZeroWeightsAreUniform) {
  const Matrix p = predict(Predictor::point(Matrix::Zero(4, 3)), Matrix::Ones(5, 3));
  EXPECT_LT((p.array() - 0.25).abs().maxCoeff(), 1e-15);
}

TEST(Predict, SingleDrawEqualsPointAndTwoDrawsAverage) {
  CounterRng rng(15, 0);
  const Matrix w = normal_matrix(rng, 3, 2), q = normal_matrix(rng, 4, 2);
  EXPECT_EQ(predict(Predictor{{w}}, q), predict(Predictor::point(w), q));
  const Matrix both = predict(Predictor{{w, Matrix(-w)}}, q);
  const Matrix hand = 0.5 * (softmax_rows(q * w.transpose()) + softmax_rows(-q * w.transpose()));
  EXPECT_LT((both - hand).lpNorm<Eigen::Infinity>(), 1e-15);
  for (Eigen::Index i = 0; i < both.rows(); ++i) EXPECT_NEAR(both.row(i).sum(), 1.0, 1e-12);
}

TEST(Predict, ArgmaxInvariantUnderPositiveScaling) {
  CounterRng rng(16, 0);
  const Matrix w = normal_matrix(rng, 5, 4), q = normal_matrix(rng, 30, 4);
  const Matrix a = predict(Predictor::point(w), q), b = predict(Predictor::point(3.7 * w), q);
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    Eigen::Index ia, ib;
    a.row(i).maxCoeff(&ia);
    b.row(i).maxCoeff(&ib);
    EXPECT_EQ(ia, ib);
  }
}

TEST(RegFromWeights, Examples) {
  const Matrix w = (Matrix(1, 2) << 1, -1).finished();
  EXPECT_EQ(reg_from_weights(w), 2.0);
  EXPECT_THROW(reg_from_weights(Matrix::Constant(3, 3, 0.4)), NumericError);
  EXPECT_THROW(reg_from_weights(Matrix::Ones(1, 1)), ConfigError);
  CounterRng rng(17, 0);
  const Matrix r = normal_matrix(rng, 6, 5);
  EXPECT_NEAR(reg_from_weights(2.5 * r), 6.25 * reg_from_weights(r), 1e-12);
  const Matrix shifted = (Matrix(1, 2) << 3, 5).finished();
  EXPECT_EQ(reg_from_weights(shifted, RegCenter::mean), 2.0);
  EXPECT_EQ(reg_from_weights(shifted, RegCenter::zero), 34.0);
}

TEST(LogReg, CrossValidationRejectsOneShot) {
  const auto in = make_instance(18, 5, 1, 4);
  try {
    logreg_fit(in.x, in.y, 5, LogRegCrossValidated{});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("cv-inapplicable", 0), 0u) << e.what();
  }
}

TEST(LogReg, CrossValidationPicksFromGrid) {
  const auto in = make_instance(19, 3, 5, 4);
  const auto r = logreg_fit(in.x, in.y, 3, LogRegCrossValidated{5, {}});
  ASSERT_TRUE(r.c);
  const auto grid = default_c_grid();
  EXPECT_NE(std::find(grid.begin(), grid.end(), *r.c), grid.end());
  EXPECT_EQ(r.cv_accuracy.size(), grid.size());
  const double best = *std::max_element(r.cv_accuracy.begin(), r.cv_accuracy.end());
  // Ties resolve to the largest C.
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i] > *r.c) EXPECT_LT(r.cv_accuracy[i], best);
}

TEST(LogReg, TinyCShrinksWeights) {
  const auto in = make_instance(20, 4, 3, 5);
  const auto r = logreg_fit(in.x, in.y, 4, LogRegFixed{1e-8});
  EXPECT_LT(r.weights.lpNorm<Eigen::Infinity>(), 1e-3);
}

TEST(LogReg, MleReturnsFiniteIterate) {
  const auto in = make_instance(21, 2, 3, 4);
  OptimizerConfig cfg;
  cfg.max_iters = 30;
  const auto r = logreg_fit(in.x, in.y, 2, LogRegMle{}, cfg);
  EXPECT_TRUE(r.weights.allFinite());
  EXPECT_FALSE(r.c);
}

TEST(NearestNeighbor, IdentityTieAndHandTable) {
  Matrix s(4, 2);
  s << 1, 0, 0, 1, -1, -1, 1, 1;
  const FeatureTable support(s, {0, 1, 2, 1});
  EXPECT_EQ(nearest_neighbor(support, s).predicted, (std::vector<int>{0, 1, 2, 1}));

  Matrix q(4, 2);
  q << 1, 0.9, 2, 0.1, 0.1, 3, -1, -0.5;
  const auto r = nearest_neighbor(support, q);
  EXPECT_EQ(r.predicted, (std::vector<int>{1, 0, 1, 2}));
  for (Eigen::Index i = 0; i < r.probabilities.rows(); ++i) {
    EXPECT_EQ(r.probabilities.row(i).sum(), 1.0);
    EXPECT_EQ(r.probabilities(i, r.predicted[static_cast<std::size_t>(i)]), 1.0);
  }

  const FeatureTable pair((Matrix(2, 2) << 0, 1, 1, 0).finished(), {7, 3});
  EXPECT_EQ(nearest_neighbor(pair, (Matrix(1, 2) << 1, 1).finished()).predicted, std::vector<int>{0});
}

TEST(NearestNeighbor, ZeroNormRowIsNamed) {
  const FeatureTable support((Matrix(3, 2) << 1, 0, 0, 0, 0, 1).finished(), {0, 1, 1});
  try {
    nearest_neighbor(support, Matrix::Ones(1, 2));
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("row 1"), std::string::npos) << e.what();
  }
}
