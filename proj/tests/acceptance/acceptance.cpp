// Acceptance checks A1-A10. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.

#include "kshot/evaluation.hpp"
#include "kshot/inference.hpp"
#include "kshot/priors.hpp"
#include "kshot/representational.hpp"
#include "kshot/rng.hpp"
#include "kshot/softmax.hpp"

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

using namespace kshot;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Matrix normal_matrix(CounterRng& rng, Eigen::Index r, Eigen::Index c, double sd = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = sd * rng.normal();
  return m;
}

double uniform(CounterRng& rng, double lo, double hi) { return lo + (hi - lo) * rng.uniform01(); }

// Random SPD matrix with eigenvalues spread over roughly [lo, hi].
Matrix random_spd(CounterRng& rng, Eigen::Index p, double lo, double hi) {
  const Eigen::HouseholderQR<Matrix> qr(normal_matrix(rng, p, p));
  const Matrix q = qr.householderQ();
  Vector eig(p);
  for (Eigen::Index i = 0; i < p; ++i) eig(i) = uniform(rng, lo, hi);
  return q * eig.asDiagonal() * q.transpose();
}

struct Support {
  Matrix x;
  std::vector<int> y;
  Matrix query;
};

Support random_support(CounterRng& rng, int way, int k, Eigen::Index p) {
  const Matrix centres = normal_matrix(rng, way, p);
  Support s{Matrix(way * k, p), {}, normal_matrix(rng, 20, p)};
  for (int c = 0; c < way; ++c)
    for (int i = 0; i < k; ++i) {
      s.x.row(c * k + i) = centres.row(c) + 0.7 * normal_matrix(rng, 1, p);
      s.y.push_back(c);
    }
  return s;
}

// ---------------------------------------------------------------------------

Outcome a1_logreg_equivalence() {
  CounterRng rng(101, 0);
  OptimizerConfig cfg;
  cfg.grad_tolerance = 1e-8;
  double worst_w = 0, worst_p = 0;
  for (int inst = 0; inst < 25; ++inst) {
    const Support s = random_support(rng, 5, 5, 16);
    const double var = uniform(rng, 0.1, 2.0);
    const PosteriorSpec spec{GaussianPrior::isotropic(Vector::Zero(16), var), s.x, s.y, 5, std::nullopt};
    const Matrix map = map_kshot(spec, cfg).weights;
    const Matrix lr = logreg_fit(s.x, s.y, 5, LogRegFixed{2 * var}, cfg).weights;
    worst_w = std::max(worst_w, (map - lr).cwiseAbs().maxCoeff());
    const Matrix pa = predict(Predictor::point(map), s.query);
    const Matrix pb = predict(Predictor::point(lr), s.query);
    worst_p = std::max(worst_p, (pa - pb).cwiseAbs().maxCoeff());
  }
  return {worst_w < 1e-4 && worst_p < 1e-6,
          fmt("25 instances, max |dW| = %.2e (< 1e-4), max |dP| = %.2e (< 1e-6)", worst_w, worst_p)};
}

double niw_gap(const NIWParams& a, const NIWParams& b) {
  return std::max({(a.mu - b.mu).cwiseAbs().maxCoeff(), (a.lambda - b.lambda).cwiseAbs().maxCoeff(),
                   std::abs(a.kappa - b.kappa), std::abs(a.nu - b.nu)});
}

Outcome a2_niw_conjugacy() {
  CounterRng rng(102, 0);
  double worst = 0;
  for (int d = 0; d < 100; ++d) {
    const auto p = static_cast<Eigen::Index>(1 + rng.below(8));
    const auto n = static_cast<Eigen::Index>(1 + rng.below(30));
    NIWParams prior;
    prior.mu = normal_matrix(rng, p, 1);
    prior.kappa = uniform(rng, 0.01, 5.0);
    prior.lambda = random_spd(rng, p, 0.5, 3.0);
    prior.nu = static_cast<double>(p) + uniform(rng, 0.0, 5.0);
    const Matrix rows = normal_matrix(rng, n, p, uniform(rng, 0.3, 2.0)).array() + uniform(rng, -2.0, 2.0);

    const NIWParams batch = niw_posterior(prior, rows);
    NIWParams seq = prior;
    for (Eigen::Index i = 0; i < n; ++i) seq = niw_posterior(seq, Matrix(rows.row(i)));
    worst = std::max(worst, niw_gap(batch, seq));
  }

  NIWParams hand;
  hand.mu = Vector::Zero(1);
  hand.kappa = 1;
  hand.lambda = Matrix::Ones(1, 1);
  hand.nu = 3;
  const NIWParams post = niw_posterior(hand, Matrix::Constant(1, 1, 2.0));
  const bool exact = post.mu(0) == 1.0 && post.kappa == 2.0 && post.lambda(0, 0) == 3.0 && post.nu == 4.0;
  return {worst < 1e-10 && exact,
          fmt("100 datasets, max batch/sequential gap = %.2e (< 1e-10); hand case (1, 2, 3, 4) %s", worst,
              exact ? "exact" : "MISMATCH")};
}

// Central-difference gradient of f at w, entry by entry.
Matrix numeric_gradient(const std::function<double(const Matrix&)>& f, const Matrix& w, double h = 1e-5) {
  Matrix g(w.rows(), w.cols());
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      Matrix wp = w, wm = w;
      wp(i, j) += h;
      wm(i, j) -= h;
      g(i, j) = (f(wp) - f(wm)) / (2 * h);
    }
  return g;
}

double relative_error(const Matrix& analytic, const Matrix& numeric) {
  return (analytic - numeric).cwiseAbs().maxCoeff() / std::max(1.0, numeric.cwiseAbs().maxCoeff());
}

std::vector<WeightPrior> all_prior_kinds(const Matrix& data, std::uint64_t seed) {
  return {
      fit_gaussian(data, CovKind::isotropic),
      fit_gaussian(data, CovKind::diagonal),
      fit_gaussian(data, CovKind::full),
      niw_map(niw_posterior(default_niw_hyper(data), data)),
      student_t_predictive(niw_posterior(default_niw_hyper(data), data)),
      fit_gmm(data, GmmOptions{3, CovKind::isotropic, {}, seed, 200, 1e-8}).prior,
      fit_gmm(data, GmmOptions{2, CovKind::diagonal, {}, seed, 200, 1e-8}).prior,
      fit_gmm(data, GmmOptions{2, CovKind::full, {}, seed, 200, 1e-8}).prior,
      fit_laplace(data, LaplaceKind::diagonal),
      fit_laplace(data, LaplaceKind::isotropic),
  };
}

// Moves every entry at least `margin` away from the Laplace locations.
Matrix away_from_kinks(const WeightPrior& prior, Matrix w, double margin = 1e-3) {
  const auto* lap = std::get_if<LaplacePrior>(&prior);
  if (!lap) return w;
  for (Eigen::Index i = 0; i < w.rows(); ++i)
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      const double d = w(i, j) - lap->location()(j);
      if (std::abs(d) < margin) w(i, j) = lap->location()(j) + (d < 0 ? -margin : margin);
    }
  return w;
}

Outcome a3_gradients() {
  CounterRng rng(103, 0);
  const Eigen::Index p = 5;
  const Matrix data = normal_matrix(rng, 30, p, 1.2).array() + 0.4;
  const auto priors = all_prior_kinds(data, 7);

  double worst_prior = 0, worst_post = 0;
  int n_prior = 0, n_post = 0;
  for (const auto& prior : priors) {
    for (int pt = 0; pt < 50; ++pt, ++n_prior) {
      const Matrix w = away_from_kinks(prior, normal_matrix(rng, 3, p, 1.5).array() + 0.4);
      Matrix grad;
      log_prior_density(prior, w, &grad);
      const Matrix fd = numeric_gradient([&](const Matrix& v) { return log_prior_density(prior, v, nullptr); }, w);
      worst_prior = std::max(worst_prior, relative_error(grad, fd));
    }
    for (int pt = 0; pt < 50; ++pt, ++n_post) {
      const Support s = random_support(rng, 3, 2, p);
      PosteriorSpec spec{prior, s.x, s.y, 3, std::nullopt};
      if (pt % 2) spec.fixed_rows = normal_matrix(rng, 4, p);
      const Matrix w = away_from_kinks(prior, normal_matrix(rng, 3, p, 1.5));
      Matrix grad;
      neg_log_posterior(spec, w, &grad);
      const Matrix fd = numeric_gradient([&](const Matrix& v) { return neg_log_posterior(spec, v, nullptr); }, w);
      worst_post = std::max(worst_post, relative_error(grad, fd));
    }
  }
  return {worst_prior < 1e-5 && worst_post < 1e-5,
          fmt("%zu prior kinds x 50 points; prior max rel err = %.2e, posterior max rel err = %.2e (< 1e-5)",
              priors.size(), worst_prior, worst_post)};
}

double normal_cdf(double x, double mean, double sd) { return 0.5 * std::erfc(-(x - mean) / (sd * std::sqrt(2.0))); }

double ks_statistic(std::vector<double> xs, double mean, double sd) {
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  double d = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = normal_cdf(xs[i], mean, sd);
    d = std::max({d, f - static_cast<double>(i) / n, static_cast<double>(i + 1) / n - f});
  }
  return d;
}

Outcome a4_hmc_moments() {
  CounterRng rng(104, 0);
  const Eigen::Index p = 4;
  const Vector mu = (Vector(p) << 1.0, -0.5, 2.0, 0.0).finished();
  const Matrix cov = random_spd(rng, p, 0.5, 2.0);
  const PosteriorSpec spec{GaussianPrior::full(mu, cov), Matrix(0, p), {}, 1, std::nullopt};
  HmcConfig cfg;
  cfg.n_samples = 5000;
  cfg.n_warmup = 1000;
  cfg.seed = 104;
  const auto r = hmc_kshot(spec, cfg);

  const auto n = static_cast<double>(r.samples.weights.size());
  Vector mean = Vector::Zero(p), sq = Vector::Zero(p);
  std::vector<std::vector<double>> marginals(static_cast<std::size_t>(p));
  for (const auto& w : r.samples.weights) {
    const Vector v = w.row(0).transpose();
    mean += v;
    sq += v.cwiseProduct(v);
    for (Eigen::Index j = 0; j < p; ++j) marginals[static_cast<std::size_t>(j)].push_back(v(j));
  }
  mean /= n;
  const Vector var = (sq / n - mean.cwiseProduct(mean)) * n / (n - 1);

  double mean_err = 0, var_err = 0, ks = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    mean_err = std::max(mean_err, std::abs(mean(j) - mu(j)));
    var_err = std::max(var_err, std::abs(var(j) / cov(j, j) - 1.0));
    ks = std::max(ks, ks_statistic(marginals[static_cast<std::size_t>(j)], mu(j), std::sqrt(cov(j, j))));
  }
  return {n == 5000 && mean_err < 0.05 && var_err < 0.10 && ks < 0.03,
          fmt("%.0f draws, max mean err = %.4f (< 0.05), max rel var err = %.3f (< 0.10), max KS = %.4f (< 0.03), "
              "accept %.2f",
              n, mean_err, var_err, ks, r.acceptance_rate)};
}

double brute_force_ece(const Matrix& probs, const std::vector<int>& labels, int n_bins) {
  std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(n_bins));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const double c = probs.row(i).maxCoeff();
    for (int b = 0; b < n_bins; ++b) {
      const double lo = static_cast<double>(b) / n_bins, hi = static_cast<double>(b + 1) / n_bins;
      if ((c > lo || (b == 0 && c == 0.0)) && c <= hi) {
        members[static_cast<std::size_t>(b)].push_back(i);
        break;
      }
    }
  }
  double out = 0;
  for (const auto& m : members) {
    if (m.empty()) continue;
    double conf = 0, hits = 0;
    for (auto i : m) {
      Eigen::Index arg;
      conf += probs.row(i).maxCoeff(&arg);
      hits += arg == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    }
    const auto n = static_cast<double>(m.size());
    out += n / static_cast<double>(probs.rows()) * std::abs(hits / n - conf / n);
  }
  return out;
}

Outcome a5_metric_oracles() {
  Matrix hand(2, 2);
  hand << 0.9, 0.1, 0.4, 0.6;
  const double hand_ece = ece(hand, std::vector<int>{0, 0}, 2);

  CounterRng rng(105, 0);
  Matrix logits(1000, 5);
  std::vector<int> y;
  for (Eigen::Index i = 0; i < 1000; ++i) {
    for (Eigen::Index j = 0; j < 5; ++j) logits(i, j) = 2.0 * rng.normal();
    y.push_back(static_cast<int>(rng.below(5)));
  }
  const Matrix probs = softmax_rows(logits);
  const double fast = ece(probs, y, 10), slow = brute_force_ece(probs, y, 10);

  const double uniform_nll = nll(Matrix::Constant(1000, 5, 0.2), y);
  const double nll_err = std::abs(uniform_nll - std::log(5.0));
  return {hand_ece == 0.25 && fast == slow && nll_err < 1e-12,
          fmt("hand ECE = %.17g (== 0.25); 10-bin ECE %.17g vs brute force %.17g; |NLL - ln 5| = %.1e (< 1e-12)",
              hand_ece, fast, slow, nll_err)};
}

// Standard synthetic world plus base weights trained on its base split.
struct StandardWorld {
  SyntheticWorld world;
  WeightMatrix wtilde;
};

const StandardWorld& standard_world() {
  static const StandardWorld w = [] {
    SyntheticWorldConfig cfg;
    cfg.p = 16;
    cfg.n_base = 40;
    cfg.n_novel = 20;
    cfg.per_class = 100;
    cfg.heldout_per_class = 100;
    cfg.weight_var = 1.0;
    cfg.noise_var = 0.5;
    cfg.seed = 1;
    SyntheticWorld world = generate_synthetic_world(cfg);
    WeightMatrix wt = train_linear_softmax(world.base, {}).weights;
    return StandardWorld{std::move(world), std::move(wt)};
  }();
  return w;
}

// Standard error of the difference of two independently estimated means.
double combined_sem(const Estimate& a, const Estimate& b) { return std::hypot(a.sem, b.sem); }

Outcome a6_concept_transfer() {
  const auto& sw = standard_world();
  Protocol protocol;
  protocol.n_tasks = 600;
  protocol.shots = {1, 5};
  protocol.base_seed = 6;
  const auto result = run_benchmark(sw.world.novel, &sw.wtilde.rows(),
                                    {parse_method_spec("gauss:iso"), parse_method_spec("logreg:mle"),
                                     parse_method_spec("logreg:cv")},
                                    protocol);

  const auto& g1 = result.at("gauss:iso", 1).report;
  const auto& m1 = result.at("logreg:mle", 1).report;
  const double acc_gap = (g1.accuracy.mean - m1.accuracy.mean) / combined_sem(g1.accuracy, m1.accuracy);

  const auto& g5 = result.at("gauss:iso", 5).report;
  const auto& cv5 = result.at("logreg:cv", 5).report;
  const double nll_gap = (cv5.nll.mean - g5.nll.mean) / combined_sem(g5.nll, cv5.nll);

  return {acc_gap >= 2 && nll_gap >= 2,
          fmt("1-shot acc gauss:iso %.4f vs logreg:mle %.4f (%.2f sems, >= 2); "
              "5-shot NLL gauss:iso %.4f vs logreg:cv %.4f (%.2f sems, >= 2); failed episodes %d/%d/%d/%d",
              g1.accuracy.mean, m1.accuracy.mean, acc_gap, g5.nll.mean, cv5.nll.mean, nll_gap, g1.n_failed,
              m1.n_failed, g5.n_failed, cv5.n_failed)};
}

Outcome a7_online_forgetting() {
  const auto& sw = standard_world();
  Protocol protocol;
  protocol.n_tasks = 200;
  protocol.shots = {1};
  protocol.base_seed = 7;
  const FeatureTable& base_test = *sw.world.base_test;

  const auto gauss = online_eval(sw.wtilde, parse_method_spec("gauss:iso"), base_test, sw.world.novel, protocol, 1);
  const auto mle = online_eval(sw.wtilde, parse_method_spec("logreg:mle"), base_test, sw.world.novel, protocol, 1);
  OnlineOptions ablation;
  ablation.only_new = true;
  const auto only_new =
      online_eval(sw.wtilde, parse_method_spec("gauss:iso"), base_test, sw.world.novel, protocol, 1, ablation);

  const double old_gap = (gauss.acc_old.mean - mle.acc_old.mean) / combined_sem(gauss.acc_old, mle.acc_old);
  const double new_gap = (gauss.acc_new.mean - only_new.acc_new.mean) / combined_sem(gauss.acc_new, only_new.acc_new);
  const int episodes = std::min({gauss.n_episodes, mle.n_episodes, only_new.n_episodes});
  return {old_gap >= 2 && new_gap >= 2 && episodes >= 200,
          fmt("%d episodes; acc_old gauss:iso %.4f vs logreg:mle %.4f (%.2f sems); "
              "acc_new joint %.4f vs only-new %.4f (%.2f sems)",
              episodes, gauss.acc_old.mean, mle.acc_old.mean, old_gap, gauss.acc_new.mean, only_new.acc_new.mean,
              new_gap)};
}

Outcome a8_em() {
  CounterRng rng(108, 0);
  double worst_drop = 0;
  int fits = 0;
  for (CovKind kind : {CovKind::isotropic, CovKind::diagonal, CovKind::full})
    for (int components : {2, 3, 5})
      for (std::uint64_t seed = 0; seed < 4; ++seed, ++fits) {
        const Matrix rows = normal_matrix(rng, 120, 4, 1.0);
        GmmOptions opt;
        opt.components = components;
        opt.kind = kind;
        opt.seed = seed;
        const auto fit = fit_gmm(rows, opt);
        for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i)
          worst_drop = std::max(worst_drop, fit.loglik_trace[i - 1] - fit.loglik_trace[i]);
      }

  Matrix rows = normal_matrix(rng, 200, 2);
  rows.topRows(100).array() += 10;
  rows.bottomRows(100).array() -= 10;
  GmmOptions opt;
  opt.components = 2;
  opt.seed = 3;
  const auto fit = fit_gmm(rows, opt);
  const auto& comps = fit.prior.components();
  const std::size_t hi = comps[0].mean()(0) > 0 ? 0 : 1;
  double weight_err = 0;
  for (double pi : fit.prior.weights()) weight_err = std::max(weight_err, std::abs(pi - 0.5));
  const double mean_err = std::max((comps[hi].mean() - Vector::Constant(2, 10)).norm(),
                                   (comps[1 - hi].mean() + Vector::Constant(2, 10)).norm());
  return {worst_drop <= 1e-8 && weight_err < 0.02 && mean_err < 0.3,
          fmt("%d fits, largest log-likelihood decrease %.2e (<= 1e-8); two clusters: weight err %.4f (< 0.02), "
              "mean err %.4f (< 0.3)",
              fits, std::max(worst_drop, 0.0), weight_err, mean_err)};
}

Outcome a9_heldout_comparison() {
  CounterRng rng(109, 0);
  const Matrix rows = normal_matrix(rng, 80, 32, 0.8).rowwise() + normal_matrix(rng, 1, 32, 0.5).row(0);
  const auto gauss = heldout_logprob(rows, parse_prior_spec("gauss:iso"), 10, 50, 9);
  const auto gmm = heldout_logprob(rows, parse_prior_spec("gmm:10:iso"), 10, 50, 9);
  const double gap = (gauss.mean - gmm.mean) / std::hypot(gauss.sem, gmm.sem);
  return {gap >= 2 && gauss.n_used == 50 && gmm.n_used == 50,
          fmt("70/10 splits used %d/%d; gauss:iso %.2f +- %.2f vs gmm:10:iso %.2f +- %.2f (%.2f sems, >= 2)",
              gauss.n_used, gmm.n_used, gauss.mean, gauss.sem, gmm.mean, gmm.sem, gap)};
}

// ---------------------------------------------------------------------------
// CLI determinism

int run_cli(const std::string& args) {
  const std::string cmd = "'" + std::string(KSHOT_CLI) + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string normalised(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  static const std::regex stamp("\"generated_at\"\\s*:\\s*\"[^\"]*\"");
  return std::regex_replace(s.str(), stamp, "\"generated_at\":\"\"");
}

std::vector<std::string> pipeline(const fs::path& dir, int workers) {
  const std::string d = dir.string();
  const std::string g = "--seed 13 --workers " + std::to_string(workers) + " --out-dir '" + d + "' ";
  const std::string world = " --in '" + d + "/world.wpk'", wt = " --weights '" + d + "/wtilde.wpk'";
  {
    std::ofstream csv(dir / "table.csv");
    csv << "label,f0,f1,f2\n";
    CounterRng rng(5, 0);
    for (int c = 0; c < 6; ++c)
      for (int i = 0; i < 6; ++i)
        csv << c << ',' << c + 0.3 * rng.normal() << ',' << -c + 0.3 * rng.normal() << ',' << 0.3 * rng.normal()
            << '\n';
  }
  return {
      g + "ingest --csv '" + d + "/table.csv' --out table.wpk --n-novel 2",
      g + "synth --p 6 --n-base 12 --n-novel 8 --per-class 20 --heldout-per-class 10",
      g + "train" + world,
      g + "fit-prior" + wt + " --prior gauss:iso --out prior_iso.wpk",
      g + "fit-prior" + wt + " --prior gmm:2:diag --out prior_gmm.wpk",
      g + "fit-prior" + wt + " --prior niw-integrated --out prior_t.wpk",
      g + "kshot" + world + " --prior '" + d + "/prior_iso.wpk' --k 2 --out map.wpk",
      g + "kshot" + world + " --prior '" + d + "/prior_iso.wpk' --k 2 --hmc --hmc-samples 100 --hmc-warmup 100 "
          "--out hmc.wpk",
      g + "bench" + world + wt + " --methods gauss:iso,laplace:diag,logreg:cv,logreg:wtilde,nn,uniform --tasks 12 "
          "--shots 1,3",
      g + "sweep" + world + wt + " --grid 0.01,0.1,1 --tasks 8 --shots 2",
      g + "online" + world + wt + " --methods gauss:iso,logreg:mle --k 1 --tasks 6 --ablation",
      g + "compare-priors" + wt + " --priors gauss:iso,gmm:2:iso,niw-integrated --heldout 2 --splits 10",
  };
}

Outcome a10_determinism() {
  const fs::path root = fs::temp_directory_path() / "kshot_acceptance_a10";
  fs::remove_all(root);
  const fs::path a = root / "a", b = root / "b";
  fs::create_directories(a);
  fs::create_directories(b);

  const auto cmds_a = pipeline(a, 1), cmds_b = pipeline(b, 3);
  for (std::size_t i = 0; i < cmds_a.size(); ++i) {
    if (run_cli(cmds_a[i]) != 0 || run_cli(cmds_b[i]) != 0)
      return {false, "command failed: kshot " + cmds_a[i]};
  }

  int compared = 0;
  std::string mismatch;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path other = b / entry.path().filename();
    ++compared;
    if (!fs::exists(other) || normalised(entry.path()) != normalised(other)) {
      mismatch = entry.path().filename().string();
      break;
    }
  }
  const auto count = [](const fs::path& p) { return std::distance(fs::directory_iterator(p), {}); };
  if (mismatch.empty() && count(a) != count(b)) mismatch = "(file sets differ)";
  fs::remove_all(root);
  if (!mismatch.empty()) return {false, "outputs differ: " + mismatch};
  return {true, fmt("%zu commands run twice (1 vs 3 workers), %d output files byte-identical excluding timestamps",
                    cmds_a.size(), compared)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"A1 logistic-regression equivalence", a1_logreg_equivalence},
      {"A2 NIW conjugacy", a2_niw_conjugacy},
      {"A3 gradient correctness", a3_gradients},
      {"A4 HMC moment recovery", a4_hmc_moments},
      {"A5 ECE/NLL oracles", a5_metric_oracles},
      {"A6 synthetic concept transfer", a6_concept_transfer},
      {"A7 online forgetting", a7_online_forgetting},
      {"A8 EM monotonicity and GMM recovery", a8_em},
      {"A9 held-out model comparison", a9_heldout_comparison},
      {"A10 CLI determinism", a10_determinism},
  };

  int failed = 0;
  for (const auto& [name, check] : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += out.pass ? 0 : 1;
    std::cout << (out.pass ? "[PASS] " : "[FAIL] ") << name << ": " << out.detail << " [" << fmt("%.1f", secs)
              << " s]" << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " of 10 criteria failed" : "all 10 criteria passed") << std::endl;
  return failed ? 1 : 0;
}
