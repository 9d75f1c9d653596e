#include "kshot/evaluation.hpp"

#include "kshot/error.hpp"
#include "kshot/rng.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>
#include <thread>
#include <variant>

namespace kshot {

void Protocol::validate() const {
  if (n_tasks < 1) throw ConfigError("protocol: n_tasks must be >= 1");
  if (way < 1) throw ConfigError("protocol: way must be >= 1");
  if (n_query < 1) throw ConfigError("protocol: n_query must be >= 1");
  if (shots.empty()) throw ConfigError("protocol: shots must not be empty");
  for (int k : shots)
    if (k < 1) throw ConfigError("protocol: every shot count must be >= 1");
}

void Protocol::check_feasible(const FeatureTable& novel) const {
  validate();
  const auto n_classes = static_cast<int>(novel.class_ids().size());
  if (n_classes < way)
    throw ConfigError("protocol: " + std::to_string(way) + "-way tasks need " + std::to_string(way) +
                      " novel classes, table has " + std::to_string(n_classes));
  const int k_max = *std::max_element(shots.begin(), shots.end());
  for (ClassId id : novel.class_ids()) {
    const auto have = static_cast<int>(novel.rows_of(id).size());
    if (have < k_max + n_query)
      throw ConfigError("protocol: class " + std::to_string(id) + " has " + std::to_string(have) +
                        " rows, needs k + n_query = " + std::to_string(k_max + n_query));
  }
}

Episode protocol_episode(const FeatureTable& novel, const Protocol& protocol, int k, int task) {
  return sample_episode(novel, protocol.way, k, protocol.n_query, protocol.base_seed,
                        streams::episodes + static_cast<std::uint64_t>(task));
}

// ---------------------------------------------------------------------------
// Metrics

int confidence_bin(double confidence, int n_bins) {
  if (n_bins < 1) throw ConfigError("ece: n_bins must be >= 1");
  int b = static_cast<int>(std::ceil(confidence * n_bins)) - 1;
  b = std::clamp(b, 0, n_bins - 1);
  // Products like 0.3 * 10 can round across an edge; settle against the
  // edges b / n_bins as the bins define them.
  while (b > 0 && confidence <= static_cast<double>(b) / n_bins) --b;
  while (b + 1 < n_bins && confidence > static_cast<double>(b + 1) / n_bins) ++b;
  return b;
}

void check_distribution_rows(const Matrix& probs) {
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto row = probs.row(i);
    if (!row.allFinite() || row.minCoeff() < 0.0 || std::abs(row.sum() - 1.0) > 1e-9) {
      std::ostringstream msg;
      msg << "row " << i << " is not a probability distribution (sum " << row.sum() << ")";
      throw ConfigError(msg.str());
    }
  }
}

namespace {

void check_labels(const Matrix& probs, std::span<const int> labels) {
  if (static_cast<Eigen::Index>(labels.size()) != probs.rows())
    throw ConfigError("metrics: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(probs.rows()) + " rows");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= probs.cols())
      throw ConfigError("metrics: label of row " + std::to_string(i) + " out of range");
}

// Predicted class (first maximum) and its probability.
std::pair<int, double> top(const Matrix& probs, Eigen::Index row) {
  Eigen::Index arg;
  const double conf = probs.row(row).maxCoeff(&arg);
  return {static_cast<int>(arg), conf};
}

}  // namespace

std::vector<CalibrationBin> calibration_curve(const Matrix& probs, std::span<const int> labels, int n_bins) {
  if (n_bins < 1) throw ConfigError("ece: n_bins must be >= 1");
  check_distribution_rows(probs);
  check_labels(probs, labels);

  std::vector<CalibrationBin> bins(static_cast<std::size_t>(n_bins));
  std::vector<double> conf_sum(bins.size(), 0.0), correct(bins.size(), 0.0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const auto [pred, conf] = top(probs, i);
    const auto b = static_cast<std::size_t>(confidence_bin(conf, n_bins));
    conf_sum[b] += conf;
    correct[b] += pred == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
    ++bins[b].count;
  }
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lower = static_cast<double>(b) / n_bins;
    bins[b].upper = static_cast<double>(b + 1) / n_bins;
    if (bins[b].count > 0) {
      bins[b].mean_confidence = conf_sum[b] / static_cast<double>(bins[b].count);
      bins[b].accuracy = correct[b] / static_cast<double>(bins[b].count);
    }
  }
  return bins;
}

double ece_from_bins(const std::vector<CalibrationBin>& bins) {
  long total = 0;
  for (const auto& bin : bins) total += bin.count;
  if (total == 0) return 0.0;
  double out = 0.0;
  for (const auto& bin : bins)
    if (bin.count > 0)
      out += static_cast<double>(bin.count) / static_cast<double>(total) * std::abs(bin.accuracy - bin.mean_confidence);
  return out;
}

double ece(const Matrix& probs, std::span<const int> labels, int n_bins) {
  return ece_from_bins(calibration_curve(probs, labels, n_bins));
}

double nll(const Matrix& probs, std::span<const int> labels) {
  check_distribution_rows(probs);
  check_labels(probs, labels);
  if (probs.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i)
    sum -= std::log(std::max(probs(i, labels[static_cast<std::size_t>(i)]), kNllClamp));
  return sum / static_cast<double>(probs.rows());
}

double accuracy(const Matrix& probs, std::span<const int> labels) {
  check_labels(probs, labels);
  if (probs.rows() == 0) return 0.0;
  long correct = 0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) correct += top(probs, i).first == labels[static_cast<std::size_t>(i)];
  return static_cast<double>(correct) / static_cast<double>(probs.rows());
}

Estimate estimate(std::span<const double> values) {
  Estimate out;
  if (values.empty()) return out;
  const double n = static_cast<double>(values.size());
  for (double v : values) out.mean += v;
  out.mean /= n;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    out.sem = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

CalibrationReport make_report(const std::vector<Matrix>& probs, const std::vector<std::vector<int>>& labels,
                              int n_bins, int n_failed) {
  if (probs.size() != labels.size()) throw ConfigError("report: prediction and label counts differ");
  CalibrationReport out;
  out.n_tasks = static_cast<int>(probs.size());
  out.n_failed = n_failed;

  std::vector<double> task_acc, task_nll;
  Eigen::Index total_rows = 0, cols = 0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    task_acc.push_back(accuracy(probs[t], labels[t]));
    task_nll.push_back(nll(probs[t], labels[t]));
    total_rows += probs[t].rows();
    cols = std::max(cols, probs[t].cols());
  }
  Matrix pooled = Matrix::Zero(total_rows, cols);
  std::vector<int> pooled_labels;
  Eigen::Index offset = 0;
  double correct = 0, nll_sum = 0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    pooled.block(offset, 0, probs[t].rows(), probs[t].cols()) = probs[t];
    offset += probs[t].rows();
    pooled_labels.insert(pooled_labels.end(), labels[t].begin(), labels[t].end());
    correct += task_acc[t] * static_cast<double>(probs[t].rows());
    nll_sum += task_nll[t] * static_cast<double>(probs[t].rows());
  }
  out.n_points = static_cast<long>(total_rows);
  out.accuracy = estimate(task_acc);
  out.nll = estimate(task_nll);
  if (total_rows > 0) {
    out.accuracy.mean = correct / static_cast<double>(total_rows);
    out.nll.mean = nll_sum / static_cast<double>(total_rows);
  }
  out.bins = calibration_curve(pooled, pooled_labels, n_bins);
  out.ece = ece_from_bins(out.bins);
  return out;
}

// ---------------------------------------------------------------------------
// Harness

namespace {

// Runs fn(t) for t in [0, n) on up to `workers` threads; results come back in
// task order so the reduction never depends on scheduling.
template <typename Result, typename Fn>
std::vector<Result> map_tasks(int n, int workers, Fn fn) {
  std::vector<Result> out(static_cast<std::size_t>(n));
  workers = std::clamp(workers, 1, std::max(n, 1));
  if (workers == 1) {
    for (int t = 0; t < n; ++t) out[static_cast<std::size_t>(t)] = fn(t);
    return out;
  }
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
  std::vector<std::jthread> pool;
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (int t = w; t < n; t += workers) out[static_cast<std::size_t>(t)] = fn(t);
      } catch (...) {
        errors[static_cast<std::size_t>(w)] = std::current_exception();
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

struct TaskOutcome {
  std::optional<Matrix> probs;
  std::vector<int> labels;
  std::string error;
};

constexpr std::size_t kMaxFailureMessages = 5;

std::uint64_t task_seed(const Protocol& protocol, int task) {
  return protocol.base_seed + static_cast<std::uint64_t>(task);
}

CalibrationReport collect(const std::vector<TaskOutcome>& outcomes, int n_bins) {
  std::vector<Matrix> probs;
  std::vector<std::vector<int>> labels;
  std::vector<std::string> failures;
  int failed = 0;
  for (const auto& o : outcomes) {
    if (o.probs) {
      probs.push_back(*o.probs);
      labels.push_back(o.labels);
    } else {
      ++failed;
      if (failures.size() < kMaxFailureMessages) failures.push_back(o.error);
    }
  }
  CalibrationReport report = make_report(probs, labels, n_bins, failed);
  report.failures = std::move(failures);
  return report;
}

}  // namespace

const BenchmarkEntry& BenchmarkResult::at(const std::string& method, int k) const {
  for (const auto& e : entries)
    if (e.method == method && e.k == k) return e;
  throw ConfigError("benchmark has no entry for " + method + " at k = " + std::to_string(k));
}

BenchmarkResult run_benchmark(const FeatureTable& novel, const Matrix* wtilde, const std::vector<MethodSpec>& methods,
                              const Protocol& protocol, const EvalOptions& options) {
  protocol.check_feasible(novel);
  if (methods.empty()) throw ConfigError("benchmark: no methods given");
  if (wtilde && wtilde->cols() != novel.dim())
    throw ConfigError("benchmark: base weights have dimension " + std::to_string(wtilde->cols()) +
                      ", features " + std::to_string(novel.dim()));

  std::vector<PreparedMethod> prepared;
  for (const auto& m : methods) prepared.emplace_back(m, wtilde, options.method, protocol.base_seed);

  BenchmarkResult result;
  result.protocol = protocol;
  for (const auto& method : prepared) {
    for (int k : protocol.shots) {
      const auto outcomes = map_tasks<TaskOutcome>(protocol.n_tasks, options.workers, [&](int t) {
        const Episode ep = protocol_episode(novel, protocol, k, t);
        TaskOutcome o;
        try {
          o.probs = method.solve(ep, task_seed(protocol, t));
          check_distribution_rows(*o.probs);
          o.labels = ep.query_targets;
        } catch (const Error& e) {
          o.probs.reset();
          o.error = "task " + std::to_string(t) + ": " + e.what();
        }
        return o;
      });
      result.entries.push_back({method.name(), k, method.c(), collect(outcomes, options.n_bins)});
    }
  }
  return result;
}

SweepResult reg_sweep(const FeatureTable& novel, const Matrix& wtilde, const Protocol& protocol,
                      const std::vector<double>& grid, const EvalOptions& options) {
  if (grid.empty()) throw ConfigError("sweep: grid must not be empty");
  std::vector<MethodSpec> fixed;
  for (double c : grid) {
    if (!(c > 0)) throw ConfigError("sweep: grid values must be > 0");
    MethodSpec m;
    m.kind = MethodSpec::Kind::logreg;
    m.logreg = MethodSpec::LogRegMode::fixed;
    m.c = c;
    fixed.push_back(m);
  }
  MethodSpec from_weights;
  from_weights.kind = MethodSpec::Kind::logreg;
  from_weights.logreg = MethodSpec::LogRegMode::from_weights;

  SweepResult out;
  out.grid = run_benchmark(novel, &wtilde, fixed, protocol, options);
  out.from_weights = run_benchmark(novel, &wtilde, {from_weights}, protocol, options);
  return out;
}

OnlineReport online_eval(const WeightMatrix& wtilde, const MethodSpec& method, const FeatureTable& base_test,
                         const FeatureTable& novel, const Protocol& protocol, int k, const OnlineOptions& online,
                         const EvalOptions& options) {
  if (base_test.dim() != wtilde.dim() || novel.dim() != wtilde.dim())
    throw ConfigError("online: feature dimension mismatch (weights " + std::to_string(wtilde.dim()) +
                      ", base test " + std::to_string(base_test.dim()) + ", novel " +
                      std::to_string(novel.dim()) + ")");
  if (!method.supports_online())
    throw ConfigError("online: method '" + to_string(method) + "' does not learn class weights");
  if (k < 1) throw ConfigError("online: k must be >= 1");
  Protocol proto = protocol;
  proto.shots = {k};
  proto.check_feasible(novel);

  const auto& old_ids = wtilde.class_ids();
  std::vector<int> old_targets;
  for (ClassId label : base_test.labels()) {
    const auto it = std::find(old_ids.begin(), old_ids.end(), label);
    if (it == old_ids.end()) throw ConfigError("online: base test class " + std::to_string(label) + " has no weight row");
    old_targets.push_back(static_cast<int>(it - old_ids.begin()));
  }
  for (ClassId id : novel.class_ids())
    if (std::find(old_ids.begin(), old_ids.end(), id) != old_ids.end())
      throw ConfigError("online: novel class " + std::to_string(id) + " is also a base class");

  const Matrix& w_old = wtilde.rows();
  const PreparedMethod prepared(method, &w_old, options.method, protocol.base_seed);
  const auto n_old = static_cast<int>(w_old.rows());

  struct Outcome {
    bool ok = false;
    double all = 0, old = 0, fresh = 0;
  };
  const auto outcomes = map_tasks<Outcome>(proto.n_tasks, options.workers, [&](int t) {
    Outcome o;
    try {
      const Episode ep = protocol_episode(novel, proto, k, t);
      const Predictor learned = prepared.learn(ep.support.features(), ep.support_targets, ep.way,
                                               online.only_new ? nullptr : &w_old, task_seed(proto, t));
      Matrix x(base_test.rows() + ep.query.rows(), w_old.cols());
      x << base_test.features(), ep.query.features();
      std::vector<int> y = old_targets;
      for (int q : ep.query_targets) y.push_back(n_old + q);

      Matrix probs = Matrix::Zero(x.rows(), n_old + ep.way);
      for (const Matrix& w_new : learned.weights) {
        Matrix joint(n_old + ep.way, w_old.cols());
        joint << w_old, w_new;
        Matrix logits = x * joint.transpose();
        if (online.mask_new_rows) logits.rightCols(ep.way).setConstant(-std::numeric_limits<double>::infinity());
        Matrix p = logits;
        for (Eigen::Index i = 0; i < p.rows(); ++i) {
          const double m = p.row(i).maxCoeff();
          p.row(i) = (p.row(i).array() - m).exp();
          p.row(i) /= p.row(i).sum();
        }
        probs += p;
      }
      probs /= static_cast<double>(learned.weights.size());

      long correct_old = 0, correct_new = 0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        Eigen::Index arg;
        probs.row(i).maxCoeff(&arg);
        const bool hit = arg == y[static_cast<std::size_t>(i)];
        (i < base_test.rows() ? correct_old : correct_new) += hit;
      }
      o.old = static_cast<double>(correct_old) / static_cast<double>(base_test.rows());
      o.fresh = static_cast<double>(correct_new) / static_cast<double>(ep.query.rows());
      o.all = static_cast<double>(correct_old + correct_new) / static_cast<double>(x.rows());
      o.ok = true;
    } catch (const Error&) {
      o.ok = false;
    }
    return o;
  });

  std::vector<double> all, old, fresh;
  OnlineReport report;
  for (const auto& o : outcomes) {
    if (!o.ok) {
      ++report.n_failed;
      continue;
    }
    all.push_back(o.all);
    old.push_back(o.old);
    fresh.push_back(o.fresh);
  }
  report.n_episodes = static_cast<int>(all.size());
  report.acc_all = estimate(all);
  report.acc_old = estimate(old);
  report.acc_new = estimate(fresh);
  return report;
}

}  // namespace kshot
