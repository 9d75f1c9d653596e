// kshot: command-line front end for the k-shot pipeline.
//
// Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 I/O failure.

#include "kshot/container.hpp"
#include "kshot/error.hpp"
#include "kshot/evaluation.hpp"
#include "kshot/inference.hpp"
#include "kshot/methods.hpp"
#include "kshot/priors.hpp"
#include "kshot/report.hpp"
#include "kshot/representational.hpp"
#include "kshot/rng.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;
using namespace kshot;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int workers = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::string out_dir = ".";
  bool timestamps = true;
};

// ---------------------------------------------------------------------------
// Path handling

void require_input(const std::string& path) {
  if (path.empty()) throw ConfigError("missing required input path");
  if (!fs::exists(path)) throw ConfigError("input not found: " + path);
}

fs::path output_path(const Globals& g, const std::string& name) {
  fs::path p(name);
  if (p.is_relative()) p = fs::path(g.out_dir) / p;
  std::error_code ec;
  if (p.has_parent_path()) fs::create_directories(p.parent_path(), ec);
  if (ec) throw IoError("cannot create output directory '" + p.parent_path().string() + "': " + ec.message());
  return p;
}

// Inputs are never overwritten.
void guard_inputs(const fs::path& out, const std::vector<std::string>& inputs) {
  for (const auto& in : inputs) {
    std::error_code ec;
    if (!in.empty() && fs::exists(out) && fs::equivalent(out, in, ec))
      throw ConfigError("output '" + out.string() + "' would overwrite input '" + in + "'");
  }
}

RunInfo run_info(const Globals& g, const std::string& command) {
  return RunInfo{command, g.seed, g.timestamps ? utc_timestamp() : std::string()};
}

const FeatureTable& table_of(const Container& c, const std::string& name, const std::string& path) {
  if (!c.has(name)) throw ConfigError("container '" + path + "' has no table '" + name + "'");
  return c.features(name);
}

const WeightMatrix& weights_of(const Container& c, const std::string& name, const std::string& path) {
  if (!c.has(name)) throw ConfigError("container '" + path + "' has no weight table '" + name + "'");
  return c.weights(name);
}

std::vector<MethodSpec> parse_methods(const std::vector<std::string>& texts) {
  if (texts.empty()) throw ConfigError("no methods given");
  std::vector<MethodSpec> out;
  for (const auto& t : texts) out.push_back(parse_method_spec(t));
  return out;
}

// ---------------------------------------------------------------------------
// Shared option groups

struct ProtocolOptions {
  int tasks = 600;
  int way = 5;
  std::vector<int> shots{1, 5};
  int n_query = 15;
  int bins = 10;

  void add(CLI::App* app, bool with_shots = true) {
    app->add_option("--tasks", tasks, "number of seeded episodes")->capture_default_str();
    app->add_option("--way", way, "classes per episode")->capture_default_str();
    if (with_shots) app->add_option("--shots", shots, "k values")->delimiter(',')->capture_default_str();
    app->add_option("--n-query", n_query, "query points per class")->capture_default_str();
    app->add_option("--bins", bins, "calibration bins")->capture_default_str();
  }
  Protocol protocol(std::uint64_t seed) const {
    Protocol p;
    p.n_tasks = tasks;
    p.way = way;
    p.shots = shots;
    p.n_query = n_query;
    p.base_seed = seed;
    p.validate();
    if (bins < 1) throw ConfigError("--bins must be >= 1");
    return p;
  }
};

struct SolverOptions {
  int max_iters = 1000;
  double grad_tol = 1e-6;
  int hmc_samples = 1000;
  int hmc_warmup = 1000;
  int leapfrog = 20;
  double target_accept = 0.8;
  int cv_folds = 5;

  void add(CLI::App* app) {
    app->add_option("--max-iters", max_iters, "optimiser iteration cap")->capture_default_str();
    app->add_option("--grad-tol", grad_tol, "gradient infinity-norm tolerance")->capture_default_str();
    app->add_option("--hmc-samples", hmc_samples, "post-warmup HMC draws")->capture_default_str();
    app->add_option("--hmc-warmup", hmc_warmup, "HMC warmup transitions")->capture_default_str();
    app->add_option("--leapfrog", leapfrog, "leapfrog steps per HMC transition")->capture_default_str();
    app->add_option("--target-accept", target_accept, "HMC step-size adaptation target")->capture_default_str();
    app->add_option("--cv-folds", cv_folds, "maximum cross-validation folds")->capture_default_str();
  }
  MethodOptions method_options() const {
    if (max_iters < 1) throw ConfigError("--max-iters must be >= 1");
    if (!(grad_tol > 0)) throw ConfigError("--grad-tol must be > 0");
    if (cv_folds < 2) throw ConfigError("--cv-folds must be >= 2");
    MethodOptions m;
    m.optimizer.max_iters = max_iters;
    m.optimizer.grad_tolerance = grad_tol;
    m.hmc.n_samples = hmc_samples;
    m.hmc.n_warmup = hmc_warmup;
    m.hmc.leapfrog_steps = leapfrog;
    m.hmc.target_accept = target_accept;
    m.hmc.validate();
    m.cv.max_folds = cv_folds;
    return m;
  }
};

// ---------------------------------------------------------------------------
// Commands

struct IngestCmd {
  std::string csv;
  std::string out = "features.wpk";
  int n_novel = 0;

  void run(const Globals& g) const {
    require_input(csv);
    if (n_novel < 0) throw ConfigError("--n-novel must be >= 0");
    const FeatureTable table = read_csv_table(csv);
    Container c;
    c.metadata["source"] = fs::path(csv).filename().string();
    if (n_novel == 0) {
      c.tables.push_back({"features", table});
    } else {
      const auto& ids = table.class_ids();
      if (n_novel >= static_cast<int>(ids.size()))
        throw ConfigError("--n-novel must leave at least one base class (" + std::to_string(ids.size()) + " classes)");
      const std::set<ClassId> base(ids.begin(), ids.end() - n_novel), novel(ids.end() - n_novel, ids.end());
      auto split = split_classes(table, ClassSplit(base, novel));
      c.tables.push_back({"base", std::move(split.base)});
      c.tables.push_back({"novel", std::move(split.novel)});
    }
    const auto path = output_path(g, out);
    guard_inputs(path, {csv});
    save_container(path, c);
    std::cout << "wrote " << path.string() << " (" << table.rows() << " rows, " << table.class_ids().size()
              << " classes)\n";
  }
};

struct SynthCmd {
  SyntheticWorldConfig cfg;
  std::string out = "world.wpk";

  void run(const Globals& g) {
    cfg.seed = g.seed;
    const SyntheticWorld world = generate_synthetic_world(cfg);
    Container c;
    c.tables.push_back({"base", world.base});
    c.tables.push_back({"novel", world.novel});
    c.tables.push_back({"true", world.true_weights});
    if (world.base_test) c.tables.push_back({"base_test", *world.base_test});
    c.metadata["seed"] = std::to_string(g.seed);
    const auto path = output_path(g, out);
    save_container(path, c);
    std::cout << "wrote " << path.string() << "\n";
  }
};

struct TrainCmd {
  std::string in;
  std::string table = "base";
  std::string out = "wtilde.wpk";
  std::string log = "train_log.json";
  TrainConfig cfg;

  void run(const Globals& g) {
    require_input(in);
    cfg.seed = g.seed;
    cfg.validate();
    const Container data = load_container(in);
    const TrainResult result = train_linear_softmax(table_of(data, table, in), cfg);
    Container c;
    c.tables.push_back({"wtilde", result.weights});
    c.metadata["status"] = to_string(result.status);
    const auto path = output_path(g, out);
    guard_inputs(path, {in});
    save_container(path, c);
    write_text(output_path(g, log), train_log_json(result, cfg, run_info(g, "train")));
    std::cout << "wrote " << path.string() << " (" << to_string(result.status) << ", loss " << result.final_loss
              << ")\n";
  }
};

struct FitPriorCmd {
  std::string weights;
  std::string table = "wtilde";
  std::string prior = "gauss:iso";
  std::string out = "prior.wpk";

  void run(const Globals& g) const {
    require_input(weights);
    const PriorSpec spec = parse_prior_spec(prior);
    const Container c = load_container(weights);
    const WeightPrior fitted = fit_prior(weights_of(c, table, weights).rows(), spec, g.seed);
    const auto path = output_path(g, out);
    guard_inputs(path, {weights});
    write_sections(path, prior_to_sections(fitted, to_string(spec)));
    fs::path sidecar = path;
    sidecar.replace_extension(".json");
    write_text(sidecar, prior_json(fitted, to_string(spec), run_info(g, "fit-prior")));
    std::cout << "wrote " << path.string() << " and " << sidecar.string() << "\n";
  }
};

struct KshotCmd {
  std::string in;
  std::string table = "novel";
  std::string support_table;
  std::string query_table;
  std::string prior_path;
  std::string weights;
  std::string weights_table = "wtilde";
  std::string method = "gauss:iso";
  bool hmc = false;
  int way = 5;
  int k = 1;
  int n_query = 15;
  int task = 0;
  std::string out = "kshot.wpk";
  SolverOptions solver;

  void run(const Globals& g) const {
    require_input(in);
    const MethodOptions options = solver.method_options();
    const Container data = load_container(in);

    std::optional<Episode> episode;
    if (!support_table.empty() || !query_table.empty()) {
      if (support_table.empty() || query_table.empty())
        throw ConfigError("--support-table and --query-table must be given together");
      const FeatureTable& support = table_of(data, support_table, in);
      const FeatureTable& query = table_of(data, query_table, in);
      const auto& ids = support.class_ids();
      std::vector<int> s_targets, q_targets;
      for (ClassId l : support.labels())
        s_targets.push_back(static_cast<int>(std::lower_bound(ids.begin(), ids.end(), l) - ids.begin()));
      for (ClassId l : query.labels()) {
        const auto it = std::lower_bound(ids.begin(), ids.end(), l);
        if (it == ids.end() || *it != l)
          throw ConfigError("query class " + std::to_string(l) + " does not occur in the support set");
        q_targets.push_back(static_cast<int>(it - ids.begin()));
      }
      episode = Episode{.way = static_cast<int>(ids.size()),
                        .k = 0,
                        .n_query = 0,
                        .class_ids = ids,
                        .support = support,
                        .query = query,
                        .support_targets = s_targets,
                        .query_targets = q_targets,
                        .support_rows = {},
                        .query_rows = {},
                        .seed = g.seed,
                        .stream = 0};
    } else {
      episode = sample_episode(table_of(data, table, in), way, k, n_query, g.seed,
                               streams::episodes + static_cast<std::uint64_t>(task));
    }

    Predictor predictor;
    std::string label;
    if (!prior_path.empty()) {
      require_input(prior_path);
      const auto sections = read_sections(prior_path);
      const WeightPrior prior = prior_from_sections(sections);
      const PosteriorSpec post = PosteriorSpec::from_episode(prior, *episode);
      if (hmc) {
        HmcConfig h = options.hmc;
        h.seed = g.seed;
        const HmcResult r = hmc_kshot(post, h);
        predictor = r.samples;
        std::cout << "hmc acceptance " << r.acceptance_rate << ", step " << r.step_size << "\n";
      } else {
        predictor = Predictor::point(map_kshot(post, options.optimizer).weights);
      }
      label = prior_name(prior) + (hmc ? " (hmc)" : " (map)");
    } else {
      MethodSpec spec = parse_method_spec(method);
      if (hmc && spec.kind == MethodSpec::Kind::prior_map) spec.kind = MethodSpec::Kind::prior_hmc;
      std::optional<Matrix> wtilde;
      if (spec.needs_wtilde()) {
        require_input(weights);
        wtilde = weights_of(load_container(weights), weights_table, weights).rows();
      }
      const PreparedMethod prepared(spec, wtilde ? &*wtilde : nullptr, options, g.seed);
      label = prepared.name();
      if (!spec.supports_online()) {
        // Weight-free methods only produce probabilities.
        const Matrix probs = prepared.solve(*episode, g.seed);
        emit(g, *episode, probs, std::nullopt, label);
        return;
      }
      predictor = prepared.learn(episode->support.features(), episode->support_targets, episode->way, nullptr, g.seed);
    }
    emit(g, *episode, predict(predictor, episode->query.features()), predictor, label);
  }

  void emit(const Globals& g, const Episode& ep, const Matrix& probs, const std::optional<Predictor>& predictor,
            const std::string& label) const {
    std::vector<Section> sections;
    sections.push_back(Section::text("meta/method", label));
    sections.push_back(Section::vector("kshot/class_ids", ep.class_ids));
    sections.push_back(Section::matrix("kshot/probabilities", probs));
    std::vector<std::int64_t> targets(ep.query_targets.begin(), ep.query_targets.end());
    sections.push_back(Section::vector("kshot/query_targets", targets));
    if (predictor) {
      const auto& draws = predictor->weights;
      const auto rows = static_cast<std::uint64_t>(draws.front().rows());
      const auto cols = static_cast<std::uint64_t>(draws.front().cols());
      std::vector<double> flat;
      for (const auto& w : draws)
        for (Eigen::Index r = 0; r < w.rows(); ++r)
          for (Eigen::Index c = 0; c < w.cols(); ++c) flat.push_back(w(r, c));
      sections.push_back(Section{"kshot/draws", {draws.size(), rows, cols}, std::move(flat)});
    }
    const auto path = output_path(g, out);
    guard_inputs(path, {in, prior_path, weights});
    write_sections(path, sections);
    std::cout << label << ": accuracy " << accuracy(probs, ep.query_targets) << ", nll "
              << nll(probs, ep.query_targets) << " on " << probs.rows() << " query points\n";
  }
};

struct BenchCmd {
  std::string in;
  std::string table = "novel";
  std::string weights;
  std::string weights_table = "wtilde";
  std::vector<std::string> methods{"gauss:iso", "logreg:mle", "logreg:wtilde", "nn"};
  std::string prefix = "bench";
  ProtocolOptions protocol;
  SolverOptions solver;

  void run(const Globals& g) const {
    require_input(in);
    const auto specs = parse_methods(methods);
    const Protocol p = protocol.protocol(g.seed);
    EvalOptions eval{solver.method_options(), protocol.bins, g.workers};

    std::optional<Matrix> wtilde;
    bool need = false;
    for (const auto& s : specs) need = need || s.needs_wtilde();
    if (need) {
      require_input(weights);
      wtilde = weights_of(load_container(weights), weights_table, weights).rows();
    }
    const Container data = load_container(in);
    const BenchmarkResult r = run_benchmark(table_of(data, table, in), wtilde ? &*wtilde : nullptr, specs, p, eval);

    write_text(output_path(g, prefix + ".json"), benchmark_json(r, run_info(g, "bench")));
    write_text(output_path(g, prefix + ".csv"), benchmark_csv(r));
    write_text(output_path(g, prefix + "_calibration.svg"), calibration_svg(r));
    for (const auto& e : r.entries)
      std::cout << e.method << " k=" << e.k << ": accuracy " << e.report.accuracy.mean << " +- "
                << e.report.accuracy.sem << ", nll " << e.report.nll.mean << ", ece " << e.report.ece
                << (e.report.n_failed ? ", failed " + std::to_string(e.report.n_failed) : "") << "\n";
  }
};

struct SweepCmd {
  std::string in;
  std::string table = "novel";
  std::string weights;
  std::string weights_table = "wtilde";
  std::vector<double> grid = default_c_grid();
  std::string prefix = "sweep";
  ProtocolOptions protocol;
  SolverOptions solver;

  void run(const Globals& g) const {
    require_input(in);
    require_input(weights);
    const Protocol p = protocol.protocol(g.seed);
    EvalOptions eval{solver.method_options(), protocol.bins, g.workers};
    const Matrix wtilde = weights_of(load_container(weights), weights_table, weights).rows();
    const Container data = load_container(in);
    const SweepResult r = reg_sweep(table_of(data, table, in), wtilde, p, grid, eval);

    write_text(output_path(g, prefix + ".json"), sweep_json(r, run_info(g, "sweep")));
    write_text(output_path(g, prefix + ".csv"), sweep_csv(r));
    write_text(output_path(g, prefix + ".svg"), sweep_svg(r));
    for (const auto& e : r.from_weights.entries)
      std::cout << "from weights C=" << e.c.value_or(0) << " k=" << e.k << ": accuracy " << e.report.accuracy.mean
                << ", nll " << e.report.nll.mean << "\n";
  }
};

struct OnlineCmd {
  std::string in;
  std::string novel_table = "novel";
  std::string base_test_table = "base_test";
  std::string weights;
  std::string weights_table = "wtilde";
  std::vector<std::string> methods{"gauss:iso", "logreg:mle"};
  int k = 5;
  bool ablation = false;
  std::string prefix = "online";
  ProtocolOptions protocol;
  SolverOptions solver;

  void run(const Globals& g) const {
    require_input(in);
    require_input(weights);
    const auto specs = parse_methods(methods);
    const Protocol p = protocol.protocol(g.seed);
    EvalOptions eval{solver.method_options(), protocol.bins, g.workers};
    const Container wc = load_container(weights);
    const WeightMatrix& wtilde = weights_of(wc, weights_table, weights);
    const Container data = load_container(in);
    const FeatureTable& novel = table_of(data, novel_table, in);
    const FeatureTable& base_test = table_of(data, base_test_table, in);

    std::vector<OnlineRun> runs;
    for (const auto& s : specs) {
      runs.push_back({to_string(s), "joint", k, online_eval(wtilde, s, base_test, novel, p, k, {}, eval)});
      if (ablation) {
        OnlineOptions only_new;
        only_new.only_new = true;
        runs.push_back({to_string(s), "only-new", k, online_eval(wtilde, s, base_test, novel, p, k, only_new, eval)});
      }
    }
    write_text(output_path(g, prefix + ".json"), online_json(runs, run_info(g, "online")));
    write_text(output_path(g, prefix + ".csv"), online_csv(runs));
    for (const auto& r : runs)
      std::cout << r.method << " (" << r.mode << "): all " << r.report.acc_all.mean << ", old "
                << r.report.acc_old.mean << ", new " << r.report.acc_new.mean << "\n";
  }
};

struct ComparePriorsCmd {
  std::string weights;
  std::string weights_table = "wtilde";
  std::vector<std::string> priors{"gauss:iso", "gauss:diag", "gauss:full", "niw-map", "gmm:10:iso", "laplace:diag"};
  int heldout = 10;
  int splits = 50;
  std::string prefix = "compare_priors";

  void run(const Globals& g) const {
    require_input(weights);
    if (priors.empty()) throw ConfigError("no priors given");
    std::vector<PriorSpec> specs;
    for (const auto& t : priors) specs.push_back(parse_prior_spec(t));
    const Matrix wtilde = weights_of(load_container(weights), weights_table, weights).rows();

    std::vector<HeldoutRow> rows;
    for (const auto& s : specs) rows.emplace_back(to_string(s), heldout_logprob(wtilde, s, heldout, splits, g.seed));
    write_text(output_path(g, prefix + ".json"), heldout_json(rows, heldout, run_info(g, "compare-priors")));
    write_text(output_path(g, prefix + ".csv"), heldout_csv(rows));
    for (const auto& [name, r] : rows)
      std::cout << name << ": " << r.mean << " +- " << r.sem << (r.warning ? " (many splits skipped)" : "") << "\n";
  }
};

void add_weights_options(CLI::App* sub, std::string& weights, std::string& weights_table) {
  sub->add_option("--weights", weights, "container holding the base-class weights");
  sub->add_option("--weights-table", weights_table, "weight table name")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Probabilistic k-shot learning with transferred weight priors", "kshot"};
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "TOML config file; command-line flags take precedence");
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "top-level seed")->capture_default_str();
  app.add_option("--workers", g.workers, "episode worker threads")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "output directory")->envname("KSHOT_OUTPUT_DIR")->capture_default_str();
  app.add_flag("!--no-timestamps", g.timestamps, "leave generated_at empty in JSON reports");

  IngestCmd ingest;
  auto* c_ingest = app.add_subcommand("ingest", "convert a labelled CSV feature table into a container");
  c_ingest->add_option("--csv", ingest.csv, "CSV with header label,f0,f1,...")->required();
  c_ingest->add_option("--out", ingest.out, "output container")->capture_default_str();
  c_ingest->add_option("--n-novel", ingest.n_novel, "split off the N highest class ids as novel classes");

  SynthCmd synth;
  auto* c_synth = app.add_subcommand("synth", "generate a synthetic feature world");
  c_synth->add_option("--p", synth.cfg.p, "feature dimension")->capture_default_str();
  c_synth->add_option("--n-base", synth.cfg.n_base, "base classes")->capture_default_str();
  c_synth->add_option("--n-novel", synth.cfg.n_novel, "novel classes")->capture_default_str();
  c_synth->add_option("--per-class", synth.cfg.per_class, "examples per class")->capture_default_str();
  c_synth->add_option("--heldout-per-class", synth.cfg.heldout_per_class, "held-out base examples per class")
      ->capture_default_str();
  c_synth->add_option("--weight-var", synth.cfg.weight_var, "class-weight variance")->capture_default_str();
  c_synth->add_option("--noise-var", synth.cfg.noise_var, "feature noise variance")->capture_default_str();
  c_synth->add_option("--out", synth.out, "output container")->capture_default_str();

  TrainCmd train;
  auto* c_train = app.add_subcommand("train", "train the base softmax weights");
  c_train->add_option("--in", train.in, "feature container")->required();
  c_train->add_option("--table", train.table, "base table name")->capture_default_str();
  c_train->add_option("--l2", train.cfg.l2_strength, "L2 strength")->capture_default_str();
  c_train->add_option("--max-iters", train.cfg.max_iters, "iteration cap")->capture_default_str();
  c_train->add_option("--grad-tol", train.cfg.grad_tolerance, "gradient tolerance")->capture_default_str();
  c_train->add_option("--out", train.out, "weights container")->capture_default_str();
  c_train->add_option("--log", train.log, "training log (JSON)")->capture_default_str();

  FitPriorCmd fit;
  auto* c_fit = app.add_subcommand("fit-prior", "fit a weight prior to the base weights");
  add_weights_options(c_fit, fit.weights, fit.table);
  c_fit->add_option("--prior", fit.prior, "gauss:iso|diag|full, niw-map[:kind], niw-integrated, gmm:S:kind, laplace:diag|iso")
      ->capture_default_str();
  c_fit->add_option("--out", fit.out, "prior container (a .json summary is written next to it)")->capture_default_str();

  KshotCmd ks;
  auto* c_ks = app.add_subcommand("kshot", "learn new-class weights for one episode and predict its queries");
  c_ks->add_option("--in", ks.in, "feature container")->required();
  c_ks->add_option("--table", ks.table, "table to sample the episode from")->capture_default_str();
  c_ks->add_option("--support-table", ks.support_table, "explicit support table (with --query-table)");
  c_ks->add_option("--query-table", ks.query_table, "explicit query table");
  c_ks->add_option("--prior", ks.prior_path, "prior container written by fit-prior");
  add_weights_options(c_ks, ks.weights, ks.weights_table);
  c_ks->add_option("--method", ks.method, "method spec when no --prior is given")->capture_default_str();
  c_ks->add_flag("--hmc", ks.hmc, "sample the posterior with HMC instead of taking the MAP");
  c_ks->add_option("--way", ks.way, "classes per episode")->capture_default_str();
  c_ks->add_option("--k", ks.k, "shots per class")->capture_default_str();
  c_ks->add_option("--n-query", ks.n_query, "query points per class")->capture_default_str();
  c_ks->add_option("--task", ks.task, "episode index")->capture_default_str();
  c_ks->add_option("--out", ks.out, "output container")->capture_default_str();
  ks.solver.add(c_ks);

  BenchCmd bench;
  auto* c_bench = app.add_subcommand("bench", "run the episodic benchmark");
  c_bench->add_option("--in", bench.in, "feature container")->required();
  c_bench->add_option("--table", bench.table, "novel table name")->capture_default_str();
  add_weights_options(c_bench, bench.weights, bench.weights_table);
  c_bench->add_option("--methods", bench.methods, "method specs")->delimiter(',')->capture_default_str();
  c_bench->add_option("--prefix", bench.prefix, "report file prefix")->capture_default_str();
  bench.protocol.add(c_bench);
  bench.solver.add(c_bench);

  SweepCmd sweep;
  auto* c_sweep = app.add_subcommand("sweep", "logistic-regression regularisation sweep");
  c_sweep->add_option("--in", sweep.in, "feature container")->required();
  c_sweep->add_option("--table", sweep.table, "novel table name")->capture_default_str();
  add_weights_options(c_sweep, sweep.weights, sweep.weights_table);
  c_sweep->add_option("--grid", sweep.grid, "C values")->delimiter(',')->capture_default_str();
  c_sweep->add_option("--prefix", sweep.prefix, "report file prefix")->capture_default_str();
  sweep.protocol.add(c_sweep);
  sweep.solver.add(c_sweep);

  OnlineCmd online;
  auto* c_online = app.add_subcommand("online", "joint old+new evaluation");
  c_online->add_option("--in", online.in, "feature container")->required();
  c_online->add_option("--novel-table", online.novel_table, "novel table name")->capture_default_str();
  c_online->add_option("--base-test-table", online.base_test_table, "held-out base table name")->capture_default_str();
  add_weights_options(c_online, online.weights, online.weights_table);
  c_online->add_option("--methods", online.methods, "method specs")->delimiter(',')->capture_default_str();
  c_online->add_option("--k", online.k, "shots per class")->capture_default_str();
  c_online->add_flag("--ablation", online.ablation, "also learn without the old rows in the softmax");
  c_online->add_option("--prefix", online.prefix, "report file prefix")->capture_default_str();
  online.protocol.add(c_online, false);
  online.solver.add(c_online);

  ComparePriorsCmd compare;
  auto* c_compare = app.add_subcommand("compare-priors", "held-out log-probability of weight models");
  add_weights_options(c_compare, compare.weights, compare.weights_table);
  c_compare->add_option("--priors", compare.priors, "prior specs")->delimiter(',')->capture_default_str();
  c_compare->add_option("--heldout", compare.heldout, "rows held out per split")->capture_default_str();
  c_compare->add_option("--splits", compare.splits, "random splits")->capture_default_str();
  c_compare->add_option("--prefix", compare.prefix, "report file prefix")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (g.workers < 1) throw ConfigError("--workers must be >= 1");
    if (*c_ingest) ingest.run(g);
    else if (*c_synth) synth.run(g);
    else if (*c_train) train.run(g);
    else if (*c_fit) fit.run(g);
    else if (*c_ks) ks.run(g);
    else if (*c_bench) bench.run(g);
    else if (*c_sweep) sweep.run(g);
    else if (*c_online) online.run(g);
    else if (*c_compare) compare.run(g);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
