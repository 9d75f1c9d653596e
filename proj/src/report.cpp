#include "kshot/report.hpp"

#include "kshot/error.hpp"

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace kshot {

using nlohmann::json;

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

namespace {

json header(const RunInfo& info) {
  return {{"command", info.command}, {"seed", info.seed}, {"generated_at", info.generated_at}};
}

json to_json(const Estimate& e) { return {{"mean", e.mean}, {"sem", e.sem}}; }

json to_json(const Protocol& p) {
  return {{"n_tasks", p.n_tasks}, {"way", p.way}, {"shots", p.shots}, {"n_query", p.n_query},
          {"base_seed", p.base_seed}};
}

json to_json(const CalibrationReport& r) {
  json bins = json::array();
  for (const auto& b : r.bins)
    bins.push_back({{"lower", b.lower}, {"upper", b.upper}, {"mean_confidence", b.mean_confidence},
                    {"accuracy", b.accuracy}, {"count", b.count}});
  return {{"accuracy", to_json(r.accuracy)}, {"nll", to_json(r.nll)}, {"ece", r.ece},
          {"n_points", r.n_points},          {"n_tasks", r.n_tasks},  {"n_failed", r.n_failed},
          {"failures", r.failures},          {"bins", bins},          {"uncertainty", "sem over tasks"}};
}

json to_json(const BenchmarkEntry& e) {
  json out = {{"method", e.method}, {"k", e.k}, {"report", to_json(e.report)}};
  if (e.c) out["c"] = *e.c;
  if (e.method == "nn") out["calibrated"] = false;
  return out;
}

json to_json(const BenchmarkResult& r) {
  json entries = json::array();
  for (const auto& e : r.entries) entries.push_back(to_json(e));
  return {{"protocol", to_json(r.protocol)}, {"entries", entries}};
}

std::string fmt(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

std::string csv_row(const BenchmarkEntry& e) {
  const auto& r = e.report;
  std::ostringstream out;
  out << e.method << ',' << e.k << ',' << (e.c ? fmt(*e.c) : "") << ',' << fmt(r.accuracy.mean) << ','
      << fmt(r.accuracy.sem) << ',' << fmt(r.nll.mean) << ',' << fmt(r.nll.sem) << ',' << fmt(r.ece) << ','
      << r.n_points << ',' << r.n_tasks << ',' << r.n_failed << '\n';
  return out.str();
}

constexpr const char* kCsvHeader = "method,k,c,accuracy,accuracy_sem,nll,nll_sem,ece,n_points,n_tasks,n_failed\n";

// Minimal SVG plotting on a fixed 480x360 canvas with a 50 px margin.
class Plot {
 public:
  Plot(double x0, double x1, double y0, double y1) : x0_(x0), x1_(x1), y0_(y0), y1_(y1) {
    if (x1_ <= x0_) x1_ = x0_ + 1;
    if (y1_ <= y0_) y1_ = y0_ + 1;
  }

  double sx(double x) const { return 50 + (x - x0_) / (x1_ - x0_) * 380; }
  double sy(double y) const { return 310 - (y - y0_) / (y1_ - y0_) * 260; }

  void line(double xa, double ya, double xb, double yb, const std::string& style) {
    body_ << "<line x1=\"" << sx(xa) << "\" y1=\"" << sy(ya) << "\" x2=\"" << sx(xb) << "\" y2=\"" << sy(yb)
          << "\" " << style << "/>\n";
  }
  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& colour, bool dashed = false) {
    body_ << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.5\" "
          << (dashed ? "stroke-dasharray=\"5 3\" " : "") << "points=\"";
    for (const auto& [x, y] : pts) body_ << sx(x) << ',' << sy(y) << ' ';
    body_ << "\"/>\n";
  }
  void text(double px, double py, const std::string& s, const std::string& colour = "black") {
    body_ << "<text x=\"" << px << "\" y=\"" << py << "\" font-size=\"11\" fill=\"" << colour << "\">" << s
          << "</text>\n";
  }
  void axes(const std::string& xlabel, const std::string& ylabel) {
    body_ << "<rect x=\"50\" y=\"50\" width=\"380\" height=\"260\" fill=\"none\" stroke=\"black\"/>\n";
    text(200, 340, xlabel);
    text(4, 40, ylabel);
    text(44, 326, fmt_short(x0_));
    text(420, 326, fmt_short(x1_));
    text(10, 314, fmt_short(y0_));
    text(10, 54, fmt_short(y1_));
  }
  std::string str() const {
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"360\">\n" + body_.str() + "</svg>\n";
  }

 private:
  static std::string fmt_short(double v) {
    std::ostringstream out;
    out << std::setprecision(3) << v;
    return out.str();
  }
  double x0_, x1_, y0_, y1_;
  std::ostringstream body_;
};

const char* colour(std::size_t i) {
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  return palette[i % (sizeof(palette) / sizeof(palette[0]))];
}

}  // namespace

std::string benchmark_json(const BenchmarkResult& result, const RunInfo& info) {
  json out = header(info);
  out["benchmark"] = to_json(result);
  return out.dump(2) + "\n";
}

std::string benchmark_csv(const BenchmarkResult& result) {
  std::string out = kCsvHeader;
  for (const auto& e : result.entries) out += csv_row(e);
  return out;
}

std::string calibration_svg(const BenchmarkResult& result) {
  Plot plot(0, 1, 0, 1);
  plot.axes("confidence", "accuracy");
  plot.line(0, 0, 1, 1, "stroke=\"grey\" stroke-dasharray=\"4 3\"");
  for (std::size_t i = 0; i < result.entries.size(); ++i) {
    const auto& e = result.entries[i];
    std::vector<std::pair<double, double>> pts;
    for (const auto& b : e.report.bins)
      if (b.count > 0) pts.emplace_back(b.mean_confidence, b.accuracy);
    plot.polyline(pts, colour(i));
    plot.text(440, 60 + 14.0 * static_cast<double>(i), e.method + " k=" + std::to_string(e.k), colour(i));
  }
  return plot.str();
}

std::string sweep_json(const SweepResult& sweep, const RunInfo& info) {
  json out = header(info);
  out["grid"] = to_json(sweep.grid);
  out["from_weights"] = to_json(sweep.from_weights);
  return out.dump(2) + "\n";
}

std::string sweep_csv(const SweepResult& sweep) {
  std::string out = std::string("source,") + kCsvHeader;
  for (const auto& e : sweep.grid.entries) out += "grid," + csv_row(e);
  for (const auto& e : sweep.from_weights.entries) out += "from_weights," + csv_row(e);
  return out;
}

std::string sweep_svg(const SweepResult& sweep) {
  double lo = 1e300, hi = -1e300, nll_hi = 0;
  auto consider = [&](const BenchmarkEntry& e) {
    if (!e.c) return;
    lo = std::min(lo, std::log10(*e.c));
    hi = std::max(hi, std::log10(*e.c));
    nll_hi = std::max(nll_hi, e.report.nll.mean);
  };
  for (const auto& e : sweep.grid.entries) consider(e);
  for (const auto& e : sweep.from_weights.entries) consider(e);
  if (nll_hi <= 0) nll_hi = 1;

  // Accuracy on [0, 1]; NLL rescaled onto the same axis by its maximum.
  Plot plot(lo, hi, 0, 1);
  plot.axes("log10 C", "accuracy (solid), NLL / " + fmt(nll_hi) + " (dashed)");
  std::map<int, std::vector<const BenchmarkEntry*>> by_k;
  for (const auto& e : sweep.grid.entries) by_k[e.k].push_back(&e);
  std::size_t series = 0;
  for (const auto& [k, entries] : by_k) {
    std::vector<std::pair<double, double>> acc, nll;
    for (const auto* e : entries) {
      acc.emplace_back(std::log10(*e->c), e->report.accuracy.mean);
      nll.emplace_back(std::log10(*e->c), e->report.nll.mean / nll_hi);
    }
    plot.polyline(acc, colour(series));
    plot.polyline(nll, colour(series), true);
    plot.text(440, 60 + 14.0 * static_cast<double>(series), "k=" + std::to_string(k), colour(series));
    ++series;
  }
  for (const auto& e : sweep.from_weights.entries)
    if (e.c) plot.line(std::log10(*e.c), 0, std::log10(*e.c), 1, "stroke=\"black\" stroke-dasharray=\"2 2\"");
  return plot.str();
}

std::string online_json(const std::vector<OnlineRun>& runs, const RunInfo& info) {
  json out = header(info);
  json arr = json::array();
  for (const auto& r : runs)
    arr.push_back({{"method", r.method},
                   {"mode", r.mode},
                   {"k", r.k},
                   {"acc_all", to_json(r.report.acc_all)},
                   {"acc_old", to_json(r.report.acc_old)},
                   {"acc_new", to_json(r.report.acc_new)},
                   {"n_episodes", r.report.n_episodes},
                   {"n_failed", r.report.n_failed}});
  out["online"] = arr;
  return out.dump(2) + "\n";
}

std::string online_csv(const std::vector<OnlineRun>& runs) {
  std::ostringstream out;
  out << "method,mode,k,acc_all,acc_all_sem,acc_old,acc_old_sem,acc_new,acc_new_sem,n_episodes,n_failed\n";
  for (const auto& r : runs) {
    const auto& o = r.report;
    out << r.method << ',' << r.mode << ',' << r.k << ',' << fmt(o.acc_all.mean) << ',' << fmt(o.acc_all.sem) << ','
        << fmt(o.acc_old.mean) << ',' << fmt(o.acc_old.sem) << ',' << fmt(o.acc_new.mean) << ','
        << fmt(o.acc_new.sem) << ',' << o.n_episodes << ',' << o.n_failed << '\n';
  }
  return out.str();
}

std::string heldout_json(const std::vector<HeldoutRow>& rows, int n_heldout, const RunInfo& info) {
  json out = header(info);
  out["n_heldout"] = n_heldout;
  json arr = json::array();
  for (const auto& [name, r] : rows)
    arr.push_back({{"prior", name},
                   {"mean", r.mean},
                   {"sem", r.sem},
                   {"n_used", r.n_used},
                   {"n_skipped", r.n_skipped},
                   {"warning", r.warning},
                   {"per_split", r.per_split}});
  out["models"] = arr;
  return out.dump(2) + "\n";
}

std::string heldout_csv(const std::vector<HeldoutRow>& rows) {
  std::ostringstream out;
  out << "prior,mean,sem,n_used,n_skipped,warning\n";
  for (const auto& [name, r] : rows)
    out << name << ',' << fmt(r.mean) << ',' << fmt(r.sem) << ',' << r.n_used << ',' << r.n_skipped << ','
        << (r.warning ? "true" : "false") << '\n';
  return out.str();
}

std::string train_log_json(const TrainResult& result, const TrainConfig& cfg, const RunInfo& info) {
  json out = header(info);
  out["config"] = {{"l2_strength", cfg.l2_strength}, {"max_iters", cfg.max_iters},
                   {"grad_tolerance", cfg.grad_tolerance}};
  out["status"] = to_string(result.status);
  out["final_loss"] = result.final_loss;
  out["grad_norm"] = result.grad_norm;
  json log = json::array();
  for (const auto& t : result.log) log.push_back({{"iteration", t.iteration}, {"loss", t.value}, {"grad_norm", t.grad_norm}});
  out["log"] = log;
  return out.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Prior serialisation

namespace {

void gaussian_sections(std::vector<Section>& out, const std::string& prefix, const GaussianPrior& g) {
  out.push_back(Section::text(prefix + "kind", to_string(g.kind())));
  out.push_back(Section::matrix(prefix + "mean", g.mean()));
  switch (g.kind()) {
    case CovKind::isotropic: out.push_back(Section::matrix(prefix + "variance", Matrix::Constant(1, 1, g.variance()))); break;
    case CovKind::diagonal: out.push_back(Section::matrix(prefix + "variance", g.variances())); break;
    case CovKind::full: out.push_back(Section::matrix(prefix + "variance", g.covariance())); break;
  }
}

const Section& find(const std::vector<Section>& sections, const std::string& name) {
  for (const auto& s : sections)
    if (s.name == name) return s;
  throw FormatError(FormatErrc::malformed, "prior container lacks section '" + name + "'");
}

Vector column(const Section& s) {
  const Matrix m = s.as_matrix();
  return Eigen::Map<const Vector>(m.data(), m.size());
}

GaussianPrior read_gaussian(const std::vector<Section>& sections, const std::string& prefix) {
  const CovKind kind = parse_cov_kind(find(sections, prefix + "kind").as_text());
  Vector mean = column(find(sections, prefix + "mean"));
  const Section& var = find(sections, prefix + "variance");
  switch (kind) {
    case CovKind::isotropic: return GaussianPrior::isotropic(std::move(mean), column(var)(0));
    case CovKind::diagonal: return GaussianPrior::diagonal(std::move(mean), column(var));
    case CovKind::full: break;
  }
  return GaussianPrior::full(std::move(mean), var.as_matrix());
}

json gaussian_json(const GaussianPrior& g) {
  json out = {{"kind", to_string(g.kind())}, {"mean", std::vector<double>(g.mean().data(), g.mean().data() + g.dim())}};
  const Vector v = g.variances();
  out["variances"] = std::vector<double>(v.data(), v.data() + v.size());
  return out;
}

}  // namespace

std::vector<Section> prior_to_sections(const WeightPrior& prior, const std::string& spec) {
  std::vector<Section> out;
  out.push_back(Section::text("prior/spec", spec));
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianPrior>) {
          out.push_back(Section::text("prior/family", "gaussian"));
          gaussian_sections(out, "prior/", p);
        } else if constexpr (std::is_same_v<T, StudentTPredictive>) {
          out.push_back(Section::text("prior/family", "student-t"));
          out.push_back(Section::matrix("prior/dof", Matrix::Constant(1, 1, p.dof())));
          out.push_back(Section::matrix("prior/location", p.location()));
          out.push_back(Section::matrix("prior/scale", p.scale()));
        } else if constexpr (std::is_same_v<T, GMMPrior>) {
          out.push_back(Section::text("prior/family", "gmm"));
          out.push_back(Section::matrix("prior/weights", Eigen::Map<const Vector>(p.weights().data(),
                                                                                  static_cast<Eigen::Index>(p.weights().size()))));
          for (std::size_t i = 0; i < p.components().size(); ++i)
            gaussian_sections(out, "prior/component" + std::to_string(i) + "/", p.components()[i]);
        } else {
          out.push_back(Section::text("prior/family", "laplace"));
          out.push_back(Section::text("prior/kind", to_string(p.kind())));
          out.push_back(Section::matrix("prior/location", p.location()));
          out.push_back(Section::matrix("prior/scale", p.scale()));
        }
      },
      prior);
  return out;
}

WeightPrior prior_from_sections(const std::vector<Section>& sections) {
  const std::string family = find(sections, "prior/family").as_text();
  if (family == "gaussian") return read_gaussian(sections, "prior/");
  if (family == "student-t")
    return StudentTPredictive(column(find(sections, "prior/dof"))(0), column(find(sections, "prior/location")),
                              find(sections, "prior/scale").as_matrix());
  if (family == "gmm") {
    const Vector w = column(find(sections, "prior/weights"));
    std::vector<GaussianPrior> comps;
    for (Eigen::Index i = 0; i < w.size(); ++i)
      comps.push_back(read_gaussian(sections, "prior/component" + std::to_string(i) + "/"));
    return GMMPrior(std::vector<double>(w.data(), w.data() + w.size()), std::move(comps));
  }
  if (family == "laplace") {
    const std::string kind = find(sections, "prior/kind").as_text();
    Vector loc = column(find(sections, "prior/location"));
    Vector scale = column(find(sections, "prior/scale"));
    if (kind == "iso") return LaplacePrior::isotropic(loc(0), scale(0), loc.size());
    return LaplacePrior::diagonal(std::move(loc), std::move(scale));
  }
  throw FormatError(FormatErrc::malformed, "unknown prior family '" + family + "'");
}

std::string prior_json(const WeightPrior& prior, const std::string& spec, const RunInfo& info) {
  json out = header(info);
  out["spec"] = spec;
  out["name"] = prior_name(prior);
  out["dim"] = prior_dim(prior);
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GaussianPrior>) {
          out["parameters"] = gaussian_json(p);
        } else if constexpr (std::is_same_v<T, StudentTPredictive>) {
          out["parameters"] = {{"dof", p.dof()},
                               {"location", std::vector<double>(p.location().data(), p.location().data() + p.dim())}};
        } else if constexpr (std::is_same_v<T, GMMPrior>) {
          json comps = json::array();
          for (const auto& c : p.components()) comps.push_back(gaussian_json(c));
          out["parameters"] = {{"weights", p.weights()}, {"components", comps}};
        } else {
          out["parameters"] = {{"kind", to_string(p.kind())},
                               {"location", std::vector<double>(p.location().data(), p.location().data() + p.dim())},
                               {"scale", std::vector<double>(p.scale().data(), p.scale().data() + p.dim())}};
        }
      },
      prior);
  return out.dump(2) + "\n";
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IoError("failed writing '" + path.string() + "'");
}

}  // namespace kshot
