#include "kshot/methods.hpp"

#include "kshot/error.hpp"

#include <charconv>
#include <sstream>

namespace kshot {

bool MethodSpec::needs_wtilde() const noexcept {
  switch (kind) {
    case Kind::prior_map:
    case Kind::prior_hmc: return true;
    case Kind::logreg: return logreg == LogRegMode::from_weights;
    default: return false;
  }
}

bool MethodSpec::supports_online() const noexcept {
  return kind == Kind::prior_map || kind == Kind::prior_hmc || kind == Kind::logreg;
}

MethodSpec parse_method_spec(const std::string& text) {
  MethodSpec spec;
  auto bad = [&](const std::string& why) { return ConfigError("bad method spec '" + text + "': " + why); };

  if (text == "nn") {
    spec.kind = MethodSpec::Kind::nearest_neighbor;
    return spec;
  }
  if (text == "oracle") {
    spec.kind = MethodSpec::Kind::oracle;
    return spec;
  }
  if (text == "uniform") {
    spec.kind = MethodSpec::Kind::uniform;
    return spec;
  }
  if (text.rfind("logreg:", 0) == 0) {
    spec.kind = MethodSpec::Kind::logreg;
    const std::string rest = text.substr(7);
    if (rest == "mle") {
      spec.logreg = MethodSpec::LogRegMode::mle;
    } else if (rest == "cv") {
      spec.logreg = MethodSpec::LogRegMode::cross_validated;
    } else if (rest == "wtilde" || rest == "wtilde:mean") {
      spec.logreg = MethodSpec::LogRegMode::from_weights;
    } else if (rest == "wtilde:zero") {
      spec.logreg = MethodSpec::LogRegMode::from_weights;
      spec.center = RegCenter::zero;
    } else if (rest.rfind("fixed:", 0) == 0) {
      spec.logreg = MethodSpec::LogRegMode::fixed;
      const std::string value = rest.substr(6);
      std::istringstream in(value);
      in >> spec.c;
      if (!in || !in.eof() || !(spec.c > 0)) throw bad("C must be a positive number");
    } else {
      throw bad("expected logreg:mle|cv|fixed:<C>|wtilde[:zero]");
    }
    return spec;
  }

  std::string prior_text = text;
  spec.kind = MethodSpec::Kind::prior_map;
  constexpr std::string_view hmc_suffix = ":hmc";
  if (prior_text.size() > hmc_suffix.size() && prior_text.ends_with(hmc_suffix)) {
    spec.kind = MethodSpec::Kind::prior_hmc;
    prior_text.resize(prior_text.size() - hmc_suffix.size());
  }
  spec.prior = parse_prior_spec(prior_text);
  return spec;
}

std::string to_string(const MethodSpec& spec) {
  switch (spec.kind) {
    case MethodSpec::Kind::prior_map: return to_string(spec.prior);
    case MethodSpec::Kind::prior_hmc: return to_string(spec.prior) + ":hmc";
    case MethodSpec::Kind::nearest_neighbor: return "nn";
    case MethodSpec::Kind::oracle: return "oracle";
    case MethodSpec::Kind::uniform: return "uniform";
    case MethodSpec::Kind::logreg: break;
  }
  switch (spec.logreg) {
    case MethodSpec::LogRegMode::mle: return "logreg:mle";
    case MethodSpec::LogRegMode::cross_validated: return "logreg:cv";
    case MethodSpec::LogRegMode::from_weights:
      return spec.center == RegCenter::zero ? "logreg:wtilde:zero" : "logreg:wtilde";
    case MethodSpec::LogRegMode::fixed: {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, spec.c);
      return "logreg:fixed:" + std::string(buf, res.ptr);
    }
  }
  return "?";
}

PreparedMethod::PreparedMethod(MethodSpec spec, const Matrix* wtilde, MethodOptions options, std::uint64_t seed)
    : spec_(std::move(spec)), name_(to_string(spec_)), options_(std::move(options)) {
  if (spec_.needs_wtilde() && wtilde == nullptr)
    throw ConfigError("method '" + name_ + "' needs base-class weights");
  if (spec_.kind == MethodSpec::Kind::prior_map || spec_.kind == MethodSpec::Kind::prior_hmc) {
    prior_ = fit_prior(*wtilde, spec_.prior, seed);
  } else if (spec_.kind == MethodSpec::Kind::logreg) {
    if (spec_.logreg == MethodSpec::LogRegMode::fixed) c_ = spec_.c;
    if (spec_.logreg == MethodSpec::LogRegMode::from_weights) c_ = reg_from_weights(*wtilde, spec_.center);
  }
  if (spec_.kind == MethodSpec::Kind::prior_hmc) options_.hmc.validate();
}

Predictor PreparedMethod::learn(const Matrix& features, std::span<const int> targets, int way,
                                const Matrix* fixed_rows, std::uint64_t task_seed) const {
  switch (spec_.kind) {
    case MethodSpec::Kind::prior_map:
    case MethodSpec::Kind::prior_hmc: {
      PosteriorSpec post{*prior_, features, std::vector<int>(targets.begin(), targets.end()), way, std::nullopt};
      if (fixed_rows) post.fixed_rows = *fixed_rows;
      if (spec_.kind == MethodSpec::Kind::prior_map) return Predictor::point(map_kshot(post, options_.optimizer).weights);
      HmcConfig hmc = options_.hmc;
      hmc.seed = task_seed;
      return hmc_kshot(post, hmc).samples;
    }
    case MethodSpec::Kind::logreg: {
      LogRegReg reg = LogRegMle{};
      if (c_) reg = LogRegFixed{*c_};
      if (spec_.logreg == MethodSpec::LogRegMode::cross_validated) reg = options_.cv;
      return Predictor::point(logreg_fit(features, targets, way, reg, options_.optimizer, fixed_rows).weights);
    }
    default: throw ConfigError("method '" + name_ + "' does not learn class weights");
  }
}

Matrix PreparedMethod::solve(const Episode& episode, std::uint64_t task_seed) const {
  const Matrix& query = episode.query.features();
  switch (spec_.kind) {
    case MethodSpec::Kind::oracle: {
      Matrix out = Matrix::Zero(query.rows(), episode.way);
      for (Eigen::Index i = 0; i < query.rows(); ++i) out(i, episode.query_targets[static_cast<std::size_t>(i)]) = 1.0;
      return out;
    }
    case MethodSpec::Kind::uniform: return Matrix::Constant(query.rows(), episode.way, 1.0 / episode.way);
    case MethodSpec::Kind::nearest_neighbor: return nearest_neighbor(episode.support, query).probabilities;
    default: break;
  }
  const Predictor predictor =
      learn(episode.support.features(), episode.support_targets, episode.way, nullptr, task_seed);
  return predict(predictor, query);
}

}  // namespace kshot
