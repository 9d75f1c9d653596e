#include "kshot/optim.hpp"

#include "kshot/error.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>

namespace kshot {

const char* to_string(LbfgsStatus status) noexcept {
  switch (status) {
    case LbfgsStatus::converged: return "converged";
    case LbfgsStatus::max_iters: return "max_iters";
    case LbfgsStatus::line_search_failed: return "line_search_failed";
  }
  return "unknown";
}

namespace {

struct Probe {
  double step;
  double value;
  double slope;  // directional derivative
  Vector x;
  Vector grad;
};

struct LineSearch {
  const Objective& objective;
  const Vector& x0;
  const Vector& direction;
  double f0;
  double slope0;
  const LbfgsOptions& opt;
  int evaluations = 0;

  Probe eval(double step) {
    ++evaluations;
    Probe p{step, 0, 0, x0 + step * direction, Vector(x0.size())};
    p.value = objective(p.x, p.grad);
    p.slope = p.grad.dot(direction);
    return p;
  }

  bool armijo(const Probe& p) const { return p.value <= f0 + opt.c1 * p.step * slope0; }
  bool curvature(const Probe& p) const { return std::abs(p.slope) <= -opt.c2 * slope0; }

  static double cubic_min(const Probe& a, const Probe& b) {
    const double d1 = a.slope + b.slope - 3.0 * (a.value - b.value) / (a.step - b.step);
    const double disc = d1 * d1 - a.slope * b.slope;
    if (!(disc >= 0.0)) return std::numeric_limits<double>::quiet_NaN();
    const double d2 = std::copysign(std::sqrt(disc), b.step - a.step);
    return b.step - (b.step - a.step) * (b.slope + d2 - d1) / (b.slope - a.slope + 2.0 * d2);
  }

  std::optional<Probe> zoom(Probe lo, Probe hi) {
    while (evaluations < opt.max_line_search) {
      const double width = hi.step - lo.step;
      if (std::abs(width) <= 1e-14 * std::max(1.0, std::abs(lo.step))) break;
      double trial = cubic_min(lo, hi);
      const double left = std::min(lo.step, hi.step) + 0.1 * std::abs(width);
      const double right = std::max(lo.step, hi.step) - 0.1 * std::abs(width);
      if (!std::isfinite(trial) || trial < left || trial > right) trial = 0.5 * (lo.step + hi.step);
      Probe p = eval(trial);
      if (!std::isfinite(p.value) || !armijo(p) || p.value >= lo.value) {
        hi = std::move(p);
      } else {
        if (curvature(p)) return p;
        if (p.slope * (hi.step - lo.step) >= 0) hi = lo;
        lo = std::move(p);
      }
    }
    // Interval collapsed: settle for sufficient decrease if lo made progress.
    if (lo.step > 0 && lo.value < f0) return lo;
    return std::nullopt;
  }

  std::optional<Probe> run(double initial_step) {
    Probe prev{0.0, f0, slope0, x0, Vector()};
    double step = initial_step;
    for (int i = 0; evaluations < opt.max_line_search; ++i) {
      Probe p = eval(step);
      if (!std::isfinite(p.value)) {
        // Overshot into an overflow region; pull back toward the last good step.
        step = prev.step + 0.5 * (step - prev.step);
        continue;
      }
      if (!armijo(p) || (i > 0 && p.value >= prev.value)) return zoom(std::move(prev), std::move(p));
      if (curvature(p)) return p;
      if (p.slope >= 0) return zoom(std::move(p), std::move(prev));
      prev = std::move(p);
      step *= 2.0;
    }
    return std::nullopt;
  }
};

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& objective, Vector x0, const LbfgsOptions& options) {
  if (options.max_iters < 1 || options.history < 1 || !(options.grad_tolerance > 0))
    throw ConfigError("lbfgs: max_iters, history and grad_tolerance must be positive");

  LbfgsResult result;
  result.x = std::move(x0);
  Vector grad(result.x.size());
  double value = objective(result.x, grad);
  if (!std::isfinite(value) || !grad.allFinite())
    throw NumericError("lbfgs: non-finite objective at the starting point");
  result.trace.push_back({0, value, grad.lpNorm<Eigen::Infinity>()});

  std::deque<Vector> s_hist, y_hist;
  std::deque<double> rho_hist;
  Vector direction(result.x.size());
  std::vector<double> alpha(static_cast<std::size_t>(options.history));

  result.status = LbfgsStatus::max_iters;
  int iter = 0;
  bool retried = false;
  while (true) {
    if (grad.lpNorm<Eigen::Infinity>() <= options.grad_tolerance) {
      result.status = LbfgsStatus::converged;
      break;
    }
    if (iter >= options.max_iters) break;

    // Two-loop recursion for direction = -H grad.
    direction = -grad;
    const auto m = s_hist.size();
    for (std::size_t i = m; i-- > 0;) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(direction);
      direction -= alpha[i] * y_hist[i];
    }
    if (m > 0) direction *= s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    for (std::size_t i = 0; i < m; ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(direction);
      direction += (alpha[i] - beta) * s_hist[i];
    }
    double slope = grad.dot(direction);
    if (!(slope < 0)) {
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      direction = -grad;
      slope = -grad.squaredNorm();
    }
    const double initial_step = s_hist.empty() ? 1.0 / std::max(1.0, direction.norm()) : 1.0;

    LineSearch search{objective, result.x, direction, value, slope, options};
    auto accepted = search.run(initial_step);
    if (!accepted) {
      if (!s_hist.empty() && !retried) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        retried = true;
        continue;
      }
      result.status = LbfgsStatus::line_search_failed;
      break;
    }
    retried = false;
    if (!std::isfinite(accepted->value) || !accepted->grad.allFinite())
      throw NumericError("lbfgs: non-finite objective at iteration " + std::to_string(iter + 1));

    Vector s = accepted->x - result.x;
    Vector y = accepted->grad - grad;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (static_cast<int>(s_hist.size()) == options.history) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
    }
    result.x = std::move(accepted->x);
    grad = std::move(accepted->grad);
    value = accepted->value;
    ++iter;
    result.trace.push_back({iter, value, grad.lpNorm<Eigen::Infinity>()});
  }
  result.value = value;
  result.grad_norm = grad.lpNorm<Eigen::Infinity>();
  result.iterations = iter;
  return result;
}

}  // namespace kshot
