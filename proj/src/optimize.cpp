#include "calad/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>

namespace calad {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double max_norm(std::span<const double> g) {
  double m = 0.0;
  for (double v : g) m = std::max(m, std::abs(v));
  return m;
}

struct Correction {
  std::vector<double> s, y;
  double rho;
};

}  // namespace

LbfgsResult minimize_lbfgs(const Objective& f, std::vector<double> x0, const LbfgsConfig& cfg) {
  const std::size_t n = x0.size();
  LbfgsResult r;
  r.x = std::move(x0);
  std::vector<double> g(n), g_new(n), x_new(n), dir(n), alpha(cfg.history);
  r.value = f(r.x, g);
  std::deque<Correction> memory;

  for (r.iterations = 0; r.iterations < cfg.max_iterations; ++r.iterations) {
    r.gradient_max_norm = max_norm(g);
    if (r.gradient_max_norm < cfg.gradient_tolerance) {
      r.converged = true;
      return r;
    }

    // Two-loop recursion.
    for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
    for (std::size_t k = memory.size(); k-- > 0;) {
      alpha[k] = memory[k].rho * dot(memory[k].s, dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] -= alpha[k] * memory[k].y[i];
    }
    if (!memory.empty()) {
      const auto& last = memory.back();
      const double gamma = dot(last.s, last.y) / dot(last.y, last.y);
      for (double& d : dir) d *= gamma;
    }
    for (std::size_t k = 0; k < memory.size(); ++k) {
      const double beta = memory[k].rho * dot(memory[k].y, dir);
      for (std::size_t i = 0; i < n; ++i) dir[i] += (alpha[k] - beta) * memory[k].s[i];
    }

    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      memory.clear();
      for (std::size_t i = 0; i < n; ++i) dir[i] = -g[i];
      slope = dot(g, dir);
    }

    double step = memory.empty() ? std::min(1.0, 1.0 / std::max(max_norm(g), 1e-300)) : 1.0;
    double value_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = r.x[i] + step * dir[i];
      value_new = f(x_new, g_new);
      if (std::isfinite(value_new) && value_new <= r.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Correction c{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      c.s[i] = x_new[i] - r.x[i];
      c.y[i] = g_new[i] - g[i];
    }
    const double sy = dot(c.s, c.y);
    const bool stalled = value_new >= r.value && max_norm(c.s) == 0.0;
    r.x.swap(x_new);
    g.swap(g_new);
    r.value = value_new;
    if (stalled) break;
    if (sy > 1e-300) {
      c.rho = 1.0 / sy;
      memory.push_back(std::move(c));
      if (static_cast<int>(memory.size()) > cfg.history) memory.pop_front();
    }
  }
  r.gradient_max_norm = max_norm(g);
  r.converged = r.gradient_max_norm < cfg.gradient_tolerance;
  return r;
}

}  // namespace calad
