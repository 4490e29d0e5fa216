#pragma once

// Test-only reference computations, written independently of the library.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

namespace vqc::oracle {

// Counts for a small instance: wins[i][j] = times i beat j; ties symmetric.
struct SmallInstance {
  std::vector<std::vector<double>> wins;
  std::vector<std::vector<double>> ties;
  double prior_variance = 10.0;
};

inline double log_posterior(const SmallInstance& in, const std::vector<double>& s) {
  const std::size_t n = s.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    total -= s[i] * s[i] / (2.0 * in.prior_variance);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double p = 1.0 / (1.0 + std::exp(-(s[i] - s[j])));
      total += in.wins[i][j] * std::log(p);
      // each unordered tie contributes log p_ij + log p_ji; visiting both
      // orders and halving counts it once
      total += 0.5 * in.ties[i][j] * (std::log(p) + std::log(1.0 - p));
    }
  }
  return total;
}

// Coarse-to-fine exhaustive grid search for three items.
inline std::array<double, 3> grid_search_3(const SmallInstance& in) {
  std::array<double, 3> best{0, 0, 0};
  double best_val = -INFINITY;
  double step = 0.1;
  int half = 50;
  for (int level = 0; level < 4; ++level) {
    std::array<double, 3> centre = best;
    if (level == 0) centre = {0, 0, 0};
    for (int a = -half; a <= half; ++a)
      for (int b = -half; b <= half; ++b)
        for (int c = -half; c <= half; ++c) {
          std::vector<double> s{centre[0] + a * step, centre[1] + b * step, centre[2] + c * step};
          const double v = log_posterior(in, s);
          if (v > best_val) {
            best_val = v;
            best = {s[0], s[1], s[2]};
          }
        }
    step /= 10.0;
    half = 20;
  }
  return best;
}

// Central differences of f at x.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& f, std::vector<double> x,
    double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Frozen values from an external optimizer (BFGS, double precision) on the
// three-item instance c01 = c12 = c02 = 9, reverse counts 1, variance 10.
inline constexpr std::array<double, 3> kThreeItemReference = {1.5614357, 0.0, -1.5614357};

}  // namespace vqc::oracle
