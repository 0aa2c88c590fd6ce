#pragma once

// Order-statistics model of Best-of-N selection under an imperfect proxy.
// Each candidate carries a latent quality q and a proxy loss l with
// corr(q, -l) = rho over a bivariate standard normal; selection keeps the
// argmin-loss candidate and the judge score is the probit link
// Phi(a + b * q) scaled to percent. Because the link is bounded, the curve
// over the candidate count flattens, which is exactly the plateau the
// experiments show.
//
// Trials use counter-based substreams, so they are independently
// parallelizable and reproducible, and candidate draws are shared across
// grid points (the pool for n is a prefix of the pool for a larger n).

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "bon/errors.hpp"
#include "bon/rng.hpp"
#include "bon/stats.hpp"

namespace bon {

struct ProxyModel {
  double rho = 0.6;     // corr(quality, -loss), in [-1, 1]
  double link_a = 0.0;  // judge-positive probability is Phi(a + b q)
  double link_b = 1.0;  // b > 0

  void validate() const {
    if (std::abs(rho) > 1.0) throw ValidationError("proxy model: |rho| > 1");
    if (!(link_b > 0.0)) throw ValidationError("proxy model: link slope must be positive");
  }
};

struct BestScoreEstimate {
  double estimate = 0.0;        // mean score in [0, 100]
  double ci_half_width = 0.0;   // 95% normal-approximation half width
  double mean_quality = 0.0;    // mean selected latent quality
  double quality_ci_half = 0.0;
  long trials = 0;
};

namespace detail {

/// Selected quality for one trial: draw n (quality, loss) pairs with
/// corr(q, -l) = rho and return q of the argmin-loss candidate.
inline double selected_quality(const ProxyModel& model, int n, std::uint64_t trial_key) {
  const double mix = std::sqrt(1.0 - model.rho * model.rho);
  double best_neg_loss = -std::numeric_limits<double>::infinity();
  double chosen = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = rng::normal_at(trial_key, 2 * static_cast<std::uint64_t>(i));      // -loss
    const double y = rng::normal_at(trial_key, 2 * static_cast<std::uint64_t>(i) + 1);  // independent part
    if (x > best_neg_loss) {
      best_neg_loss = x;
      chosen = model.rho * x + mix * y;
    }
  }
  return chosen;
}

}  // namespace detail

/// Monte Carlo estimate of the expected judge score when keeping the best of
/// n candidates under the proxy model.
inline BestScoreEstimate expected_best_score(const ProxyModel& model, int n, long trials,
                                             std::uint64_t seed = 2024) {
  model.validate();
  if (n < 1 || trials < 1) throw ValidationError("expected_best_score: need n >= 1 and trials >= 1");
  double sum_s = 0.0, sum_s2 = 0.0, sum_q = 0.0, sum_q2 = 0.0;
  for (long t = 0; t < trials; ++t) {
    const std::uint64_t trial_key = rng::mix2(seed, static_cast<std::uint64_t>(t));
    const double q = detail::selected_quality(model, n, trial_key);
    const double s = 100.0 * stats::normal_cdf(model.link_a + model.link_b * q);
    sum_s += s;
    sum_s2 += s * s;
    sum_q += q;
    sum_q2 += q * q;
  }
  const double inv = 1.0 / static_cast<double>(trials);
  BestScoreEstimate out;
  out.trials = trials;
  out.estimate = sum_s * inv;
  out.mean_quality = sum_q * inv;
  const double var_s = std::max(0.0, sum_s2 * inv - out.estimate * out.estimate);
  const double var_q = std::max(0.0, sum_q2 * inv - out.mean_quality * out.mean_quality);
  out.ci_half_width = stats::ci95_half_width(std::sqrt(var_s), static_cast<std::size_t>(trials));
  out.quality_ci_half = stats::ci95_half_width(std::sqrt(var_q), static_cast<std::size_t>(trials));
  return out;
}

struct PlateauPoint {
  int n = 0;
  double estimate = 0.0;
  double ci_half_width = 0.0;
};

/// Score curve over an ascending candidate-count grid, with candidate draws
/// shared across grid points for variance reduction.
inline std::vector<PlateauPoint> plateau_curve(const ProxyModel& model, std::span<const int> n_grid, long trials,
                                               std::uint64_t seed = 2024) {
  model.validate();
  if (n_grid.empty()) throw ValidationError("plateau_curve: empty grid");
  for (std::size_t i = 0; i + 1 < n_grid.size(); ++i)
    if (n_grid[i] >= n_grid[i + 1]) throw ValidationError("plateau_curve: grid must be strictly ascending");
  if (n_grid.front() < 1) throw ValidationError("plateau_curve: grid entries must be >= 1");

  std::vector<PlateauPoint> out;
  for (int n : n_grid) out.push_back({n, 0.0, 0.0});
  std::vector<double> sums(n_grid.size(), 0.0), sums2(n_grid.size(), 0.0);
  const double mix = std::sqrt(1.0 - model.rho * model.rho);
  for (long t = 0; t < trials; ++t) {
    const std::uint64_t trial_key = rng::mix2(seed, static_cast<std::uint64_t>(t));
    double best_neg_loss = -std::numeric_limits<double>::infinity();
    double chosen = 0.0;
    std::size_t gi = 0;
    for (int i = 0; i < n_grid.back(); ++i) {
      const double x = rng::normal_at(trial_key, 2 * static_cast<std::uint64_t>(i));
      const double y = rng::normal_at(trial_key, 2 * static_cast<std::uint64_t>(i) + 1);
      if (x > best_neg_loss) {
        best_neg_loss = x;
        chosen = model.rho * x + mix * y;
      }
      while (gi < n_grid.size() && i + 1 == n_grid[gi]) {
        const double s = 100.0 * stats::normal_cdf(model.link_a + model.link_b * chosen);
        sums[gi] += s;
        sums2[gi] += s * s;
        ++gi;
      }
    }
  }
  const double inv = 1.0 / static_cast<double>(trials);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].estimate = sums[i] * inv;
    const double var = std::max(0.0, sums2[i] * inv - out[i].estimate * out[i].estimate);
    out[i].ci_half_width = stats::ci95_half_width(std::sqrt(var), static_cast<std::size_t>(trials));
  }
  return out;
}

}  // namespace bon
