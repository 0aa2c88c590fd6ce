#pragma once

#include <cmath>
#include <cstddef>
#include <span>

#include "bon/errors.hpp"

namespace bon::stats {

/// Standard normal CDF.
inline double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::sqrt(2.0));
}

inline double mean(std::span<const double> v) {
  if (v.empty()) throw ValidationError("mean of empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Population standard deviation.
inline double stdev(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw ValidationError("pearson: size mismatch or empty");
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  const double den = std::sqrt(saa * sbb);
  if (den == 0.0) throw ValidationError("pearson: zero variance");
  return sab / den;
}

/// Half-width of a normal-approximation 95% confidence interval for the mean.
inline double ci95_half_width(double sample_stdev, std::size_t n) {
  return 1.959963985 * sample_stdev / std::sqrt(static_cast<double>(n));
}

}  // namespace bon::stats
