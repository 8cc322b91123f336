#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "fkmc/errors.hpp"

namespace fkmc {

// Mean/variance accumulator with the usual pairwise-merge identity, so that
// two half-run accumulators combine into the full-run one up to roundoff.
struct MeanVar {
  std::int64_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double x) {
    ++n;
    const double d = x - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (x - mean);
  }

  void merge(const MeanVar& o) {
    if (o.n == 0) return;
    if (n == 0) { *this = o; return; }
    const double d = o.mean - mean;
    const double nn = static_cast<double>(n + o.n);
    m2 += o.m2 + d * d * (static_cast<double>(n) * static_cast<double>(o.n)) / nn;
    mean += d * static_cast<double>(o.n) / nn;
    n += o.n;
  }

  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
  double std_error() const { return n > 1 ? std::sqrt(variance() / static_cast<double>(n)) : 0.0; }
};

inline MeanVar accumulate(std::span<const double> xs) {
  MeanVar mv;
  for (double x : xs) mv.add(x);
  return mv;
}

struct LinFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double r2 = 0.0;
};

inline LinFit linear_fit(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n != y.size() || n < 2) throw InsufficientSamples("linear_fit needs >= 2 matched points");
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) { sx += x[i]; sy += y[i]; }
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0) throw DegenerateGrid("linear_fit: all abscissae equal");
  LinFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double rss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.intercept + f.slope * x[i]);
    rss += e * e;
  }
  f.r2 = syy > 0 ? 1.0 - rss / syy : 1.0;
  f.slope_se = n > 2 ? std::sqrt(rss / (static_cast<double>(n - 2) * sxx)) : 0.0;
  return f;
}

// Least squares for y ~ c0 + c1*u + c2*v (3x3 normal equations), returns
// coefficients and r^2.  Used for joint exponent fits across a 2-d sweep.
struct PlaneFit {
  double c0 = 0, c1 = 0, c2 = 0, r2 = 0;
};

PlaneFit plane_fit(std::span<const double> u, std::span<const double> v, std::span<const double> y);

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// One-sample Kolmogorov-Smirnov statistic against the standard normal.
// Asymptotic critical value at level a: c(a)/sqrt(n), c(0.01) ~ 1.628.
double ks_statistic_standard_normal(std::vector<double> sample);
inline double ks_critical_1pct(std::size_t n) { return 1.628 / std::sqrt(static_cast<double>(n)); }

double median(std::vector<double> xs);
double median_of_means(std::span<const double> xs, int groups);

// log of the sample mean together with a jackknife (leave-one-out) standard
// error of that log; robust reporting for heavy-tailed exponential weights.
struct LogMeanEstimate {
  double log_mean = 0.0;
  double jackknife_se = 0.0;
};
LogMeanEstimate log_mean_jackknife(std::span<const double> xs);

}  // namespace fkmc
