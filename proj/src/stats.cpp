#include "fkmc/stats.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace fkmc {

PlaneFit plane_fit(std::span<const double> u, std::span<const double> v, std::span<const double> y) {
  const std::size_t n = u.size();
  if (v.size() != n || y.size() != n || n < 4)
    throw InsufficientSamples("plane_fit needs >= 4 matched points");
  // normal equations for [1, u, v]
  std::array<double, 9> a{};
  std::array<double, 3> b{};
  for (std::size_t i = 0; i < n; ++i) {
    const std::array<double, 3> row{1.0, u[i], v[i]};
    for (int r = 0; r < 3; ++r) {
      b[r] += row[r] * y[i];
      for (int c = 0; c < 3; ++c) a[3 * r + c] += row[r] * row[c];
    }
  }
  // Gaussian elimination with partial pivoting on the 3x3 system
  std::array<double, 3> x{};
  {
    std::array<double, 12> m{};
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) m[4 * r + c] = a[3 * r + c];
      m[4 * r + 3] = b[r];
    }
    for (int col = 0; col < 3; ++col) {
      int piv = col;
      for (int r = col + 1; r < 3; ++r)
        if (std::abs(m[4 * r + col]) > std::abs(m[4 * piv + col])) piv = r;
      for (int c = 0; c < 4; ++c) std::swap(m[4 * col + c], m[4 * piv + c]);
      if (std::abs(m[4 * col + col]) < 1e-14) throw DegenerateGrid("plane_fit: singular design");
      for (int r = 0; r < 3; ++r) {
        if (r == col) continue;
        const double f = m[4 * r + col] / m[4 * col + col];
        for (int c = col; c < 4; ++c) m[4 * r + c] -= f * m[4 * col + c];
      }
    }
    for (int r = 0; r < 3; ++r) x[r] = m[4 * r + 3] / m[4 * r + r];
  }
  PlaneFit f;
  f.c0 = x[0];
  f.c1 = x[1];
  f.c2 = x[2];
  double my = 0;
  for (std::size_t i = 0; i < n; ++i) my += y[i];
  my /= static_cast<double>(n);
  double rss = 0, tss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = y[i] - (f.c0 + f.c1 * u[i] + f.c2 * v[i]);
    rss += e * e;
    tss += (y[i] - my) * (y[i] - my);
  }
  f.r2 = tss > 0 ? 1.0 - rss / tss : 1.0;
  return f;
}

double ks_statistic_standard_normal(std::vector<double> sample) {
  if (sample.size() < 8) throw InsufficientSamples("ks test needs >= 8 samples");
  std::sort(sample.begin(), sample.end());
  const double n = static_cast<double>(sample.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const double f = normal_cdf(sample[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double median(std::vector<double> xs) {
  if (xs.empty()) throw InsufficientSamples("median of empty sample");
  const std::size_t mid = xs.size() / 2;
  std::nth_element(xs.begin(), xs.begin() + mid, xs.end());
  double hi = xs[mid];
  if (xs.size() % 2 == 1) return hi;
  double lo = *std::max_element(xs.begin(), xs.begin() + mid);
  return 0.5 * (lo + hi);
}

double median_of_means(std::span<const double> xs, int groups) {
  if (groups < 1) groups = 1;
  if (xs.size() < static_cast<std::size_t>(groups))
    throw InsufficientSamples("median_of_means: fewer samples than groups");
  std::vector<double> means;
  means.reserve(groups);
  const std::size_t n = xs.size();
  for (int g = 0; g < groups; ++g) {
    const std::size_t lo = n * g / groups;
    const std::size_t hi = n * (g + 1) / groups;
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += xs[i];
    means.push_back(s / static_cast<double>(hi - lo));
  }
  return median(std::move(means));
}

LogMeanEstimate log_mean_jackknife(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n < 2) throw InsufficientSamples("log_mean_jackknife needs >= 2 samples");
  double total = std::accumulate(xs.begin(), xs.end(), 0.0);
  if (total <= 0) throw NonPositiveEstimate("log of non-positive sample mean");
  LogMeanEstimate est;
  est.log_mean = std::log(total / static_cast<double>(n));
  double mean_loo = 0;
  std::vector<double> loo(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double rest = total - xs[i];
    loo[i] = rest > 0 ? std::log(rest / static_cast<double>(n - 1)) : est.log_mean;
    mean_loo += loo[i];
  }
  mean_loo /= static_cast<double>(n);
  double ss = 0;
  for (std::size_t i = 0; i < n; ++i) ss += (loo[i] - mean_loo) * (loo[i] - mean_loo);
  est.jackknife_se = std::sqrt(ss * static_cast<double>(n - 1) / static_cast<double>(n));
  return est;
}

}  // namespace fkmc
