#include "fkmc/kernels.hpp"

#include <algorithm>
#include <cmath>

namespace fkmc {

namespace {

void check_h0(double h0) {
  if (!(h0 > 0.5 && h0 < 1.0)) throw HurstOutOfRange("temporal index must lie in (1/2, 1)");
}

void check_grid(std::span<const double> grid) {
  if (grid.size() < 2) throw DegenerateGrid("temporal grid needs at least 2 nodes");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (!(grid[i] > grid[i - 1])) throw DegenerateGrid("temporal grid must be strictly increasing");
}

}  // namespace

double KernelWeights::total() const {
  double s = 0;
  for (double v : w) s += v;
  return s;
}

KernelWeights temporal_weights_cross(std::span<const double> grid_row,
                                     std::span<const double> grid_col, double h0,
                                     double clock_shift) {
  check_h0(h0);
  check_grid(grid_row);
  check_grid(grid_col);
  if (!std::isfinite(clock_shift)) throw DegenerateGrid("clock shift must be finite");
  KernelWeights kw;
  kw.h0 = h0;
  kw.grid_row.assign(grid_row.begin(), grid_row.end());
  kw.grid_col.assign(grid_col.begin(), grid_col.end());
  kw.rows = static_cast<int>(grid_row.size()) - 1;
  kw.cols = static_cast<int>(grid_col.size()) - 1;
  kw.w.resize(static_cast<std::size_t>(kw.rows) * kw.cols);
  const double p = 2.0 * h0;
  const double norm = p * (p - 1.0);
  auto g = [p, norm](double z) { return std::pow(std::abs(z), p) / norm; };
  for (int i = 0; i < kw.rows; ++i) {
    const double a = grid_row[i], b = grid_row[i + 1];
    for (int j = 0; j < kw.cols; ++j) {
      const double c = grid_col[j] + clock_shift, d = grid_col[j + 1] + clock_shift;
      kw.w[static_cast<std::size_t>(i) * kw.cols + j] = g(b - c) + g(a - d) - g(a - c) - g(b - d);
    }
  }
  return kw;
}

KernelWeights temporal_weights(std::span<const double> grid, double h0) {
  return temporal_weights_cross(grid, grid, h0);
}

double temporal_cell_integral(double a, double b, double c, double d, double h0) {
  check_h0(h0);
  const double p = 2.0 * h0;
  const double norm = p * (p - 1.0);
  auto g = [p, norm](double z) { return std::pow(std::abs(z), p) / norm; };
  return g(b - c) + g(a - d) - g(a - c) - g(b - d);
}

namespace {

bool grids_match(std::span<const double> a, std::span<const double> b, int cells_needed) {
  if (static_cast<int>(a.size()) < cells_needed + 1 || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::abs(a[i] - b[i]) > 1e-12 * (1.0 + std::abs(a[i]))) return false;
  return true;
}

}  // namespace

PairEnergy pair_energy(const KilledPath& a, const KilledPath& b, const HurstParams& hurst,
                       const KernelWeights& weights, double floor_coeff) {
  if (a.dim != b.dim) throw DimensionMismatch("paths have different dimensions");
  hurst.validate(a.dim);
  if (!(floor_coeff > 0)) throw DegenerateGrid("spatial floor coefficient must be positive");
  const int na = a.active_cells();
  const int nb = b.active_cells();
  PairEnergy pe;
  if (na == 0 || nb == 0) return pe;
  if (!grids_match(a.times, weights.grid_row, na) || !grids_match(b.times, weights.grid_col, nb))
    throw GridMismatch("weight grids do not match the path grids");

  const int d = a.dim;
  const double floor_gap = floor_coeff * std::sqrt(0.5 * (a.dt() + b.dt()));
  std::vector<double> exps(d);
  for (int m = 0; m < d; ++m) exps[m] = 2.0 * hurst.h_space[m] - 2.0;

  // cell midpoints
  std::vector<double> mid_a(static_cast<std::size_t>(na) * d), mid_b(static_cast<std::size_t>(nb) * d);
  for (int i = 0; i < na; ++i)
    for (int m = 0; m < d; ++m)
      mid_a[static_cast<std::size_t>(i) * d + m] =
          0.5 * (a.states[static_cast<std::size_t>(i) * d + m] +
                 a.states[static_cast<std::size_t>(i + 1) * d + m]);
  for (int j = 0; j < nb; ++j)
    for (int m = 0; m < d; ++m)
      mid_b[static_cast<std::size_t>(j) * d + m] =
          0.5 * (b.states[static_cast<std::size_t>(j) * d + m] +
                 b.states[static_cast<std::size_t>(j + 1) * d + m]);

  for (int i = 0; i < na; ++i) {
    const double* xa = &mid_a[static_cast<std::size_t>(i) * d];
    for (int j = 0; j < nb; ++j) {
      const double* xb = &mid_b[static_cast<std::size_t>(j) * d];
      double factor = 1.0;
      bool clipped = false;
      for (int m = 0; m < d; ++m) {
        double gap = std::abs(xa[m] - xb[m]);
        if (gap < floor_gap) {
          gap = floor_gap;
          clipped = true;
        }
        factor *= std::pow(gap, exps[m]);
      }
      pe.value += weights.at(i, j) * factor;
      if (clipped) ++pe.clipped_cells;
    }
  }
  return pe;
}

double wick_correction(const KilledPath& p, const HurstParams& hurst, const KernelWeights& weights,
                       double floor_coeff) {
  return 0.5 * hurst.kernel_prefactor() * pair_energy(p, p, hurst, weights, floor_coeff).value;
}

}  // namespace fkmc
