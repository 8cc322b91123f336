#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "fkmc/model.hpp"
#include "fkmc/pathsim.hpp"

namespace fkmc {

// pointwise fractional covariance kernel  H (2H-1) |x|^{2H-2}; diverges at
// x = 0 (quadratures floor their arguments instead of this function)
inline double fractional_covariance(double hurst, double x) {
  return hurst * (2.0 * hurst - 1.0) * std::pow(std::abs(x), 2.0 * hurst - 2.0);
}

// Exact cell-pair integrals of |r - s|^{2 h0 - 2}.  With the convex second
// antiderivative  G(z) = |z|^{2 h0} / (2 h0 (2 h0 - 1)),
//   int_a^b int_c^d |r-s|^{2h0-2} ds dr = G(b-c) + G(a-d) - G(a-c) - G(b-d),
// which stays exact across the singular diagonal.  Weights are stored for
// every (row cell, col cell) pair of the two node grids.
struct KernelWeights {
  std::vector<double> grid_row, grid_col;  // node times; cells sit in between
  int rows = 0, cols = 0;
  std::vector<double> w;
  double h0 = 0.0;

  double at(int i, int j) const { return w[static_cast<std::size_t>(i) * cols + j]; }
  double total() const;
};

KernelWeights temporal_weights(std::span<const double> grid, double h0);
// clock_shift advances the column times inside the kernel argument only,
// i.e. the integrand becomes |r - (s + clock_shift)|^{2 h0 - 2}; the stored
// grids keep the paths' own clocks.  Needed when the two paths are evaluated
// at different equation times t1, t2: backward time r on the first path and
// s on the second sit at equation times t1 - r and t2 - s, whose gap is
// |r - (s + t1 - t2)|, so pass clock_shift = t1 - t2 with the first path on
// the rows.
KernelWeights temporal_weights_cross(std::span<const double> grid_row,
                                     std::span<const double> grid_col, double h0,
                                     double clock_shift = 0.0);

// exact value of the single cell-pair integral over [a,b] x [c,d]
double temporal_cell_integral(double a, double b, double c, double d, double h0);

inline constexpr double kDefaultSpatialFloor = 0.1;

struct PairEnergy {
  double value = 0.0;
  long clipped_cells = 0;  // cell pairs where some axis hit the spatial floor
};

// Discretized double time integral of the product kernel along two killed
// paths:  sum over cell pairs of  w_ij * prod_m |Xa_i^m - Xb_j^m|^{2 H_m - 2},
// with cell-midpoint states, restricted to the cells before either kill, and
// with each axis gap floored at  floor_coeff * sqrt(mean step) -- below the
// diffusive resolution of one step the raw product carries no information.
// pair_energy(p, p, ...) is the conditional variance of the pathwise noise
// integral divided by the kernel prefactor.
PairEnergy pair_energy(const KilledPath& a, const KilledPath& b, const HurstParams& hurst,
                       const KernelWeights& weights, double floor_coeff = kDefaultSpatialFloor);

// Half the prefactor-weighted self energy: subtracting it from the exponent
// turns the geometric-product estimator into the Wick-product one.
double wick_correction(const KilledPath& p, const HurstParams& hurst,
                       const KernelWeights& weights, double floor_coeff = kDefaultSpatialFloor);

}  // namespace fkmc
