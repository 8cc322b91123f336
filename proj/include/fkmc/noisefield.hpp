#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fkmc/model.hpp"
#include "fkmc/pathsim.hpp"

namespace fkmc {

// Rectangular space-time lattice for sheet sampling.  Axis 0 is time; the
// remaining axes are the spatial coordinates.  Nodes along each axis are
// strictly increasing; values are stored row-major with axis 0 slowest.
struct TensorGrid {
  std::vector<std::vector<double>> axes;

  int n_axes() const { return static_cast<int>(axes.size()); }
  int dim_space() const { return n_axes() - 1; }
  std::size_t node_count() const;
  std::size_t cell_count() const;
  void validate() const;

  // uniform lattice: time axis [0, t_max] with nt nodes, each space axis
  // [lo_k, hi_k] with nx nodes
  static TensorGrid uniform(double t_max, int nt,
                            std::span<const std::pair<double, double>> space_ranges, int nx);
};

struct MollifierParams {
  double eps = 0.01;    // spatial heat-kernel bandwidth (variance)
  double delta = 0.05;  // temporal rectangular-window width
};

struct SheetSample {
  TensorGrid grid;
  HurstParams hurst;
  std::uint64_t seed = 0;
  std::vector<double> values;  // one per grid node, axis 0 slowest

  double at(std::span<const int> idx) const;
};

// Exact Gaussian sampling of the fractional sheet on a lattice.  The product
// covariance is factored once per axis (dense Cholesky, with a bounded jitter
// retry), and samples are produced by applying the per-axis factors as tensor
// mode products.  Nodes at coordinate zero carry identically zero values.
class SheetSampler {
 public:
  SheetSampler(TensorGrid grid, HurstParams hurst);
  SheetSample sample(std::uint64_t seed) const;
  const TensorGrid& grid() const { return grid_; }
  const HurstParams& hurst() const { return hurst_; }

 private:
  TensorGrid grid_;
  HurstParams hurst_;
  // per axis: Cholesky factor over the nonzero-coordinate nodes (row-major)
  // plus the positions of those nodes in the axis
  std::vector<std::vector<double>> factors_;
  std::vector<std::vector<int>> nonzero_idx_;
};

SheetSample sample_sheet(const TensorGrid& grid, const HurstParams& hurst, std::uint64_t seed);
// k sheets with seeds derive_seed(master_seed, j), factored once
std::vector<SheetSample> sample_sheets(const TensorGrid& grid, const HurstParams& hurst,
                                       std::uint64_t master_seed, int k, int workers = 0);

void save_sheet(const std::string& filename, const SheetSample& sheet);
SheetSample load_sheet(const std::string& filename);

namespace detail {
// dense lower-Cholesky with the diagonal jitter retry policy; throws
// FactorizationFailure when the matrix stays indefinite after 3 boosts
std::vector<double> cholesky_with_jitter(std::vector<double> m, int n);
}  // namespace detail

// Mollified field built from lattice increments of a sheet:
//   field(t, x) = sum_cells  phi_delta^refl(t - rbar) * p_eps(x - ybar) * dW(cell)
// with the rectangular time window  phi_delta(v) = (1/delta) 1_{[0,delta]}(v)
// evenly reflected about time zero (phi(t - r) + phi(t + r)), which keeps the
// window mass equal to one for t < delta, and the Gaussian p_eps truncated at
// 6 sqrt(eps) per axis.  Kernels are read at cell midpoints.
class SmoothedNoise {
 public:
  SmoothedNoise(const SheetSample& sheet, MollifierParams m);

  double operator()(double t, std::span<const double> x) const;
  const MollifierParams& mollifier() const { return m_; }
  const TensorGrid& grid() const { return grid_; }
  // cell increments of the underlying sheet, row-major over cells
  std::span<const double> increments() const { return dw_; }

 private:
  TensorGrid grid_;
  MollifierParams m_;
  std::vector<double> dw_;                      // rectangular increments per cell
  std::vector<std::vector<double>> midpoints_;  // per axis
};

// Coefficients c over sheet cells so that the path functional
//   V = int_0^{t ^ tau} field(t_eval - s, X_s) ds     (midpoint rule, whole
// cells before the kill) equals  sum_cells c * dW  for every sheet on the
// grid.  Exposing c makes the conditional variance computable exactly.
std::vector<double> path_coefficients(const KilledPath& path, const TensorGrid& grid,
                                      MollifierParams m, double t_eval);

// V^{eps,delta} along a killed path for one sampled sheet
double pathwise_v_regularized(const KilledPath& path, const SmoothedNoise& noise, double t_eval);

// Var of pathwise_v_regularized over sheet randomness for a frozen path,
// computed exactly from the lattice increment covariances (per-axis
// rectangle covariances contracted against the path coefficients).
double conditional_variance_exact(const KilledPath& path, const TensorGrid& grid,
                                  const HurstParams& hurst, MollifierParams m, double t_eval);

// The same variance through the continuum route: the squared H-norm of the
// mollified path functional, reduced to a double sum over path cells of
// closed-form window-pair time integrals and numerically mollified spatial
// kernels.  Independent of any sheet lattice.
double conditional_variance_quadrature(const KilledPath& path, const HurstParams& hurst,
                                       MollifierParams m, double t_eval);

namespace detail {
// E |z + sqrt(2 eps) G|^{2H-2} for standard normal G: the eps-mollified
// spatial kernel (without the H(2H-1) prefactor)
double mollified_spatial_kernel(double z, double hurst, double eps);
// exact double integral of |r-r'|^{2H0-2} against the reflected rectangular
// windows of widths delta centered per the field convention at w and wp
double mollified_time_kernel(double w, double wp, double h0, double delta);
}  // namespace detail

}  // namespace fkmc
