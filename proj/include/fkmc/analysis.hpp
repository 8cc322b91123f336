#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fkmc/model.hpp"
#include "fkmc/pathsim.hpp"

namespace fkmc {

// least-squares line fit; r2 is defined as 1 when the responses are constant
struct ExponentFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_slope = 0.0;
  double r2 = 0.0;
  std::pair<double, double> window{0.0, 0.0};  // regressor range used
};

ExponentFit fit_line(std::span<const double> x, std::span<const double> y);

// Closed-form growth and regularity exponents for admissible Hurst indices.
//   rho       = 2 h0 + sum_i h_i - d - 1          (spatial regularity)
//   rho_prime = min(rho, min_i (6 h_i - 5)/(2 h_i - 1)), defined only when
//               every spatial index exceeds 5/6 (rho_prime_or_throw throws
//               HolderUnavailable otherwise)
//   t_exp     = (2 h0 + sum h_i - d) / (sum h_i + 1 - d)
//   p_exp     = (sum h_i + 2 - d) / (sum h_i + 1 - d)
struct TheoryExponents {
  double rho = 0.0;
  std::optional<double> rho_prime;
  double t_exp = 0.0;
  double p_exp = 0.0;

  double rho_prime_or_throw() const;
};

TheoryExponents theory_exponents(const HurstParams& hurst, int dim);

// ---- Holder variance curves --------------------------------------------

// Mean squared gap of the pathwise noise functional between two space-time
// evaluation points, estimated over coupled path pairs sharing Brownian
// increments.  Conditional on the pair, the two functionals are jointly
// Gaussian, so the second moment is a combination of pairwise energies; the
// cross term shifts the second path's clock by t1 - t2 so both kernels run in
// equation time.
struct PairMoment {
  double value = 0.0;
  double se = 0.0;
};

struct HolderOptions {
  int n_steps = 125;  // step count for the first path; shared step size
  int workers = 0;
};

PairMoment holder_pair_moment(const ProblemSpec& spec, double t1, std::span<const double> x1,
                              double t2, std::span<const double> x2, int n_paths,
                              std::uint64_t seed, const HolderOptions& opts = {});

struct HolderCurve {
  std::vector<double> offsets;  // as realized (temporal ones snap to the step)
  std::vector<double> moments;
  std::vector<double> ses;
  ExponentFit fit;  // log moment against log |offset|
};

struct HolderReport {
  HolderCurve spatial;   // x displaced along the first axis
  HolderCurve temporal;  // evaluation time displaced forward
};

// offsets must be nonzero; temporal offsets are snapped to whole steps and
// must stay inside the horizon
HolderReport holder_variance_curve(const ProblemSpec& spec, double t, std::span<const double> x,
                                   std::span<const double> offsets, int n_paths,
                                   std::uint64_t seed, const HolderOptions& opts = {});

// ---- moment growth fits -------------------------------------------------

struct GrowthBudget {
  int n_batches = 1200;
  int n_steps = 100;
  int workers = 0;
  int k_for_t_fit = 2;      // replica order used for the fit in t
  double t_for_k_fit = 1.0; // horizon used for the fit in k (must be in t_grid)
  int survival_probe = 400; // paths used to measure the survival fraction
  double survival_floor = 0.5;
};

struct SweepPoint {
  double t = 0.0;
  int k = 0;
  double moment = 0.0;      // median-of-means replica estimate
  double log_moment = 0.0;
  double se_log = 0.0;
  double survival = 0.0;    // fraction of single paths alive at t
  bool used = false;        // enters the fits (survival and positivity gates)
};

struct GrowthFitReport {
  std::vector<SweepPoint> sweep;
  ExponentFit t_fit;  // log log moment against log t at k = k_for_t_fit
  ExponentFit k_fit;  // log log moment against log k at t = t_for_k_fit
  // joint single-exponent model  log log m = c + a log t + b log k
  double plane_t_exp = 0.0;
  double plane_k_exp = 0.0;
  double plane_r2 = 0.0;
};

// Requires the geometric product and strictly positive data (both are probed
// and violations throw NonPositiveEstimate).  Sweep points whose killed
// survival drops below budget.survival_floor, or whose estimate does not
// exceed one, are excluded from the fits but kept in the sweep table.
GrowthFitReport moment_growth_fit(const ProblemSpec& spec, std::span<const double> x,
                                  std::span<const double> t_grid, std::span<const int> k_grid,
                                  const GrowthBudget& budget, std::uint64_t seed);

// ---- coefficient time-shift sensitivity ----------------------------------

struct SensitivityReport {
  std::vector<double> gaps;    // |t1 - t2|
  std::vector<double> sup_sq;  // E sup_r |X1_r - X2_r|^2
  std::vector<double> ses;
  ExponentFit fit;             // log sup_sq against log gap
};

// Coupled pairs share increments and starting point but freeze the equation
// clock at t1 versus t2; for Lipschitz-in-time drift the expected squared
// supremum gap scales like |t1 - t2|^2.
SensitivityReport time_shift_sensitivity(const ProblemSpec& spec, const PathConfig& cfg,
                                         double t1, std::span<const double> t2_list,
                                         int n_paths, std::uint64_t seed);

}  // namespace fkmc
