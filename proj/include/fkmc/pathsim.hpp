#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "fkmc/model.hpp"

namespace fkmc {

enum class ExitDetection { grid_only, bridge_corrected };

struct PathConfig {
  int n_steps = 200;
  double t_eval = 1.0;          // equation time parameter; also the grid horizon
  std::vector<double> x0;
  std::uint64_t seed = 0;
  ExitDetection exit_detection = ExitDetection::bridge_corrected;
  double clock_start = 0.0;     // simulation clock offset (sub-interval restarts)
};

// One killed trajectory on the uniform grid times[0..n].  states holds the
// recorded points (n_recorded of them); after an exit nothing further is
// recorded.  exit_index is the first index at or after which the path left
// the domain; states[i] is interior for all i < exit_index.
struct KilledPath {
  int dim = 0;
  double t_eval = 0.0;
  std::vector<double> times;
  std::vector<double> states;
  int n_recorded = 0;
  std::optional<int> exit_index;
  std::optional<double> exit_time;
  std::vector<double> exit_point;
  std::uint64_t seed = 0;

  bool exited() const { return exit_index.has_value(); }
  int n_cells() const { return static_cast<int>(times.size()) - 1; }
  // number of whole grid cells lying before the kill; quadratures over
  // [0, t ^ tau] run over exactly these cells
  int active_cells() const { return exited() ? *exit_index : n_cells(); }
  double dt() const { return times[1] - times[0]; }
  double clipped_time() const { return exited() ? *exit_time : times.back(); }
  std::span<const double> state(int i) const {
    return {states.data() + static_cast<std::size_t>(i) * dim, static_cast<std::size_t>(dim)};
  }
  // evaluation point for the payoff: boundary hit location if killed,
  // otherwise the terminal state
  std::span<const double> end_state() const {
    if (exited()) return {exit_point.data(), exit_point.size()};
    return state(n_recorded - 1);
  }
};

// Euler-Maruyama with the reversed-time argument (t_eval - s) fed through the
// even-in-time reflection of the coefficients.  Exits are detected on the
// grid and, in bridge_corrected mode, also inside a step via the one-sided
// crossing probability exp(-2 d1 d2 / (sigma_n^2 dt)) against the nearest
// boundary face, where sigma_n^2 is the diffusion variance along its normal.
KilledPath simulate_path(const ProblemSpec& spec, const PathConfig& cfg);

// k independent replicas; replica j is seeded with derive_seed(master_seed, j)
// so the ensemble is reproducible and mergeable across workers.
std::vector<KilledPath> simulate_replicas(const ProblemSpec& spec, const PathConfig& cfg, int k,
                                          std::uint64_t master_seed, int workers = 0);

// Two trajectories driven by the identical increment stream but with
// different equation time parameters (and optionally different starts and
// horizons); both use the same step size so the shared increments line up.
struct CoupledEndpoint {
  double t_param = 1.0;   // coefficient time argument offset
  double horizon = 1.0;   // simulated span of the path grid
  std::vector<double> x0;
};
std::pair<KilledPath, KilledPath> simulate_coupled_pair(const ProblemSpec& spec,
                                                        const CoupledEndpoint& a,
                                                        const CoupledEndpoint& b, double dt,
                                                        std::uint64_t seed,
                                                        ExitDetection exit_detection);
// convenience wrapper: same start, same horizon cfg.t_eval, time parameters t1/t2
std::pair<KilledPath, KilledPath> simulate_coupled(const ProblemSpec& spec, const PathConfig& cfg,
                                                   double t1, double t2);

// write paths as a small columnar text file with a versioned header
void write_paths_csv(const std::string& filename, std::span<const KilledPath> paths);

struct DensityCheckConfig {
  double s = 1.0;                         // histogram time
  double r = 0.5;                         // intermediate time for the two-step check
  int n_bins = 40;
  long n_paths = 200000;
  int n_steps = 200;
  long transition_paths_per_bin = 10000;
  int transition_steps = 100;
  std::uint64_t seed = 1;
  int workers = 0;
  ExitDetection exit_detection = ExitDetection::bridge_corrected;
  // histogram window; defaults to the domain intersected with a +-6 sqrt(s)
  // slab around the start when the domain is much wider
  std::optional<double> hist_lo, hist_hi;
};

struct DensityCheckReport {
  std::vector<double> bin_centers;
  std::vector<double> density;        // killed-density histogram at time s
  std::vector<double> density_se;
  double mass_alive = 0.0;            // integral of the histogram
  double mass_exited = 0.0;
  double mass_total_se = 0.0;
  bool mass_ok = false;
  // fitted Gaussian envelope  dens <= C * s^{-d/2} exp(-c |y-x0|^2 / (2 s))
  double env_c_amp = 0.0;             // C
  double env_c_rate = 0.0;            // c
  int envelope_violations = 0;
  bool envelope_ok = false;
  double kappa1 = 0.0;                // C rewritten as kappa1 (2 pi kappa2 s)^{-d/2}
  double kappa2 = 0.0;                // 1 / c
  // two-step reconstruction: histogram at s vs composition of the histogram
  // at r with re-simulated transitions started from each bin center
  double two_step_tv = 1.0;
  bool two_step_ok = false;
};

// One-dimensional histogram certification of the killed transition density:
// total-mass bookkeeping, Gaussian envelope domination (with binomial slack),
// and the two-step composition property.
DensityCheckReport empirical_density_check(const ProblemSpec& spec, const PathConfig& base,
                                           const DensityCheckConfig& cfg);

}  // namespace fkmc
