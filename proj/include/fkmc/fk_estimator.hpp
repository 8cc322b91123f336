#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fkmc/model.hpp"
#include "fkmc/noisefield.hpp"
#include "fkmc/pathsim.hpp"

namespace fkmc {

enum class EstimatorMode { pathwise_fixed_noise, conditional_mean, replica_moment };

// One Monte Carlo point estimate with its bookkeeping.  The payoff follows
// the killed-path convention: data_h(clipped time, end state), i.e. the
// initial datum for surviving paths and the Dirichlet datum at the exit time
// and location for killed ones.
struct FKEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long n_paths = 0;  // paths (point estimators) or batches (replica moments)
  int k = 1;         // replica order; 1 for the point estimators
  EstimatorMode mode = EstimatorMode::conditional_mean;
  ProductType product = ProductType::stratonovich;
  std::string config_digest;
  // companions for heavy-tailed exponential weights
  double median_of_means = 0.0;
  double log_value = 0.0;  // log of the plain mean
  double log_se = 0.0;     // jackknife standard error of log_value
};

// Numerical knobs shared by the estimators.  path_offset shifts the per-path
// seed derivation -- path j draws from derive_seed(seed, path_offset + j) --
// which is what lets two split runs merge exactly into one long run.
struct SolveOptions {
  int n_steps = 200;
  ExitDetection exit_detection = ExitDetection::bridge_corrected;
  int workers = 0;
  std::uint64_t path_offset = 0;
  int mom_groups = 16;  // median-of-means group count for replica weights
};

// First moment E[u(t,x)] with the expectation over the noise taken in closed
// form per path: conditionally on the path, the pathwise noise integral is a
// centered Gaussian whose variance is the prefactor-weighted self energy, so
// the Stratonovich weight is exp(half that variance) and the geometric
// correction of the Wick product cancels it entirely in Skorohod mode.
FKEstimate solve_point_conditional(const ProblemSpec& spec, double t, std::span<const double> x,
                                   long n_paths, std::uint64_t seed,
                                   const SolveOptions& opts = {});

// u^{eps,delta}(t,x) for one frozen sheet: Monte Carlo over paths of
// payoff * exp(V) with V the mollified pathwise noise integral; Skorohod mode
// subtracts the Wick correction in the exponent.
FKEstimate solve_point_fixed_noise(const ProblemSpec& spec, double t, std::span<const double> x,
                                   const SheetSample& sheet, const MollifierParams& m,
                                   long n_paths, std::uint64_t seed,
                                   const SolveOptions& opts = {});

// k-th moment E[u^k(t,x)] by replica averaging: each batch simulates k
// independent paths and weighs the product of payoffs by
// exp((alpha_H/2) * sum of pairwise energies), where the Stratonovich sum
// runs over all ordered replica pairs and the Skorohod sum drops the
// diagonal (self energies cancel against the Wick correction exactly).
FKEstimate moment_estimate(const ProblemSpec& spec, double t, std::span<const double> x, int k,
                           long n_batches, std::uint64_t seed, const SolveOptions& opts = {});

// Exact-mean merge of two runs of the same estimator over disjoint path
// offsets.  value, std_error and n_paths merge by the pairwise accumulator
// identity; the heavy-tail companions are recomputed from the merged mean
// (median_of_means as the count-weighted combination, log via the delta
// method), which is approximate and flagged as such here.
FKEstimate merge(const FKEstimate& a, const FKEstimate& b);

// Brownian comparison: for every ordered pair s < r of the aligned time grid,
// checks   E prod_i |X^i_s - X^i_r|^{2 H_i - 2}  <=  kappa1^2 * closed form
// for a Brownian motion run at clock kappa2, within three standard errors.
// kappa defaults to the Aronson constants fitted by the density certifier;
// pass kappa explicitly to skip that (heavier) fit.  Paths must survive to
// the last grid time, so the domain needs to be wide relative to sqrt(t);
// the check refuses to proceed when more than 0.5% of the paths die.
struct ComparisonRow {
  double s = 0.0, r = 0.0;
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;  // kappa1^2 * Brownian closed form, no Monte Carlo noise
  bool ok = false;
};

struct ComparisonReport {
  double kappa1 = 1.0, kappa2 = 1.0;
  std::vector<ComparisonRow> rows;
  int violations = 0;
  long paths_used = 0;
};

ComparisonReport comparison_check(const ProblemSpec& spec, std::span<const double> time_grid,
                                  long n_paths, std::uint64_t seed, const SolveOptions& opts = {},
                                  std::optional<std::pair<double, double>> kappa = {});

}  // namespace fkmc
