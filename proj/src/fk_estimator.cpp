#include "fkmc/fk_estimator.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "fkmc/digest.hpp"
#include "fkmc/kernels.hpp"
#include "fkmc/parallel.hpp"
#include "fkmc/rng.hpp"
#include "fkmc/stats.hpp"

namespace fkmc {

namespace {

const char* mode_name(EstimatorMode m) {
  switch (m) {
    case EstimatorMode::pathwise_fixed_noise: return "pathwise_fixed_noise";
    case EstimatorMode::conditional_mean: return "conditional_mean";
    case EstimatorMode::replica_moment: return "replica_moment";
  }
  return "?";
}

std::string make_digest(EstimatorMode mode, const ProblemSpec& spec, double t,
                        std::span<const double> x, int k, long n, std::uint64_t seed,
                        const SolveOptions& opts) {
  std::ostringstream os;
  os.precision(17);
  os << mode_name(mode) << '|' << (spec.product == ProductType::stratonovich ? "strat" : "skor")
     << "|t=" << t << "|x=";
  for (double xi : x) os << xi << ',';
  os << "|k=" << k << "|n=" << n << "|seed=" << seed << "|steps=" << opts.n_steps
     << "|offset=" << opts.path_offset
     << "|bridge=" << (opts.exit_detection == ExitDetection::bridge_corrected ? 1 : 0);
  return digest_string(os.str());
}

void validate_point(const ProblemSpec& spec, double t, std::span<const double> x, long n) {
  spec.validate();
  if (static_cast<int>(x.size()) != spec.domain.dim)
    throw DimensionMismatch("estimator start point dimension");
  if (spec.domain.classify(x) != Containment::interior)
    throw StartOutsideDomain("estimator start point must be interior");
  if (!(t > 0.0) || t > spec.horizon + 1e-12 * spec.horizon)
    throw DegenerateGrid("evaluation time must lie in (0, horizon]");
  if (n < 1) throw InsufficientSamples("estimator needs at least one sample");
}

double payoff(const ProblemSpec& spec, const KilledPath& p) {
  return spec.data_h(p.clipped_time(), p.end_state());
}

// the shared uniform grid all replicas of this estimate live on
std::vector<double> reference_times(const ProblemSpec& spec, const PathConfig& base,
                                    std::uint64_t seed) {
  PathConfig cfg = base;
  cfg.seed = seed;
  return simulate_path(spec, cfg).times;
}

// accumulate plain mean/SE plus the heavy-tail companions into an estimate
void fill_statistics(FKEstimate& est, std::span<const double> weights, int mom_groups) {
  MeanVar mv;
  for (double w : weights) mv.add(w);
  est.value = mv.mean;
  est.std_error = mv.std_error();
  est.n_paths = static_cast<long>(weights.size());
  const int groups = std::clamp<int>(mom_groups, 1, static_cast<int>(weights.size()));
  est.median_of_means = median_of_means(weights, groups);
  if (est.value > 0.0) {
    const auto lm = log_mean_jackknife(weights);
    est.log_value = lm.log_mean;
    est.log_se = lm.jackknife_se;
  }
}

double abs_moment(double p) {
  // E |Z|^p for standard normal Z, p > -1
  return std::pow(2.0, 0.5 * p) * std::tgamma(0.5 * (p + 1.0)) / std::sqrt(M_PI);
}

}  // namespace

FKEstimate solve_point_conditional(const ProblemSpec& spec, double t, std::span<const double> x,
                                   long n_paths, std::uint64_t seed, const SolveOptions& opts) {
  validate_point(spec, t, x, n_paths);
  PathConfig base;
  base.n_steps = opts.n_steps;
  base.t_eval = t;
  base.x0.assign(x.begin(), x.end());
  base.exit_detection = opts.exit_detection;

  const auto times = reference_times(spec, base, derive_seed(seed, opts.path_offset));
  const auto kw = temporal_weights(times, spec.hurst.h0);
  const bool strat = spec.product == ProductType::stratonovich;

  std::vector<double> weights(n_paths);
  parallel_for(n_paths, opts.workers, [&](std::int64_t j) {
    PathConfig cfg = base;
    cfg.seed = derive_seed(seed, opts.path_offset + static_cast<std::uint64_t>(j));
    const auto p = simulate_path(spec, cfg);
    double w = payoff(spec, p);
    if (strat) w *= std::exp(wick_correction(p, spec.hurst, kw));
    weights[j] = w;
  });

  FKEstimate est;
  est.mode = EstimatorMode::conditional_mean;
  est.product = spec.product;
  est.config_digest = make_digest(est.mode, spec, t, x, 1, n_paths, seed, opts);
  fill_statistics(est, weights, opts.mom_groups);
  return est;
}

FKEstimate solve_point_fixed_noise(const ProblemSpec& spec, double t, std::span<const double> x,
                                   const SheetSample& sheet, const MollifierParams& m,
                                   long n_paths, std::uint64_t seed, const SolveOptions& opts) {
  validate_point(spec, t, x, n_paths);
  spec.hurst.validate(spec.domain.dim);
  SmoothedNoise noise(sheet, m);

  PathConfig base;
  base.n_steps = opts.n_steps;
  base.t_eval = t;
  base.x0.assign(x.begin(), x.end());
  base.exit_detection = opts.exit_detection;

  const bool skorohod = spec.product == ProductType::skorohod;
  std::vector<double> times;
  KernelWeights kw;
  if (skorohod) {
    times = reference_times(spec, base, derive_seed(seed, opts.path_offset));
    kw = temporal_weights(times, spec.hurst.h0);
  }

  std::vector<double> weights(n_paths);
  parallel_for(n_paths, opts.workers, [&](std::int64_t j) {
    PathConfig cfg = base;
    cfg.seed = derive_seed(seed, opts.path_offset + static_cast<std::uint64_t>(j));
    const auto p = simulate_path(spec, cfg);
    double expo = pathwise_v_regularized(p, noise, t);
    if (skorohod) expo -= wick_correction(p, spec.hurst, kw);
    weights[j] = payoff(spec, p) * std::exp(expo);
  });

  FKEstimate est;
  est.mode = EstimatorMode::pathwise_fixed_noise;
  est.product = spec.product;
  est.config_digest = make_digest(est.mode, spec, t, x, 1, n_paths, seed, opts);
  fill_statistics(est, weights, opts.mom_groups);
  return est;
}

FKEstimate moment_estimate(const ProblemSpec& spec, double t, std::span<const double> x, int k,
                           long n_batches, std::uint64_t seed, const SolveOptions& opts) {
  validate_point(spec, t, x, n_batches);
  if (k < 1) throw InsufficientSamples("replica order must be at least 1");

  PathConfig base;
  base.n_steps = opts.n_steps;
  base.t_eval = t;
  base.x0.assign(x.begin(), x.end());
  base.exit_detection = opts.exit_detection;

  const auto times = reference_times(spec, base, derive_seed(seed, opts.path_offset));
  const auto kw = temporal_weights(times, spec.hurst.h0);
  const bool strat = spec.product == ProductType::stratonovich;
  const double half_pref = 0.5 * spec.hurst.kernel_prefactor();

  std::vector<double> weights(n_batches);
  parallel_for(n_batches, opts.workers, [&](std::int64_t bidx) {
    std::vector<KilledPath> replicas;
    replicas.reserve(k);
    double prod_h = 1.0;
    for (int l = 0; l < k; ++l) {
      PathConfig cfg = base;
      cfg.seed = derive_seed(
          seed, opts.path_offset + static_cast<std::uint64_t>(bidx) * k + static_cast<std::uint64_t>(l));
      replicas.push_back(simulate_path(spec, cfg));
      prod_h *= payoff(spec, replicas.back());
    }
    // ordered pair sum: diagonal self energies only in the Stratonovich form
    double energy = 0.0;
    for (int i = 0; i < k; ++i) {
      if (strat) energy += pair_energy(replicas[i], replicas[i], spec.hurst, kw).value;
      for (int j = i + 1; j < k; ++j)
        energy += 2.0 * pair_energy(replicas[i], replicas[j], spec.hurst, kw).value;
    }
    weights[bidx] = prod_h * std::exp(half_pref * energy);
  });

  FKEstimate est;
  est.mode = EstimatorMode::replica_moment;
  est.k = k;
  est.product = spec.product;
  est.config_digest = make_digest(est.mode, spec, t, x, k, n_batches, seed, opts);
  fill_statistics(est, weights, opts.mom_groups);
  return est;
}

FKEstimate merge(const FKEstimate& a, const FKEstimate& b) {
  if (a.mode != b.mode || a.product != b.product || a.k != b.k)
    throw GridMismatch("merging estimates of different kinds");
  if (a.n_paths < 1 || b.n_paths < 1) throw InsufficientSamples("merging an empty estimate");
  FKEstimate out = a;
  const double na = static_cast<double>(a.n_paths), nb = static_cast<double>(b.n_paths);
  const double n = na + nb;
  // rebuild the second-moment accumulators from the standard errors and merge
  const double m2a = a.std_error * a.std_error * na * (na - 1.0);
  const double m2b = b.std_error * b.std_error * nb * (nb - 1.0);
  const double d = b.value - a.value;
  const double m2 = m2a + m2b + d * d * na * nb / n;
  out.value = a.value + d * nb / n;
  out.std_error = n > 1.0 ? std::sqrt(m2 / (n - 1.0) / n) : 0.0;
  out.n_paths = a.n_paths + b.n_paths;
  out.median_of_means = (na * a.median_of_means + nb * b.median_of_means) / n;
  out.log_value = out.value > 0.0 ? std::log(out.value) : 0.0;
  out.log_se = out.value > 0.0 ? out.std_error / out.value : 0.0;
  out.config_digest = digest_string(a.config_digest + "+" + b.config_digest);
  return out;
}

ComparisonReport comparison_check(const ProblemSpec& spec, std::span<const double> time_grid,
                                  long n_paths, std::uint64_t seed, const SolveOptions& opts,
                                  std::optional<std::pair<double, double>> kappa) {
  spec.validate();
  if (time_grid.size() < 2) throw InsufficientSamples("comparison grid needs two or more times");
  if (n_paths < 100) throw InsufficientSamples("comparison check needs at least 100 paths");
  const int d = spec.domain.dim;

  std::vector<double> x0(d);
  if (spec.domain.kind == DomainSpec::Kind::hyperrectangle) {
    for (int i = 0; i < d; ++i) x0[i] = 0.5 * (spec.domain.lo[i] + spec.domain.hi[i]);
  } else {
    x0 = spec.domain.center;
  }

  const double t_max = *std::max_element(time_grid.begin(), time_grid.end());
  if (!(t_max > 0.0)) throw DegenerateGrid("comparison grid must reach past zero");
  const double dt = t_max / opts.n_steps;
  std::vector<int> node(time_grid.size());
  for (std::size_t i = 0; i < time_grid.size(); ++i) {
    const double s = time_grid[i];
    if (s < -1e-12) throw DegenerateGrid("comparison times must be nonnegative");
    const long idx = std::lround(s / dt);
    if (std::abs(s - idx * dt) > 1e-9 * t_max)
      throw DegenerateGrid("comparison time " + std::to_string(s) +
                           " does not sit on the path grid");
    node[i] = static_cast<int>(idx);
  }

  ComparisonReport rep;
  if (kappa) {
    rep.kappa1 = kappa->first;
    rep.kappa2 = kappa->second;
  } else {
    DensityCheckConfig dc;
    dc.s = t_max;
    dc.r = 0.5 * t_max;
    dc.n_steps = opts.n_steps;
    dc.seed = derive_seed(seed, 0xD15C);
    dc.workers = opts.workers;
    PathConfig probe;
    probe.x0 = x0;
    auto dens = empirical_density_check(spec, probe, dc);
    rep.kappa1 = dens.kappa1;
    rep.kappa2 = dens.kappa2;
  }

  // pairs (s, r) with s < r in grid order
  std::vector<std::pair<int, int>> pairs;
  for (std::size_t i = 0; i < node.size(); ++i)
    for (std::size_t j = i + 1; j < node.size(); ++j)
      if (node[i] != node[j]) pairs.emplace_back(static_cast<int>(i), static_cast<int>(j));
  if (pairs.empty()) throw DegenerateGrid("comparison grid has no distinct time pairs");

  const int n_pairs = static_cast<int>(pairs.size());
  std::vector<double> vals(static_cast<std::size_t>(n_paths) * n_pairs);
  std::vector<char> alive(n_paths, 0);
  const int last_node = *std::max_element(node.begin(), node.end());

  PathConfig base;
  base.n_steps = opts.n_steps;
  base.t_eval = t_max;
  base.x0 = x0;
  base.exit_detection = opts.exit_detection;
  parallel_for(n_paths, opts.workers, [&](std::int64_t j) {
    PathConfig cfg = base;
    cfg.seed = derive_seed(seed, opts.path_offset + static_cast<std::uint64_t>(j));
    const auto p = simulate_path(spec, cfg);
    if (p.exited() && *p.exit_index <= last_node) return;  // stays marked dead
    alive[j] = 1;
    for (int q = 0; q < n_pairs; ++q) {
      const auto a = p.state(node[pairs[q].first]);
      const auto b = p.state(node[pairs[q].second]);
      double prod = 1.0;
      for (int ax = 0; ax < d; ++ax)
        prod *= std::pow(std::abs(a[ax] - b[ax]), 2.0 * spec.hurst.h_space[ax] - 2.0);
      vals[static_cast<std::size_t>(j) * n_pairs + q] = prod;
    }
  });

  long used = 0;
  for (char c : alive) used += c;
  rep.paths_used = used;
  if (used < static_cast<long>(0.995 * static_cast<double>(n_paths)))
    throw InsufficientSamples(
        "more than 0.5% of comparison paths were killed; widen the domain relative to sqrt(t)");

  for (int q = 0; q < n_pairs; ++q) {
    MeanVar mv;
    for (long j = 0; j < n_paths; ++j)
      if (alive[j]) mv.add(vals[static_cast<std::size_t>(j) * n_pairs + q]);
    ComparisonRow row;
    row.s = time_grid[pairs[q].first];
    row.r = time_grid[pairs[q].second];
    row.lhs = mv.mean;
    row.lhs_se = mv.std_error();
    double rhs = rep.kappa1 * rep.kappa1;
    const double gap = std::abs(row.r - row.s) * rep.kappa2;
    for (int ax = 0; ax < d; ++ax) {
      const double p_ax = 2.0 * spec.hurst.h_space[ax] - 2.0;
      rhs *= std::pow(gap, 0.5 * p_ax) * abs_moment(p_ax);
    }
    row.rhs = rhs;
    row.ok = row.lhs <= row.rhs + 3.0 * row.lhs_se;
    if (!row.ok) ++rep.violations;
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace fkmc
