#include "fkmc/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "fkmc/errors.hpp"
#include "fkmc/fk_estimator.hpp"
#include "fkmc/kernels.hpp"
#include "fkmc/parallel.hpp"
#include "fkmc/rng.hpp"
#include "fkmc/stats.hpp"

namespace fkmc {

ExponentFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DimensionMismatch("fit needs equally long x and y");
  const int n = static_cast<int>(x.size());
  if (n < 2) throw InsufficientSamples("fit needs at least two points");
  for (int i = 0; i < n; ++i)
    if (!std::isfinite(x[i]) || !std::isfinite(y[i]))
      throw DegenerateGrid("fit points must be finite");

  double mx = 0, my = 0;
  for (int i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0, syy = 0;
  for (int i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (!(sxx > 0)) throw DegenerateGrid("regressor is constant");

  ExponentFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ssres = 0;
  for (int i = 0; i < n; ++i) {
    const double r = y[i] - (f.intercept + f.slope * x[i]);
    ssres += r * r;
  }
  // constant responses fit perfectly by convention
  f.r2 = (syy < 1e-30) ? 1.0 : std::clamp(1.0 - ssres / syy, 0.0, 1.0);
  f.stderr_slope = (n > 2) ? std::sqrt(std::max(0.0, ssres / ((n - 2) * sxx))) : 0.0;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  f.window = {*lo, *hi};
  return f;
}

double TheoryExponents::rho_prime_or_throw() const {
  if (!rho_prime)
    throw HolderUnavailable("temporal regularity exponent needs every spatial index above 5/6");
  return *rho_prime;
}

TheoryExponents theory_exponents(const HurstParams& hurst, int dim) {
  hurst.validate(dim);
  TheoryExponents te;
  te.rho = hurst.admissibility_margin();
  const double sum = hurst.sum_space();
  const double denom = sum + 1.0 - dim;  // positive for admissible indices
  te.t_exp = (2.0 * hurst.h0 + sum - dim) / denom;
  te.p_exp = (sum + 2.0 - dim) / denom;
  if (hurst.min_space() > 5.0 / 6.0) {
    double cap = te.rho;
    for (double h : hurst.h_space) cap = std::min(cap, (6.0 * h - 5.0) / (2.0 * h - 1.0));
    te.rho_prime = cap;
  }
  return te;
}

// ---- Holder variance curves --------------------------------------------

PairMoment holder_pair_moment(const ProblemSpec& spec, double t1, std::span<const double> x1,
                              double t2, std::span<const double> x2, int n_paths,
                              std::uint64_t seed, const HolderOptions& opts) {
  spec.validate();
  const int d = spec.domain.dim;
  if (static_cast<int>(x1.size()) != d || static_cast<int>(x2.size()) != d)
    throw DimensionMismatch("evaluation points must match the domain dimension");
  if (n_paths < 2) throw InsufficientSamples("need at least two coupled pairs");
  if (opts.n_steps < 2) throw DegenerateGrid("need at least two steps");
  if (!(t1 > 0) || !(t2 > 0)) throw DegenerateGrid("evaluation times must be positive");
  if (t1 > spec.horizon + 1e-12 || t2 > spec.horizon + 1e-12)
    throw DegenerateGrid("evaluation times must not exceed the horizon");

  const double dt = t1 / opts.n_steps;
  const long long m2 = std::llround(t2 / dt);
  if (m2 < 1 || std::abs(m2 * dt - t2) > 1e-9 * std::max(t1, t2))
    throw DegenerateGrid("second evaluation time must be a whole number of steps");

  const CoupledEndpoint ea{t1, t1, {x1.begin(), x1.end()}};
  const CoupledEndpoint eb{t2, t2, {x2.begin(), x2.end()}};

  // one pair up front fixes the time grids; every weight lookup below is
  // validated against them
  const auto probe =
      simulate_coupled_pair(spec, ea, eb, dt, derive_seed(seed, 0), ExitDetection::bridge_corrected);
  const double h0 = spec.hurst.h0;
  const KernelWeights w11 = temporal_weights(probe.first.times, h0);
  const KernelWeights w22 = temporal_weights(probe.second.times, h0);
  // backward times r, s sit at equation times t1 - r, t2 - s; the kernel gap
  // is |r - (s + t1 - t2)|
  const KernelWeights w12 =
      temporal_weights_cross(probe.first.times, probe.second.times, h0, t1 - t2);
  const double alpha = spec.hurst.kernel_prefactor();

  std::vector<double> samples(static_cast<std::size_t>(n_paths));
  parallel_for(n_paths, opts.workers, [&](std::int64_t j) {
    const auto [p1, p2] = simulate_coupled_pair(spec, ea, eb, dt,
                                                derive_seed(seed, static_cast<std::uint64_t>(j)),
                                                ExitDetection::bridge_corrected);
    const double e11 = pair_energy(p1, p1, spec.hurst, w11).value;
    const double e22 = pair_energy(p2, p2, spec.hurst, w22).value;
    const double e12 = pair_energy(p1, p2, spec.hurst, w12).value;
    samples[static_cast<std::size_t>(j)] = alpha * (e11 + e22 - 2.0 * e12);
  });

  MeanVar mv;
  for (double s : samples) mv.add(s);
  return {mv.mean, mv.std_error()};
}

HolderReport holder_variance_curve(const ProblemSpec& spec, double t, std::span<const double> x,
                                   std::span<const double> offsets, int n_paths,
                                   std::uint64_t seed, const HolderOptions& opts) {
  spec.validate();
  if (offsets.size() < 2) throw InsufficientSamples("need at least two offsets to fit a slope");
  for (double off : offsets)
    if (!std::isfinite(off) || off == 0.0) throw DegenerateGrid("offsets must be finite and nonzero");
  if (!(t > 0) || t > spec.horizon + 1e-12)
    throw DegenerateGrid("evaluation time must lie in (0, horizon]");

  HolderReport rep;

  auto fit_curve = [](HolderCurve& c) {
    std::vector<double> lx, ly;
    lx.reserve(c.moments.size());
    ly.reserve(c.moments.size());
    for (std::size_t i = 0; i < c.moments.size(); ++i) {
      if (!(c.moments[i] > 0))
        throw NonPositiveEstimate("gap moment is not positive; cannot fit a power law");
      lx.push_back(std::log(std::abs(c.offsets[i])));
      ly.push_back(std::log(c.moments[i]));
    }
    c.fit = fit_line(lx, ly);
  };

  // spatial: displace the start along the first axis
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    std::vector<double> x2(x.begin(), x.end());
    x2[0] += offsets[i];
    const PairMoment pm = holder_pair_moment(spec, t, x, t, x2, n_paths,
                                             derive_seed(seed, 0x5A00 + i), opts);
    rep.spatial.offsets.push_back(offsets[i]);
    rep.spatial.moments.push_back(pm.value);
    rep.spatial.ses.push_back(pm.se);
  }
  fit_curve(rep.spatial);

  // temporal: push the evaluation time forward by whole steps
  const double dt = t / opts.n_steps;
  for (std::size_t i = 0; i < offsets.size(); ++i) {
    const long long cells = std::max(1ll, std::llround(std::abs(offsets[i]) / dt));
    const double realized = static_cast<double>(cells) * dt;
    if (t + realized > spec.horizon + 1e-12)
      throw DegenerateGrid("temporal offset pushes past the horizon");
    const PairMoment pm = holder_pair_moment(spec, t, x, t + realized, x, n_paths,
                                             derive_seed(seed, 0x7E00 + i), opts);
    rep.temporal.offsets.push_back(realized);
    rep.temporal.moments.push_back(pm.value);
    rep.temporal.ses.push_back(pm.se);
  }
  fit_curve(rep.temporal);

  return rep;
}

// ---- moment growth fits -------------------------------------------------

namespace {

// the growth theory assumes data bounded below by a positive constant; probe
// the datum at the sweep point, the domain center and the boundary seen along
// each axis
void probe_data_positive(const ProblemSpec& spec, std::span<const double> x, double t_max) {
  const int d = spec.domain.dim;
  std::vector<std::vector<double>> pts;
  pts.emplace_back(x.begin(), x.end());
  std::vector<double> center(static_cast<std::size_t>(d), 0.0);
  if (spec.domain.kind == DomainSpec::Kind::hyperrectangle) {
    for (int m = 0; m < d; ++m) center[static_cast<std::size_t>(m)] =
        0.5 * (spec.domain.lo[static_cast<std::size_t>(m)] + spec.domain.hi[static_cast<std::size_t>(m)]);
    pts.push_back(center);
    for (int m = 0; m < d; ++m) {
      auto p = center;
      p[static_cast<std::size_t>(m)] = spec.domain.lo[static_cast<std::size_t>(m)];
      pts.push_back(p);
      p[static_cast<std::size_t>(m)] = spec.domain.hi[static_cast<std::size_t>(m)];
      pts.push_back(p);
    }
  } else {
    center = spec.domain.center;
    pts.push_back(center);
    for (int m = 0; m < d; ++m) {
      auto p = center;
      p[static_cast<std::size_t>(m)] += spec.domain.radius;
      pts.push_back(p);
    }
  }
  for (const auto& p : pts)
    for (double tt : {0.0, 0.5 * t_max, t_max})
      if (!(spec.data_h(tt, p) > 0))
        throw NonPositiveEstimate("growth fits need data bounded below by a positive constant");
}

}  // namespace

GrowthFitReport moment_growth_fit(const ProblemSpec& spec, std::span<const double> x,
                                  std::span<const double> t_grid, std::span<const int> k_grid,
                                  const GrowthBudget& budget, std::uint64_t seed) {
  spec.validate();
  const int d = spec.domain.dim;
  if (static_cast<int>(x.size()) != d)
    throw DimensionMismatch("sweep point must match the domain dimension");
  if (t_grid.empty() || k_grid.empty()) throw DegenerateGrid("time and order grids must be nonempty");
  for (double t : t_grid)
    if (!(t > 0) || t > spec.horizon + 1e-12) throw DegenerateGrid("sweep times must lie in (0, horizon]");
  for (int k : k_grid)
    if (k < 1) throw DegenerateGrid("replica orders must be at least 1");
  if (budget.n_batches < 32) throw InsufficientSamples("growth fits need at least 32 batches");
  if (budget.survival_probe < 50) throw InsufficientSamples("survival probe needs at least 50 paths");
  if (spec.product != ProductType::stratonovich)
    throw NonPositiveEstimate("growth fits need the geometric product");
  const double t_max = *std::max_element(t_grid.begin(), t_grid.end());
  probe_data_positive(spec, x, t_max);

  bool k_time_found = false;
  for (double t : t_grid)
    if (std::abs(t - budget.t_for_k_fit) <= 1e-9 * std::max(1.0, t)) k_time_found = true;
  if (!k_time_found) throw DegenerateGrid("the k-fit horizon must be one of the sweep times");

  // killed survival fraction per horizon, from plain single paths
  std::vector<double> survival(t_grid.size(), 0.0);
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti) {
    PathConfig cfg;
    cfg.n_steps = budget.n_steps;
    cfg.t_eval = t_grid[ti];
    cfg.x0.assign(x.begin(), x.end());
    const auto paths =
        simulate_replicas(spec, cfg, budget.survival_probe, derive_seed(seed, 0x900 + ti), budget.workers);
    int alive = 0;
    for (const auto& p : paths) alive += p.exited() ? 0 : 1;
    survival[ti] = static_cast<double>(alive) / static_cast<double>(budget.survival_probe);
  }

  SolveOptions sopts;
  sopts.n_steps = budget.n_steps;
  sopts.workers = budget.workers;

  GrowthFitReport rep;
  for (std::size_t ti = 0; ti < t_grid.size(); ++ti)
    for (std::size_t ki = 0; ki < k_grid.size(); ++ki) {
      const FKEstimate est =
          moment_estimate(spec, t_grid[ti], x, k_grid[ki], budget.n_batches,
                          derive_seed(seed, 0x10 + ti * 64 + ki), sopts);
      SweepPoint sp;
      sp.t = t_grid[ti];
      sp.k = k_grid[ki];
      sp.moment = est.median_of_means;
      sp.se_log = est.log_se;
      sp.survival = survival[ti];
      // log log needs a moment above one; heavy killing voids the growth
      // regime, so both gates mark the point unusable instead of failing
      sp.used = sp.survival >= budget.survival_floor && sp.moment > 1.0;
      sp.log_moment = sp.moment > 0 ? std::log(sp.moment) : 0.0;
      rep.sweep.push_back(sp);
    }

  std::vector<double> xs, ys;
  for (const auto& sp : rep.sweep)
    if (sp.used && sp.k == budget.k_for_t_fit) {
      xs.push_back(std::log(sp.t));
      ys.push_back(std::log(sp.log_moment));
    }
  if (xs.size() < 2) throw InsufficientSamples("too few usable sweep points for the fit in t");
  rep.t_fit = fit_line(xs, ys);

  xs.clear();
  ys.clear();
  for (const auto& sp : rep.sweep)
    if (sp.used && std::abs(sp.t - budget.t_for_k_fit) <= 1e-9 * std::max(1.0, sp.t)) {
      xs.push_back(std::log(static_cast<double>(sp.k)));
      ys.push_back(std::log(sp.log_moment));
    }
  if (xs.size() < 2) throw InsufficientSamples("too few usable sweep points for the fit in k");
  rep.k_fit = fit_line(xs, ys);

  // joint single-exponent model over every usable point
  std::vector<const SweepPoint*> used;
  for (const auto& sp : rep.sweep)
    if (sp.used) used.push_back(&sp);
  if (used.size() < 3) throw InsufficientSamples("joint fit needs at least three usable points");
  Eigen::MatrixXd A(static_cast<Eigen::Index>(used.size()), 3);
  Eigen::VectorXd b(static_cast<Eigen::Index>(used.size()));
  for (std::size_t i = 0; i < used.size(); ++i) {
    A(static_cast<Eigen::Index>(i), 0) = 1.0;
    A(static_cast<Eigen::Index>(i), 1) = std::log(used[i]->t);
    A(static_cast<Eigen::Index>(i), 2) = std::log(static_cast<double>(used[i]->k));
    b(static_cast<Eigen::Index>(i)) = std::log(used[i]->log_moment);
  }
  const Eigen::Vector3d beta = A.colPivHouseholderQr().solve(b);
  rep.plane_t_exp = beta(1);
  rep.plane_k_exp = beta(2);
  const double ssres = (A * beta - b).squaredNorm();
  const double mean_b = b.mean();
  const double sstot = (b.array() - mean_b).matrix().squaredNorm();
  rep.plane_r2 = (sstot < 1e-30) ? 1.0 : std::clamp(1.0 - ssres / sstot, 0.0, 1.0);

  return rep;
}

// ---- coefficient time-shift sensitivity ----------------------------------

SensitivityReport time_shift_sensitivity(const ProblemSpec& spec, const PathConfig& cfg,
                                         double t1, std::span<const double> t2_list,
                                         int n_paths, std::uint64_t seed) {
  spec.validate();
  if (t2_list.empty()) throw DegenerateGrid("need at least one comparison time");
  if (n_paths < 2) throw InsufficientSamples("need at least two coupled pairs");
  if (!(t1 > 0) || t1 > spec.horizon + 1e-12)
    throw DegenerateGrid("base time must lie in (0, horizon]");
  for (double t2 : t2_list) {
    if (!(t2 > 0) || t2 > spec.horizon + 1e-12)
      throw DegenerateGrid("comparison times must lie in (0, horizon]");
    if (std::abs(t2 - t1) < 1e-12) throw DegenerateGrid("comparison times must differ from the base");
  }

  SensitivityReport rep;
  for (std::size_t ti = 0; ti < t2_list.size(); ++ti) {
    MeanVar mv;
    for (int j = 0; j < n_paths; ++j) {
      PathConfig c = cfg;
      c.seed = derive_seed(derive_seed(seed, ti), static_cast<std::uint64_t>(j));
      const auto [p1, p2] = simulate_coupled(spec, c, t1, t2_list[ti]);
      const int n = std::min(p1.n_recorded, p2.n_recorded);
      double sup2 = 0.0;
      for (int i = 0; i < n; ++i) {
        double g2 = 0.0;
        for (int m = 0; m < p1.dim; ++m) {
          const double g = p1.state(i)[m] - p2.state(i)[m];
          g2 += g * g;
        }
        sup2 = std::max(sup2, g2);
      }
      mv.add(sup2);
    }
    rep.gaps.push_back(std::abs(t2_list[ti] - t1));
    rep.sup_sq.push_back(mv.mean);
    rep.ses.push_back(mv.std_error());
  }

  if (rep.gaps.size() >= 2) {
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < rep.gaps.size(); ++i) {
      if (!(rep.sup_sq[i] > 0))
        throw NonPositiveEstimate("no time-shift signal to fit");
      lx.push_back(std::log(rep.gaps[i]));
      ly.push_back(std::log(rep.sup_sq[i]));
    }
    rep.fit = fit_line(lx, ly);
  }
  return rep;
}

}  // namespace fkmc
