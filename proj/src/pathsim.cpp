#include "fkmc/pathsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "fkmc/parallel.hpp"
#include "fkmc/rng.hpp"
#include "fkmc/stats.hpp"

namespace fkmc {

namespace {

struct StepWorkspace {
  std::vector<double> b, sig, z, xn, mid, nvec, arow;
  explicit StepWorkspace(int d)
      : b(d), sig(static_cast<std::size_t>(d) * d), z(d), xn(d), mid(d), nvec(d), arow(d) {}
};

// simulate one endpoint of a (possibly coupled) pair; gauss/bridge streams are
// supplied by the caller so coupled paths can share them
KilledPath run_euler(const ProblemSpec& spec, const CoefficientField& reflected, double t_param,
                     std::span<const double> x0, double dt, int n_steps, double clock_start,
                     ExitDetection detection, GaussianStream& gauss, GaussianStream& bridge,
                     std::uint64_t seed_tag, StepWorkspace& ws) {
  const DomainSpec& dom = spec.domain;
  const int d = dom.dim;
  KilledPath path;
  path.dim = d;
  path.t_eval = t_param;
  path.seed = seed_tag;
  path.times.resize(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) path.times[i] = clock_start + dt * i;
  path.states.reserve(static_cast<std::size_t>(n_steps + 1) * d);
  path.states.insert(path.states.end(), x0.begin(), x0.end());
  path.n_recorded = 1;

  std::vector<double> x(x0.begin(), x0.end());
  const double sqdt = std::sqrt(dt);
  const double tol = dom.boundary_tol();

  for (int i = 0; i < n_steps; ++i) {
    const double s = path.times[i];
    const double t_arg = t_param - s;  // reflected wrapper handles t_arg < 0
    reflected.drift(t_arg, x, ws.b);
    reflected.sigma(t_arg, x, ws.sig);
    for (int m = 0; m < d; ++m) ws.z[m] = gauss.gaussian();
    for (int r = 0; r < d; ++r) {
      double incr = ws.b[r] * dt;
      for (int c = 0; c < d; ++c) incr += ws.sig[static_cast<std::size_t>(r) * d + c] * ws.z[c] * sqdt;
      ws.xn[r] = x[r] + incr;
    }
    path.states.insert(path.states.end(), ws.xn.begin(), ws.xn.end());
    ++path.n_recorded;

    const Containment where = dom.classify(ws.xn, tol);
    if (where != Containment::interior) {
      path.exit_index = i + 1;
      path.exit_time = path.times[i + 1];
      path.exit_point.resize(d);
      dom.project_to_boundary(ws.xn, path.exit_point);
      return path;
    }
    if (detection == ExitDetection::bridge_corrected) {
      const double u = bridge.uniform();
      const double d1 = dom.boundary_distance(x);
      const double d2 = dom.boundary_distance(ws.xn);
      for (int m = 0; m < d; ++m) ws.mid[m] = 0.5 * (x[m] + ws.xn[m]);
      dom.boundary_normal(ws.mid, ws.nvec);
      reflected.sigma(t_param - (s + 0.5 * dt), ws.mid, ws.sig);
      // variance of the step along the boundary normal: n^T (sigma sigma^T) n
      double var_n = 0.0;
      for (int r = 0; r < d; ++r) {
        double row = 0.0;
        for (int c = 0; c < d; ++c) row += ws.sig[static_cast<std::size_t>(r) * d + c] * ws.nvec[c];
        ws.arow[r] = row;
      }
      for (int r = 0; r < d; ++r) var_n += ws.arow[r] * ws.arow[r];
      if (var_n > 0) {
        const double p_cross = std::exp(-2.0 * d1 * d2 / (var_n * dt));
        if (u < p_cross) {
          path.exit_index = i + 1;
          path.exit_time = path.times[i] + 0.5 * dt;
          path.exit_point.resize(d);
          dom.project_to_boundary(ws.mid, path.exit_point);
          return path;
        }
      }
    }
    std::copy(ws.xn.begin(), ws.xn.end(), x.begin());
  }
  return path;
}

void validate_config(const ProblemSpec& spec, const PathConfig& cfg) {
  spec.validate();
  if (cfg.n_steps < 1) throw DegenerateGrid("n_steps must be >= 1");
  if (!(cfg.t_eval > 0)) throw DegenerateGrid("t_eval must be positive");
  if (static_cast<int>(cfg.x0.size()) != spec.domain.dim)
    throw DimensionMismatch("start point dimension does not match the domain");
  if (spec.domain.classify(cfg.x0) != Containment::interior)
    throw StartOutsideDomain("start point is not strictly inside the domain");
}

}  // namespace

KilledPath simulate_path(const ProblemSpec& spec, const PathConfig& cfg) {
  validate_config(spec, cfg);
  const CoefficientField reflected = time_reflect(spec.coeffs);
  GaussianStream gauss(derive_seed(cfg.seed, 0));
  GaussianStream bridge(derive_seed(cfg.seed, 1));
  StepWorkspace ws(spec.domain.dim);
  const double dt = cfg.t_eval / cfg.n_steps;
  return run_euler(spec, reflected, cfg.t_eval, cfg.x0, dt, cfg.n_steps, cfg.clock_start,
                   cfg.exit_detection, gauss, bridge, cfg.seed, ws);
}

std::vector<KilledPath> simulate_replicas(const ProblemSpec& spec, const PathConfig& cfg, int k,
                                          std::uint64_t master_seed, int workers) {
  if (k < 1) throw InsufficientSamples("replica count must be >= 1");
  validate_config(spec, cfg);
  std::vector<KilledPath> out(k);
  parallel_for(k, workers, [&](std::int64_t j) {
    PathConfig c = cfg;
    c.seed = derive_seed(master_seed, static_cast<std::uint64_t>(j));
    out[j] = simulate_path(spec, c);
  });
  return out;
}

std::pair<KilledPath, KilledPath> simulate_coupled_pair(const ProblemSpec& spec,
                                                        const CoupledEndpoint& a,
                                                        const CoupledEndpoint& b, double dt,
                                                        std::uint64_t seed,
                                                        ExitDetection exit_detection) {
  spec.validate();
  if (!(dt > 0)) throw DegenerateGrid("dt must be positive");
  auto steps_of = [dt](double horizon) {
    const int n = static_cast<int>(std::llround(horizon / dt));
    if (n < 1 || std::abs(n * dt - horizon) > 1e-9 * horizon)
      throw DegenerateGrid("horizon must be an integral number of steps");
    return n;
  };
  const int na = steps_of(a.horizon);
  const int nb = steps_of(b.horizon);
  const CoefficientField reflected = time_reflect(spec.coeffs);
  StepWorkspace ws(spec.domain.dim);
  // identical streams: both endpoints replay the same increment sequence
  GaussianStream gauss_a(derive_seed(seed, 0)), bridge_a(derive_seed(seed, 1));
  GaussianStream gauss_b(derive_seed(seed, 0)), bridge_b(derive_seed(seed, 1));
  KilledPath pa = run_euler(spec, reflected, a.t_param, a.x0, dt, na, 0.0, exit_detection, gauss_a,
                            bridge_a, seed, ws);
  KilledPath pb = run_euler(spec, reflected, b.t_param, b.x0, dt, nb, 0.0, exit_detection, gauss_b,
                            bridge_b, seed, ws);
  return {std::move(pa), std::move(pb)};
}

std::pair<KilledPath, KilledPath> simulate_coupled(const ProblemSpec& spec, const PathConfig& cfg,
                                                   double t1, double t2) {
  validate_config(spec, cfg);
  CoupledEndpoint a{t1, cfg.t_eval, cfg.x0};
  CoupledEndpoint b{t2, cfg.t_eval, cfg.x0};
  return simulate_coupled_pair(spec, a, b, cfg.t_eval / cfg.n_steps, cfg.seed, cfg.exit_detection);
}

void write_paths_csv(const std::string& filename, std::span<const KilledPath> paths) {
  std::FILE* f = std::fopen(filename.c_str(), "w");
  if (!f) throw Error("cannot open " + filename + " for writing");
  std::fprintf(f, "# fkmc-paths v1\n");
  std::fprintf(f, "# columns: path,step,time,coords...,alive\n");
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const KilledPath& kp = paths[p];
    for (int i = 0; i < kp.n_recorded; ++i) {
      std::fprintf(f, "%zu,%d,%.17g", p, i, kp.times[i]);
      for (int m = 0; m < kp.dim; ++m) std::fprintf(f, ",%.17g", kp.state(i)[m]);
      const bool alive = !kp.exited() || i < *kp.exit_index;
      std::fprintf(f, ",%d\n", alive ? 1 : 0);
    }
  }
  std::fclose(f);
}

namespace {

struct Histogram {
  double lo = 0, hi = 0;
  int bins = 0;
  std::vector<double> count;
  double width() const { return (hi - lo) / bins; }
  int index(double x) const {
    if (x < lo || x >= hi) return -1;
    return std::min(bins - 1, static_cast<int>((x - lo) / width()));
  }
};

}  // namespace

DensityCheckReport empirical_density_check(const ProblemSpec& spec, const PathConfig& base,
                                           const DensityCheckConfig& cfg) {
  if (spec.domain.dim != 1)
    throw DimensionMismatch("density certification is implemented for one spatial dimension");
  if (!(cfg.r > 0 && cfg.r < cfg.s)) throw DegenerateGrid("need 0 < r < s");
  if (cfg.n_bins < 8) throw DegenerateGrid("need at least 8 bins");
  if (cfg.n_paths < 1000) throw InsufficientSamples("density check needs >= 1000 paths");
  PathConfig cfg0 = base;
  cfg0.t_eval = cfg.s;
  cfg0.n_steps = cfg.n_steps;
  cfg0.exit_detection = cfg.exit_detection;
  validate_config(spec, cfg0);
  const double x0 = cfg0.x0[0];

  // histogram window: the domain clipped to a diffusive slab around the start
  double a_scale = 0.0;
  {
    std::vector<double> sig(1);
    spec.coeffs.sigma(0.0, cfg0.x0, sig);
    a_scale = sig[0] * sig[0];
  }
  const double slab = 6.0 * std::sqrt(std::max(a_scale, spec.coeffs.ellipticity) * cfg.s);
  const double lo = cfg.hist_lo.value_or(std::max(spec.domain.lo[0], x0 - slab));
  const double hi = cfg.hist_hi.value_or(std::min(spec.domain.hi[0], x0 + slab));
  if (!(hi > lo)) throw DegenerateGrid("empty histogram window");

  const int r_index = static_cast<int>(std::llround(cfg.r / cfg.s * cfg.n_steps));
  if (r_index < 1 || r_index >= cfg.n_steps ||
      std::abs(cfg.r - r_index * (cfg.s / cfg.n_steps)) > 1e-9 * cfg.s)
    throw DegenerateGrid("intermediate time r does not sit on the step grid interior");

  // pass 1: direct ensemble, recording positions at r and s when still alive
  std::vector<double> pos_r(cfg.n_paths, std::numeric_limits<double>::quiet_NaN());
  std::vector<double> pos_s(cfg.n_paths, std::numeric_limits<double>::quiet_NaN());
  parallel_for(cfg.n_paths, cfg.workers, [&](std::int64_t j) {
    PathConfig c = cfg0;
    c.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(j));
    KilledPath p = simulate_path(spec, c);
    const int alive_until = p.exited() ? *p.exit_index : p.n_cells() + 1;
    if (r_index < alive_until) pos_r[j] = p.state(r_index)[0];
    if (!p.exited()) pos_s[j] = p.state(p.n_recorded - 1)[0];
  });

  Histogram hist_s{lo, hi, cfg.n_bins, std::vector<double>(cfg.n_bins, 0.0)};
  Histogram hist_r = hist_s;
  long alive_s = 0;
  for (long j = 0; j < cfg.n_paths; ++j) {
    if (!std::isnan(pos_r[j])) {
      const int b = hist_r.index(pos_r[j]);
      if (b >= 0) hist_r.count[b] += 1;
    }
    if (!std::isnan(pos_s[j])) {
      ++alive_s;
      const int b = hist_s.index(pos_s[j]);
      if (b >= 0) hist_s.count[b] += 1;
    }
  }

  DensityCheckReport rep;
  const double w = hist_s.width();
  const double n_d = static_cast<double>(cfg.n_paths);
  rep.bin_centers.resize(cfg.n_bins);
  rep.density.resize(cfg.n_bins);
  rep.density_se.resize(cfg.n_bins);
  for (int b = 0; b < cfg.n_bins; ++b) {
    rep.bin_centers[b] = lo + (b + 0.5) * w;
    const double q = hist_s.count[b] / n_d;
    rep.density[b] = q / w;
    rep.density_se[b] = std::sqrt(std::max(q * (1.0 - q), 1e-300) / n_d) / w;
  }
  // partition of unity: histogram mass plus exit fraction; the histogram can
  // clip alive mass outside its window, so this is not an identity
  double hist_mass = 0.0;
  for (int b = 0; b < cfg.n_bins; ++b) hist_mass += hist_s.count[b] / n_d;
  rep.mass_alive = hist_mass;
  rep.mass_exited = 1.0 - static_cast<double>(alive_s) / n_d;
  const double q_alive = static_cast<double>(alive_s) / n_d;
  rep.mass_total_se = std::sqrt(std::max(q_alive * (1.0 - q_alive), 1e-300) / n_d);
  rep.mass_ok =
      std::abs(rep.mass_alive + rep.mass_exited - 1.0) <= 3.0 * rep.mass_total_se + 1e-6;

  // Gaussian envelope: least squares of log density against |y-x0|^2/(2s),
  // then the amplitude is inflated until every well-populated bin sits below
  // the envelope within 3 binomial standard errors.
  {
    std::vector<double> xs, ys;
    for (int b = 0; b < cfg.n_bins; ++b) {
      if (hist_s.count[b] >= 20) {
        const double rr = rep.bin_centers[b] - x0;
        xs.push_back(rr * rr / (2.0 * cfg.s));
        ys.push_back(std::log(rep.density[b]));
      }
    }
    if (xs.size() < 5) throw InsufficientSamples("too few populated bins for an envelope fit");
    const LinFit fit = linear_fit(xs, ys);
    rep.env_c_rate = std::max(-fit.slope, 1e-6);
    double log_amp = fit.intercept + 0.5 * std::log(cfg.s);  // C = exp(intercept) * s^{d/2}
    // inflate C so the envelope dominates
    for (int b = 0; b < cfg.n_bins; ++b) {
      if (hist_s.count[b] < 5) continue;
      const double rr = rep.bin_centers[b] - x0;
      const double needed = std::log(std::max(rep.density[b] - 3.0 * rep.density_se[b], 1e-300)) +
                            0.5 * std::log(cfg.s) + rep.env_c_rate * rr * rr / (2.0 * cfg.s);
      log_amp = std::max(log_amp, needed);
    }
    rep.env_c_amp = std::exp(log_amp);
    rep.envelope_violations = 0;
    for (int b = 0; b < cfg.n_bins; ++b) {
      const double rr = rep.bin_centers[b] - x0;
      const double env = rep.env_c_amp * std::pow(cfg.s, -0.5) *
                         std::exp(-rep.env_c_rate * rr * rr / (2.0 * cfg.s));
      if (rep.density[b] - 3.0 * rep.density_se[b] > env) ++rep.envelope_violations;
    }
    rep.envelope_ok = rep.envelope_violations == 0;
    rep.kappa2 = 1.0 / rep.env_c_rate;
    rep.kappa1 = rep.env_c_amp * std::sqrt(2.0 * M_PI * rep.kappa2);
  }

  // two-step reconstruction: compose the r histogram with transitions
  // re-simulated from each bin center over [r, s]
  {
    const int nb = cfg.n_bins;
    std::vector<double> trans(static_cast<std::size_t>(nb) * nb, 0.0);  // row: from-bin
    const CoefficientField reflected = time_reflect(spec.coeffs);
    parallel_for(nb, cfg.workers, [&](std::int64_t from) {
      const std::vector<double> start{hist_r.lo + (from + 0.5) * hist_r.width()};
      if (spec.domain.classify(start) != Containment::interior) return;
      Histogram h{hist_s.lo, hist_s.hi, nb, std::vector<double>(nb, 0.0)};
      StepWorkspace ws(1);
      const double sub_dt = (cfg.s - cfg.r) / cfg.transition_steps;
      for (long j = 0; j < cfg.transition_paths_per_bin; ++j) {
        // clock starts at r; the equation time parameter stays s
        const std::uint64_t sj = derive_seed2(cfg.seed ^ 0xABCDEF1234567ull,
                                              static_cast<std::uint64_t>(from),
                                              static_cast<std::uint64_t>(j));
        GaussianStream gauss(derive_seed(sj, 0)), bridge(derive_seed(sj, 1));
        KilledPath p = run_euler(spec, reflected, cfg.s, start, sub_dt, cfg.transition_steps,
                                 cfg.r, cfg.exit_detection, gauss, bridge, sj, ws);
        if (!p.exited()) {
          const int to = h.index(p.state(p.n_recorded - 1)[0]);
          if (to >= 0) h.count[to] += 1;
        }
      }
      for (int to = 0; to < nb; ++to)
        trans[static_cast<std::size_t>(from) * nb + to] =
            h.count[to] / (static_cast<double>(cfg.transition_paths_per_bin) * h.width());
    });
    // composed density at s
    std::vector<double> composed(nb, 0.0);
    for (int from = 0; from < nb; ++from) {
      const double mass_from = hist_r.count[from] / n_d;  // probability in from-bin at r
      for (int to = 0; to < nb; ++to)
        composed[to] += mass_from * trans[static_cast<std::size_t>(from) * nb + to];
    }
    double tv = 0.0;
    for (int b = 0; b < nb; ++b) tv += std::abs(composed[b] - rep.density[b]) * w;
    rep.two_step_tv = 0.5 * tv;
    rep.two_step_ok = rep.two_step_tv < 0.05;
  }
  return rep;
}

}  // namespace fkmc
