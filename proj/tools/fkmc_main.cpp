// fkmc command line: one binary, one subcommand per operation.  Budgets come
// from the spec file; flags override them for the run.  Every artifact embeds
// the config digest and master seed so a run can be reproduced byte for byte;
// logs go to stderr, data goes to files, nothing is ever written back to the
// spec.  Exit codes: 0 success, 2 invalid configuration or arguments,
// 3 runtime failure, 4 failed --check or acceptance assertion.

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fkmc/acceptance.hpp"
#include "fkmc/analysis.hpp"
#include "fkmc/config.hpp"
#include "fkmc/fk_estimator.hpp"
#include "fkmc/model.hpp"
#include "fkmc/noisefield.hpp"
#include "fkmc/parallel.hpp"
#include "fkmc/pathsim.hpp"
#include "fkmc/pdecheck.hpp"
#include "fkmc/rng.hpp"
#include "fkmc/spectral.hpp"

namespace {

using nlohmann::ordered_json;

constexpr const char* kVersion = "0.1.0";

void logf(const char* f, ...) {
  va_list ap;
  va_start(ap, f);
  std::fprintf(stderr, "[fkmc] ");
  std::vfprintf(stderr, f, ap);
  std::fprintf(stderr, "\n");
  va_end(ap);
}

// ---- shared subcommand state ------------------------------------------------

struct SubCtx {
  std::string spec_path;
  std::string out_dir = ".";
  std::string format;  // empty = subcommand default
  bool check = false;
  long paths = 0;
  int steps = 0;
  int workers = 0;
  std::uint64_t seed = 0;
  double t = 0.0;
  std::vector<double> x;
  CLI::Option* o_paths = nullptr;
  CLI::Option* o_steps = nullptr;
  CLI::Option* o_workers = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_t = nullptr;
  CLI::Option* o_x = nullptr;
};

void add_run_flags(CLI::App* s, SubCtx& c) {
  s->add_option("--spec", c.spec_path, "problem and budget description file")->required();
  s->add_option("--out", c.out_dir, "directory for result artifacts")->capture_default_str();
  s->add_option("--format", c.format, "artifact format: csv or json");
  s->add_flag("--check", c.check, "assert the built-in consistency bound; exit 4 on a miss");
  c.o_paths = s->add_option("--paths", c.paths, "override the path/batch budget");
  c.o_steps = s->add_option("--steps", c.steps, "override the steps-per-path budget");
  c.o_workers = s->add_option("--workers", c.workers, "override the worker thread count");
  c.o_seed = s->add_option("--seed", c.seed, "override the master seed");
  c.o_t = s->add_option("--t", c.t, "override the evaluation time");
  c.o_x = s->add_option("--x", c.x, "override the evaluation point (one value per axis)");
}

fkmc::RunConfig load_run(const SubCtx& c) {
  fkmc::RunConfig rc = fkmc::load_config(c.spec_path);
  if (c.o_paths->count()) rc.paths = c.paths;
  if (c.o_steps->count()) rc.steps = c.steps;
  if (c.o_workers->count()) rc.workers = c.workers;
  if (c.o_seed->count()) rc.seed = c.seed;
  if (c.o_t->count()) rc.t_eval = c.t;
  if (c.o_x->count()) rc.x_eval = c.x;
  fkmc::refresh_digest(rc);

  if (rc.paths < 1) throw fkmc::ValidationFailed("paths must be positive");
  if (rc.steps < 1) throw fkmc::ValidationFailed("steps must be positive");
  if (rc.workers < 0) throw fkmc::ValidationFailed("workers must be >= 0");
  if (!(rc.t_eval > 0.0) || rc.t_eval > rc.spec.horizon)
    throw fkmc::ValidationFailed("t must lie in (0, horizon]");
  if (static_cast<int>(rc.x_eval.size()) != rc.spec.domain.dim)
    throw fkmc::ValidationFailed("x must have one value per domain axis");
  if (rc.spec.domain.classify(rc.x_eval) != fkmc::Containment::interior)
    throw fkmc::ValidationFailed("x must lie in the domain interior");
  return rc;
}

std::string pick_format(const SubCtx& c, const char* dflt) {
  if (c.format.empty()) return dflt;
  if (c.format != "csv" && c.format != "json")
    throw fkmc::ValidationFailed("format must be csv or json");
  return c.format;
}

std::string artifact_path(const SubCtx& c, const char* sub, const std::string& fmt) {
  std::filesystem::create_directories(c.out_dir);
  return c.out_dir + "/" + sub + "." + fmt;
}

ordered_json provenance(const fkmc::RunConfig& rc, const char* sub, const SubCtx& c) {
  ordered_json p;
  p["tool"] = "fkmc";
  p["version"] = kVersion;
  p["subcommand"] = sub;
  p["spec"] = c.spec_path;
  p["digest"] = rc.digest;
  p["seed"] = rc.seed;
  p["paths"] = rc.paths;
  p["steps"] = rc.steps;
  return p;
}

void write_json(const std::string& path, const ordered_json& j) {
  std::ofstream f(path);
  if (!f) throw fkmc::ValidationFailed("cannot open output file " + path);
  f << j.dump(2) << '\n';
}

std::ofstream open_csv(const std::string& path, const fkmc::RunConfig& rc, const char* sub,
                       const SubCtx& c) {
  std::ofstream f(path);
  if (!f) throw fkmc::ValidationFailed("cannot open output file " + path);
  f << "# fkmc " << kVersion << '\n'
    << "# subcommand=" << sub << '\n'
    << "# spec=" << c.spec_path << '\n'
    << "# digest=" << rc.digest << '\n'
    << "# seed=" << rc.seed << '\n';
  return f;
}

std::string num(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.12g", v);
  return b;
}

// data probed at a handful of space-time points; --check modes that assert
// the unit-data identities refuse to run on anything else
bool unit_data(const fkmc::ProblemSpec& s) {
  std::vector<std::vector<double>> pts;
  const int d = s.domain.dim;
  std::vector<double> lo(d), hi(d), center(d);
  if (s.domain.kind == fkmc::DomainSpec::Kind::ball) {
    for (int k = 0; k < d; ++k) {
      lo[k] = s.domain.center[k] - s.domain.radius;
      hi[k] = s.domain.center[k] + s.domain.radius;
    }
  } else {
    lo = s.domain.lo;
    hi = s.domain.hi;
  }
  for (int k = 0; k < d; ++k) center[k] = 0.5 * (lo[k] + hi[k]);
  pts.push_back(center);
  for (int k = 0; k < d; ++k) {
    auto p = center;
    p[k] = center[k] + 0.45 * (hi[k] - lo[k]);
    pts.push_back(p);
    p[k] = center[k] - 0.45 * (hi[k] - lo[k]);
    pts.push_back(p);
  }
  for (double t : {0.0, 0.5 * s.horizon, s.horizon})
    for (const auto& p : pts)
      if (std::abs(s.data_h(t, p) - 1.0) > 1e-12) return false;
  return true;
}

ordered_json estimate_json(const fkmc::FKEstimate& e) {
  ordered_json r;
  r["value"] = e.value;
  r["std_error"] = e.std_error;
  r["n"] = e.n_paths;
  r["k"] = e.k;
  r["product"] = e.product == fkmc::ProductType::stratonovich ? "stratonovich" : "skorohod";
  r["median_of_means"] = e.median_of_means;
  r["log_value"] = e.log_value;
  r["log_se"] = e.log_se;
  return r;
}

// ---- solve -------------------------------------------------------------------

int run_solve(const SubCtx& c) {
  auto rc = load_run(c);
  const auto fmt = pick_format(c, "json");
  logf("solve spec=%s digest=%s seed=%llu paths=%ld steps=%d", c.spec_path.c_str(),
       rc.digest.c_str(), static_cast<unsigned long long>(rc.seed), rc.paths, rc.steps);

  fkmc::SolveOptions so;
  so.n_steps = rc.steps;
  so.workers = rc.workers;
  const auto est = fkmc::solve_point_conditional(rc.spec, rc.t_eval, rc.x_eval, rc.paths, rc.seed, so);
  logf("solve value=%.10g se=%.3g", est.value, est.std_error);

  const auto path = artifact_path(c, "solve", fmt);
  if (fmt == "json") {
    ordered_json j;
    j["provenance"] = provenance(rc, "solve", c);
    j["t"] = rc.t_eval;
    j["x"] = rc.x_eval;
    j["result"] = estimate_json(est);
    write_json(path, j);
  } else {
    auto f = open_csv(path, rc, "solve", c);
    f << "t";
    for (std::size_t k = 0; k < rc.x_eval.size(); ++k) f << ",x" << k;
    f << ",value,std_error,n_paths\n" << num(rc.t_eval);
    for (double xk : rc.x_eval) f << ',' << num(xk);
    f << ',' << num(est.value) << ',' << num(est.std_error) << ',' << est.n_paths << '\n';
  }
  logf("wrote %s", path.c_str());

  if (c.check) {
    if (!unit_data(rc.spec))
      throw fkmc::ValidationFailed("solve --check asserts the unit-data identity; data is not 1");
    const bool skor = rc.spec.product == fkmc::ProductType::skorohod;
    const bool ok = skor ? std::abs(est.value - 1.0) <= std::max(3.0 * est.std_error, 1e-12)
                         : est.value >= 1.0 - 3.0 * est.std_error;
    if (!ok) {
      logf("check FAILED: value=%.10g se=%.3g (%s)", est.value, est.std_error,
           skor ? "mean-one identity" : "lower bound");
      return 4;
    }
    logf("check passed");
  }
  return 0;
}

// ---- moments -------------------------------------------------------------------

int run_moments(const SubCtx& c, int k_order, const CLI::Option* o_k) {
  auto rc = load_run(c);
  if (o_k->count()) rc.k = k_order;
  fkmc::refresh_digest(rc);
  if (rc.k < 1) throw fkmc::ValidationFailed("k must be a positive integer");
  const auto fmt = pick_format(c, "json");
  logf("moments spec=%s digest=%s k=%d batches=%ld", c.spec_path.c_str(), rc.digest.c_str(), rc.k,
       rc.paths);

  fkmc::SolveOptions so;
  so.n_steps = rc.steps;
  so.workers = rc.workers;
  const auto est = fkmc::moment_estimate(rc.spec, rc.t_eval, rc.x_eval, rc.k, rc.paths, rc.seed, so);
  logf("moments value=%.10g se=%.3g mom=%.10g", est.value, est.std_error, est.median_of_means);

  const auto path = artifact_path(c, "moments", fmt);
  if (fmt == "json") {
    ordered_json j;
    j["provenance"] = provenance(rc, "moments", c);
    j["t"] = rc.t_eval;
    j["x"] = rc.x_eval;
    j["result"] = estimate_json(est);
    write_json(path, j);
  } else {
    auto f = open_csv(path, rc, "moments", c);
    f << "t,k,value,std_error,median_of_means,n_batches\n"
      << num(rc.t_eval) << ',' << rc.k << ',' << num(est.value) << ',' << num(est.std_error) << ','
      << num(est.median_of_means) << ',' << est.n_paths << '\n';
  }
  logf("wrote %s", path.c_str());

  if (c.check) {
    if (!unit_data(rc.spec))
      throw fkmc::ValidationFailed("moments --check asserts unit-data identities; data is not 1");
    bool ok = false;
    if (rc.spec.product == fkmc::ProductType::skorohod) {
      if (rc.k != 1)
        throw fkmc::ValidationFailed(
            "moments --check under the Wick product is defined for k = 1 only");
      ok = std::abs(est.value - 1.0) <= 1e-12;
    } else {
      ok = est.value >= 1.0 - 3.0 * est.std_error;
    }
    if (!ok) {
      logf("check FAILED: value=%.10g se=%.3g", est.value, est.std_error);
      return 4;
    }
    logf("check passed");
  }
  return 0;
}

// ---- smallball -------------------------------------------------------------------

int run_smallball(const SubCtx& c, double radius, std::vector<double> ts) {
  auto rc = load_run(c);
  const auto fmt = pick_format(c, "csv");
  if (!(radius > 0.0)) throw fkmc::ValidationFailed("--eps must be a positive ball radius");
  if (ts.empty()) ts = {rc.t_eval};
  for (double t : ts)
    if (!(t > 0.0) || t > rc.spec.horizon)
      throw fkmc::ValidationFailed("every --t must lie in (0, horizon]");
  logf("smallball spec=%s digest=%s eps=%g times=%zu paths=%ld", c.spec_path.c_str(),
       rc.digest.c_str(), radius, ts.size(), rc.paths);

  fkmc::ProblemSpec sub = rc.spec;
  sub.domain = fkmc::DomainSpec::ball(rc.x_eval, radius);

  struct Row {
    double t, p, se, pred, rel;
  };
  std::vector<Row> rows;
  for (std::size_t ti = 0; ti < ts.size(); ++ti) {
    const double t = ts[ti];
    const long n = rc.paths;
    std::vector<unsigned char> alive(static_cast<std::size_t>(n), 0);
    const std::uint64_t st = fkmc::derive_seed(rc.seed, 0x5B00 + ti);
    fkmc::parallel_for(n, rc.workers, [&](std::int64_t j) {
      fkmc::PathConfig pc;
      pc.n_steps = rc.steps;
      pc.t_eval = t;
      pc.x0 = rc.x_eval;
      pc.seed = fkmc::derive_seed(st, static_cast<std::uint64_t>(j));
      alive[static_cast<std::size_t>(j)] = fkmc::simulate_path(sub, pc).exited() ? 0 : 1;
    });
    long count = 0;
    for (auto a : alive) count += a;
    const double p = static_cast<double>(count) / static_cast<double>(n);
    const double se = std::sqrt(std::max(p * (1.0 - p), 1e-300) / static_cast<double>(n));
    const double pred =
        fkmc::smallball_predict(rc.spec.coeffs, rc.spec.domain, rc.x_eval, radius, t, 200);
    rows.push_back({t, p, se, pred, pred > 0.0 ? std::abs(p - pred) / pred : 0.0});
    logf("smallball t=%g survival=%.5f se=%.2g prediction=%.5f", t, p, se, pred);
  }

  const auto path = artifact_path(c, "smallball", fmt);
  if (fmt == "csv") {
    auto f = open_csv(path, rc, "smallball", c);
    f << "t,eps,survival,std_error,prediction,rel_gap\n";
    for (const auto& r : rows)
      f << num(r.t) << ',' << num(radius) << ',' << num(r.p) << ',' << num(r.se) << ','
        << num(r.pred) << ',' << num(r.rel) << '\n';
  } else {
    ordered_json j;
    j["provenance"] = provenance(rc, "smallball", c);
    j["eps"] = radius;
    j["rows"] = ordered_json::array();
    for (const auto& r : rows)
      j["rows"].push_back({{"t", r.t},
                           {"survival", r.p},
                           {"std_error", r.se},
                           {"prediction", r.pred},
                           {"rel_gap", r.rel}});
    write_json(path, j);
  }
  logf("wrote %s", path.c_str());

  if (c.check) {
    bool ok = true;
    for (const auto& r : rows) ok = ok && std::abs(r.p - r.pred) <= 0.10 * r.pred + 3.0 * r.se;
    if (!ok) {
      logf("check FAILED: survival vs one-term prediction beyond 10%% + 3 SE");
      return 4;
    }
    logf("check passed");
  }
  return 0;
}

// ---- crosscheck -------------------------------------------------------------------

int run_crosscheck(const SubCtx& c) {
  auto rc = load_run(c);
  const auto fmt = pick_format(c, "csv");
  const int d = rc.spec.domain.dim;
  std::vector<double> lo(d), hi(d);
  if (rc.spec.domain.kind == fkmc::DomainSpec::Kind::ball) {
    for (int k = 0; k < d; ++k) {
      lo[k] = rc.spec.domain.center[k] - rc.spec.domain.radius;
      hi[k] = rc.spec.domain.center[k] + rc.spec.domain.radius;
    }
  } else {
    lo = rc.spec.domain.lo;
    hi = rc.spec.domain.hi;
  }

  // The simulator records the raw Euler proposal at the killing step, which can
  // land outside the domain by one increment, and the regularized quadrature then
  // evaluates the field at that cell's midpoint.  Pad the sheet window beyond the
  // kernel cutoff by a generous bound on that overshoot, probed from the
  // coefficients themselves.
  const double cutoff = 6.0 * std::sqrt(rc.eps);
  const double dt = rc.t_eval / rc.steps;
  double bmax = 0.0, smax = 0.0;
  {
    std::vector<double> xp(d), bv(d), sv(static_cast<std::size_t>(d) * d);
    for (int ii = 0; ii <= 4; ++ii) {
      for (int k = 0; k < d; ++k) xp[k] = lo[k] + (hi[k] - lo[k]) * ii / 4.0;
      for (double tq : {0.0, 0.5 * rc.t_eval, rc.t_eval}) {
        rc.spec.coeffs.drift(tq, xp, bv);
        rc.spec.coeffs.sigma(tq, xp, sv);
        for (int k = 0; k < d; ++k) {
          bmax = std::max(bmax, std::abs(bv[static_cast<std::size_t>(k)]));
          double row = 0.0;
          for (int j = 0; j < d; ++j) {
            const double s = sv[static_cast<std::size_t>(k) * d + j];
            row += s * s;
          }
          smax = std::max(smax, std::sqrt(row));
        }
      }
    }
  }
  const double pad = bmax * dt + 9.0 * smax * std::sqrt(dt);
  std::vector<std::pair<double, double>> ranges;
  for (int k = 0; k < d; ++k)
    ranges.emplace_back(lo[k] - 1.02 * cutoff - pad, hi[k] + 1.02 * cutoff + pad);
  const auto grid = fkmc::TensorGrid::uniform(1.05 * rc.t_eval, 43, ranges, 41);
  const auto sheet = fkmc::sample_sheet(grid, rc.spec.hurst, fkmc::derive_seed(rc.seed, 0x5EE7));
  const fkmc::MollifierParams m{rc.eps, rc.delta};

  std::vector<std::pair<double, std::vector<double>>> pts;
  for (double frac : {0.25, 0.5, 0.75}) {
    auto x = rc.x_eval;
    x[0] = lo[0] + frac * (hi[0] - lo[0]);
    pts.emplace_back(rc.t_eval, std::move(x));
  }

  fkmc::CrosscheckBudget b;
  b.n_time = 600;
  b.cells_per_axis = 128;
  b.n_paths = static_cast<int>(rc.paths);
  b.n_steps = rc.steps;
  b.seed = rc.seed;
  b.workers = rc.workers;
  b.tol = 0.03;
  logf("crosscheck spec=%s digest=%s paths=%ld steps=%d eps=%g delta=%g", c.spec_path.c_str(),
       rc.digest.c_str(), rc.paths, rc.steps, rc.eps, rc.delta);
  const auto rep = fkmc::crosscheck(rc.spec, sheet, m, pts, b);
  logf("crosscheck max_rel_gap=%.5f violations=%d scheme=%s", rep.max_rel_gap, rep.violations,
       rep.scheme.c_str());

  const auto path = artifact_path(c, "crosscheck", fmt);
  if (fmt == "csv") {
    auto f = open_csv(path, rc, "crosscheck", c);
    f << "# scheme=" << rep.scheme << '\n' << "t";
    for (int k = 0; k < d; ++k) f << ",x" << k;
    f << ",fd,fk,fk_se,rel_gap,ok\n";
    for (const auto& r : rep.rows) {
      f << num(r.t);
      for (double xk : r.x) f << ',' << num(xk);
      f << ',' << num(r.fd) << ',' << num(r.fk) << ',' << num(r.fk_se) << ',' << num(r.rel_gap)
        << ',' << (r.ok ? 1 : 0) << '\n';
    }
  } else {
    ordered_json j;
    j["provenance"] = provenance(rc, "crosscheck", c);
    j["scheme"] = rep.scheme;
    j["max_rel_gap"] = rep.max_rel_gap;
    j["violations"] = rep.violations;
    j["rows"] = ordered_json::array();
    for (const auto& r : rep.rows)
      j["rows"].push_back({{"t", r.t},
                           {"x", r.x},
                           {"fd", r.fd},
                           {"fk", r.fk},
                           {"fk_se", r.fk_se},
                           {"rel_gap", r.rel_gap},
                           {"ok", r.ok}});
    write_json(path, j);
  }
  logf("wrote %s", path.c_str());

  if (c.check) {
    if (rep.violations != 0) {
      logf("check FAILED: %d of %zu points beyond tolerance", rep.violations, rep.rows.size());
      return 4;
    }
    logf("check passed");
  }
  return 0;
}

// ---- holder -------------------------------------------------------------------

int run_holder(const SubCtx& c, std::vector<double> offsets) {
  auto rc = load_run(c);
  const auto fmt = pick_format(c, "json");
  if (offsets.empty()) offsets = {0.06, 0.12, 0.24};
  logf("holder spec=%s digest=%s pairs=%ld steps=%d offsets=%zu", c.spec_path.c_str(),
       rc.digest.c_str(), rc.paths, rc.steps, offsets.size());

  fkmc::HolderOptions ho;
  ho.n_steps = rc.steps;
  ho.workers = rc.workers;
  const auto rep = fkmc::holder_variance_curve(rc.spec, rc.t_eval, rc.x_eval, offsets,
                                               static_cast<int>(rc.paths), rc.seed, ho);
  logf("holder spatial slope=%.4f (r2 %.4f) temporal slope=%.4f (r2 %.4f)", rep.spatial.fit.slope,
       rep.spatial.fit.r2, rep.temporal.fit.slope, rep.temporal.fit.r2);

  auto curve_json = [](const fkmc::HolderCurve& h) {
    ordered_json j;
    j["offsets"] = h.offsets;
    j["moments"] = h.moments;
    j["std_errors"] = h.ses;
    j["fit"] = {{"slope", h.fit.slope},
                {"intercept", h.fit.intercept},
                {"stderr_slope", h.fit.stderr_slope},
                {"r2", h.fit.r2}};
    return j;
  };

  const auto path = artifact_path(c, "holder", fmt);
  if (fmt == "json") {
    ordered_json j;
    j["provenance"] = provenance(rc, "holder", c);
    j["t"] = rc.t_eval;
    j["x"] = rc.x_eval;
    j["spatial"] = curve_json(rep.spatial);
    j["temporal"] = curve_json(rep.temporal);
    write_json(path, j);
  } else {
    auto f = open_csv(path, rc, "holder", c);
    f << "# spatial_slope=" << num(rep.spatial.fit.slope) << " r2=" << num(rep.spatial.fit.r2)
      << '\n'
      << "# temporal_slope=" << num(rep.temporal.fit.slope) << " r2=" << num(rep.temporal.fit.r2)
      << '\n'
      << "kind,offset,moment,std_error\n";
    for (std::size_t i = 0; i < rep.spatial.offsets.size(); ++i)
      f << "spatial," << num(rep.spatial.offsets[i]) << ',' << num(rep.spatial.moments[i]) << ','
        << num(rep.spatial.ses[i]) << '\n';
    for (std::size_t i = 0; i < rep.temporal.offsets.size(); ++i)
      f << "temporal," << num(rep.temporal.offsets[i]) << ',' << num(rep.temporal.moments[i]) << ','
        << num(rep.temporal.ses[i]) << '\n';
  }
  logf("wrote %s", path.c_str());

  if (c.check) {
    const auto th = fkmc::theory_exponents(rc.spec.hurst, rc.spec.domain.dim);
    const double sp_min = 2.0 * th.rho - 0.4;
    bool ok = rep.spatial.fit.slope >= sp_min;
    std::string which = ok ? "" : "spatial";
    if (th.rho_prime) {
      if (rep.temporal.fit.slope < *th.rho_prime - 0.4) {
        ok = false;
        which += which.empty() ? "temporal" : "+temporal";
      }
    } else {
      logf("temporal bound unavailable for these indices; spatial bound only");
    }
    if (!ok) {
      logf("check FAILED: %s slope below the pilot bound", which.c_str());
      return 4;
    }
    logf("check passed");
  }
  return 0;
}

// ---- density -------------------------------------------------------------------

int run_density(const SubCtx& c) {
  auto rc = load_run(c);
  const auto fmt = pick_format(c, "json");
  fkmc::PathConfig base;
  base.n_steps = rc.steps;
  base.t_eval = rc.t_eval;
  base.x0 = rc.x_eval;

  fkmc::DensityCheckConfig dc;
  dc.s = rc.t_eval;
  dc.r = 0.5 * rc.t_eval;
  dc.n_paths = rc.paths;
  dc.n_steps = rc.steps;
  dc.transition_paths_per_bin = std::max<long>(1000, rc.paths / 100);
  dc.transition_steps = std::max(50, rc.steps / 2);
  dc.seed = rc.seed;
  dc.workers = rc.workers;
  logf("density spec=%s digest=%s paths=%ld bins=%d", c.spec_path.c_str(), rc.digest.c_str(),
       rc.paths, dc.n_bins);
  const auto rep = fkmc::empirical_density_check(rc.spec, base, dc);
  logf("density mass=%.5f envelope C=%.4f c=%.4f tv=%.5f", rep.mass_alive + rep.mass_exited,
       rep.env_c_amp, rep.env_c_rate, rep.two_step_tv);

  const auto path = artifact_path(c, "density", fmt);
  if (fmt == "json") {
    ordered_json j;
    j["provenance"] = provenance(rc, "density", c);
    j["mass_alive"] = rep.mass_alive;
    j["mass_exited"] = rep.mass_exited;
    j["mass_total_se"] = rep.mass_total_se;
    j["mass_ok"] = rep.mass_ok;
    j["envelope"] = {{"amp", rep.env_c_amp},
                     {"rate", rep.env_c_rate},
                     {"violations", rep.envelope_violations},
                     {"ok", rep.envelope_ok},
                     {"kappa1", rep.kappa1},
                     {"kappa2", rep.kappa2}};
    j["two_step"] = {{"tv", rep.two_step_tv}, {"ok", rep.two_step_ok}};
    j["bin_centers"] = rep.bin_centers;
    j["density"] = rep.density;
    j["density_se"] = rep.density_se;
    write_json(path, j);
  } else {
    auto f = open_csv(path, rc, "density", c);
    f << "# mass_alive=" << num(rep.mass_alive) << " mass_exited=" << num(rep.mass_exited)
      << " mass_ok=" << (rep.mass_ok ? 1 : 0) << '\n'
      << "# envelope_amp=" << num(rep.env_c_amp) << " envelope_rate=" << num(rep.env_c_rate)
      << " envelope_ok=" << (rep.envelope_ok ? 1 : 0) << '\n'
      << "# two_step_tv=" << num(rep.two_step_tv) << " two_step_ok=" << (rep.two_step_ok ? 1 : 0)
      << '\n'
      << "bin_center,density,std_error\n";
    for (std::size_t i = 0; i < rep.bin_centers.size(); ++i)
      f << num(rep.bin_centers[i]) << ',' << num(rep.density[i]) << ',' << num(rep.density_se[i])
        << '\n';
  }
  logf("wrote %s", path.c_str());

  if (c.check) {
    if (!(rep.mass_ok && rep.envelope_ok && rep.two_step_ok)) {
      logf("check FAILED: mass_ok=%d envelope_ok=%d two_step_ok=%d", rep.mass_ok ? 1 : 0,
           rep.envelope_ok ? 1 : 0, rep.two_step_ok ? 1 : 0);
      return 4;
    }
    logf("check passed");
  }
  return 0;
}

// ---- compare -------------------------------------------------------------------

int run_compare(const SubCtx& c) {
  auto rc = load_run(c);
  const auto fmt = pick_format(c, "csv");
  const double dt = rc.t_eval / rc.steps;
  std::vector<double> tg;
  for (int j = 1; j <= 5; ++j)
    tg.push_back(std::round(static_cast<double>(j) * rc.steps / 5.0) * dt);

  fkmc::SolveOptions so;
  so.n_steps = rc.steps;
  so.workers = rc.workers;
  logf("compare spec=%s digest=%s paths=%ld grid=5", c.spec_path.c_str(), rc.digest.c_str(),
       rc.paths);
  const auto rep = fkmc::comparison_check(rc.spec, tg, rc.paths, rc.seed, so, std::nullopt);
  logf("compare kappa1=%.4f kappa2=%.4f violations=%d paths=%ld", rep.kappa1, rep.kappa2,
       rep.violations, rep.paths_used);

  const auto path = artifact_path(c, "compare", fmt);
  if (fmt == "csv") {
    auto f = open_csv(path, rc, "compare", c);
    f << "# kappa1=" << num(rep.kappa1) << " kappa2=" << num(rep.kappa2)
      << " violations=" << rep.violations << '\n'
      << "s,r,lhs,lhs_se,rhs,ok\n";
    for (const auto& r : rep.rows)
      f << num(r.s) << ',' << num(r.r) << ',' << num(r.lhs) << ',' << num(r.lhs_se) << ','
        << num(r.rhs) << ',' << (r.ok ? 1 : 0) << '\n';
  } else {
    ordered_json j;
    j["provenance"] = provenance(rc, "compare", c);
    j["kappa1"] = rep.kappa1;
    j["kappa2"] = rep.kappa2;
    j["violations"] = rep.violations;
    j["rows"] = ordered_json::array();
    for (const auto& r : rep.rows)
      j["rows"].push_back({{"s", r.s},
                           {"r", r.r},
                           {"lhs", r.lhs},
                           {"lhs_se", r.lhs_se},
                           {"rhs", r.rhs},
                           {"ok", r.ok}});
    write_json(path, j);
  }
  logf("wrote %s", path.c_str());

  if (c.check) {
    if (rep.violations != 0) {
      logf("check FAILED: %d grid pairs violate the comparison bound", rep.violations);
      return 4;
    }
    logf("check passed");
  }
  return 0;
}

// ---- acceptance -------------------------------------------------------------------

int run_acceptance_cmd(const fkmc::AcceptanceOptions& opts, const std::string& out_path) {
  const auto report = fkmc::run_acceptance(
      opts, [](const std::string& line) { std::printf("%s\n", line.c_str()); });
  std::ofstream f(out_path);
  if (!f) throw fkmc::ValidationFailed("cannot open output file " + out_path);
  f << fkmc::acceptance_manifest_json(report, opts);
  logf("acceptance: %d passed, %d failed, %d inconclusive; manifest=%s", report.n_pass,
       report.n_fail, report.n_inconclusive, out_path.c_str());
  return report.all_ok() ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"killed-diffusion Monte Carlo with fractional sheet weights"};
  app.require_subcommand(1);

  SubCtx c_solve, c_moments, c_smallball, c_crosscheck, c_holder, c_density, c_compare;

  auto* s_solve = app.add_subcommand("solve", "conditional-mean point estimate");
  add_run_flags(s_solve, c_solve);

  auto* s_moments = app.add_subcommand("moments", "replica moment estimate");
  add_run_flags(s_moments, c_moments);
  int k_order = 0;
  auto* o_k = s_moments->add_option("--k", k_order, "replica order");

  auto* s_smallball = app.add_subcommand("smallball", "ball survival vs spectral prediction");
  add_run_flags(s_smallball, c_smallball);
  double sb_eps = 0.0;
  std::vector<double> sb_ts;
  s_smallball->add_option("--eps", sb_eps, "ball radius")->required();
  s_smallball->add_option("--times", sb_ts, "survival horizons (defaults to the spec t)");

  auto* s_crosscheck = app.add_subcommand("crosscheck", "fixed-noise run vs finite differences");
  add_run_flags(s_crosscheck, c_crosscheck);

  auto* s_holder = app.add_subcommand("holder", "variance slopes of the pathwise functional");
  add_run_flags(s_holder, c_holder);
  std::vector<double> offsets;
  s_holder->add_option("--offsets", offsets, "spatial/temporal displacement ladder");

  auto* s_density = app.add_subcommand("density", "killed density certification");
  add_run_flags(s_density, c_density);

  auto* s_compare = app.add_subcommand("compare", "Brownian comparison bound over a time grid");
  add_run_flags(s_compare, c_compare);

  auto* s_accept = app.add_subcommand("acceptance", "run the conformance criteria");
  fkmc::AcceptanceOptions aopts;
  std::string accept_out = "acceptance_manifest.json";
  s_accept->add_option("--budget-scale", aopts.budget_scale,
                       "scale every Monte Carlo budget; below 1 misses are inconclusive");
  s_accept->add_option("--criterion", aopts.only, "criterion ids to run (default: all)");
  s_accept->add_option("--seed", aopts.seed, "master seed")->capture_default_str();
  s_accept->add_option("--workers", aopts.workers, "worker thread count");
  s_accept->add_option("--out", accept_out, "manifest path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (s_solve->parsed()) return run_solve(c_solve);
    if (s_moments->parsed()) return run_moments(c_moments, k_order, o_k);
    if (s_smallball->parsed()) return run_smallball(c_smallball, sb_eps, sb_ts);
    if (s_crosscheck->parsed()) return run_crosscheck(c_crosscheck);
    if (s_holder->parsed()) return run_holder(c_holder, offsets);
    if (s_density->parsed()) return run_density(c_density);
    if (s_compare->parsed()) return run_compare(c_compare);
    if (s_accept->parsed()) return run_acceptance_cmd(aopts, accept_out);
  } catch (const fkmc::ConfigParse& e) {
    logf("error: %s", e.what());
    return 2;
  } catch (const fkmc::ValidationFailed& e) {
    logf("error: %s", e.what());
    return 2;
  } catch (const fkmc::HurstInvalid& e) {
    logf("error: %s", e.what());
    return 2;
  } catch (const fkmc::DimensionMismatch& e) {
    logf("error: %s", e.what());
    return 2;
  } catch (const fkmc::StartOutsideDomain& e) {
    logf("error: %s", e.what());
    return 2;
  } catch (const fkmc::BallNotInsideDomain& e) {
    logf("error: %s", e.what());
    return 2;
  } catch (const fkmc::Error& e) {
    logf("error: %s", e.what());
    return 3;
  } catch (const std::exception& e) {
    logf("error: %s", e.what());
    return 3;
  }
  return 0;
}
