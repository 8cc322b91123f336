#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <vector>

#include "fkmc/pathsim.hpp"
#include "fkmc/rng.hpp"
#include "fkmc/stats.hpp"
#include "helpers.hpp"

using namespace fkmc;

namespace {

// survival probability of standard BM started at 0 in (-1, 1) at t = 1,
// from the Dirichlet eigenfunction expansion, truncated far past machine tail
double interval_survival(double t) {
  double s = 0;
  for (int k = 0; k < 40; ++k) {
    const int n = 2 * k + 1;
    const double lam = n * n * M_PI * M_PI / 8.0;
    s += (4.0 / (n * M_PI)) * std::sin(n * M_PI / 2.0) * std::exp(-lam * t);
  }
  return s;
}

double survival_estimate(const ProblemSpec& spec, const PathConfig& base, int n_paths,
                         std::uint64_t master, int workers) {
  PathConfig cfg = base;
  cfg.seed = master;
  auto paths = simulate_replicas(spec, cfg, n_paths, workers);
  int alive = 0;
  for (const auto& p : paths) alive += p.exited() ? 0 : 1;
  return static_cast<double>(alive) / n_paths;
}

}  // namespace

TEST_CASE("config validation") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  PathConfig cfg;
  cfg.n_steps = 10;
  cfg.t_eval = 1.0;
  cfg.x0 = {0.0};
  CHECK_NOTHROW(simulate_path(spec, cfg));

  cfg.n_steps = 0;
  CHECK_THROWS_AS(simulate_path(spec, cfg), DegenerateGrid);
  cfg.n_steps = 10;
  cfg.t_eval = 0.0;
  CHECK_THROWS_AS(simulate_path(spec, cfg), DegenerateGrid);
  cfg.t_eval = 1.0;
  cfg.x0 = {2.0};
  CHECK_THROWS_AS(simulate_path(spec, cfg), StartOutsideDomain);
  cfg.x0 = {1.0};  // boundary is not interior
  CHECK_THROWS_AS(simulate_path(spec, cfg), StartOutsideDomain);
  cfg.x0 = {0.0, 0.0};
  CHECK_THROWS_AS(simulate_path(spec, cfg), DimensionMismatch);
}

TEST_CASE("same seed gives bitwise identical paths") {
  auto spec = testutil::box_spec(2, 3.0);
  PathConfig cfg;
  cfg.n_steps = 200;
  cfg.t_eval = 1.5;
  cfg.x0 = {0.1, -0.2};
  cfg.seed = 777;
  auto a = simulate_path(spec, cfg);
  auto b = simulate_path(spec, cfg);
  REQUIRE(a.n_recorded == b.n_recorded);
  CHECK(a.states == b.states);
  CHECK(a.exit_index == b.exit_index);
  CHECK(a.exit_time == b.exit_time);

  cfg.seed = 778;
  auto c = simulate_path(spec, cfg);
  CHECK(a.states != c.states);
}

TEST_CASE("replica batches are worker-count invariant") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  PathConfig cfg;
  cfg.n_steps = 50;
  cfg.t_eval = 1.0;
  cfg.x0 = {0.0};
  cfg.seed = 2024;
  auto one = simulate_replicas(spec, cfg, 64, 2024, 1);
  auto four = simulate_replicas(spec, cfg, 64, 2024, 4);
  REQUIRE(one.size() == four.size());
  for (size_t j = 0; j < one.size(); ++j) {
    CHECK(one[j].states == four[j].states);
    CHECK(one[j].exit_index == four[j].exit_index);
    CHECK(one[j].seed == derive_seed(2024, j));
  }
}

TEST_CASE("unconstrained diffusion has the right mean square displacement") {
  // huge box: effectively free BM in 2-d, E|X_t - x0|^2 = d t
  auto spec = testutil::box_spec(2, 1000.0);
  PathConfig cfg;
  cfg.n_steps = 64;
  cfg.t_eval = 0.7;
  cfg.x0 = {0.0, 0.0};
  cfg.seed = 15;
  auto paths = simulate_replicas(spec, cfg, 20000, 15, 4);
  MeanVar msd;
  for (const auto& p : paths) {
    auto x = p.end_state();
    msd.add(x[0] * x[0] + x[1] * x[1]);
  }
  CHECK(msd.mean == doctest::Approx(2.0 * 0.7).epsilon(0.03));
}

TEST_CASE("increments pass a KS test against the normal law") {
  auto spec = testutil::box_spec(1, 1000.0);
  PathConfig cfg;
  cfg.n_steps = 400;
  cfg.t_eval = 1.0;
  cfg.x0 = {0.0};
  cfg.seed = 99;
  auto p = simulate_path(spec, cfg);
  const double sdt = std::sqrt(p.dt());
  std::vector<double> z;
  for (size_t i = 0; i + 1 < p.n_recorded; ++i)
    z.push_back((p.state(i + 1)[0] - p.state(i)[0]) / sdt);
  REQUIRE(z.size() == 400);
  CHECK(ks_statistic_standard_normal(z) < ks_critical_1pct(z.size()));
}

TEST_CASE("drift shifts the endpoint mean") {
  auto spec = testutil::box_spec(1, 1000.0);
  spec.coeffs = make_constant_coeffs(1, {0.5}, 1.0);
  PathConfig cfg;
  cfg.n_steps = 50;
  cfg.t_eval = 2.0;
  cfg.x0 = {0.0};
  cfg.seed = 31;
  auto paths = simulate_replicas(spec, cfg, 20000, 31, 4);
  MeanVar m;
  for (const auto& p : paths) m.add(p.end_state()[0]);
  CHECK(m.mean == doctest::Approx(1.0).epsilon(0.03));
}

TEST_CASE("time-dependent coefficients are read on the reversed clock") {
  // sigma(w) = (1 + w) I with t_eval = 1: the step at s uses w = 1 - s, so
  // early steps see sigma near 2 and late steps near 1. Variance of the
  // endpoint is int_0^1 (2 - s)^2 ds = 7/3.
  auto spec = testutil::box_spec(1, 1000.0);
  spec.coeffs.sigma = [](double w, std::span<const double>, std::span<double> out) {
    out[0] = 1.0 + w;
  };
  spec.coeffs.ellipticity = 1.0;
  spec.coeffs.time_holder_const = 1.0;
  PathConfig cfg;
  cfg.n_steps = 128;
  cfg.t_eval = 1.0;
  cfg.x0 = {0.0};
  cfg.seed = 47;
  auto paths = simulate_replicas(spec, cfg, 20000, 47, 4);
  MeanVar v;
  for (const auto& p : paths) v.add(p.end_state()[0] * p.end_state()[0]);
  CHECK(v.mean == doctest::Approx(7.0 / 3.0).epsilon(0.04));
}

TEST_CASE("survival at t = 1 matches the eigenfunction series") {
  const double exact = interval_survival(1.0);
  CHECK(exact == doctest::Approx(0.370833).epsilon(1e-4));  // frozen reference

  auto spec = testutil::interval_spec(-1.0, 1.0);
  PathConfig cfg;
  cfg.n_steps = 200;
  cfg.t_eval = 1.0;
  cfg.x0 = {0.0};
  cfg.exit_detection = ExitDetection::bridge_corrected;
  const double est = survival_estimate(spec, cfg, 40000, 1234, 4);
  // MC se ~ 0.0024; bridge-corrected discretization bias at n=200 is well below
  CHECK(est == doctest::Approx(exact).epsilon(0.025));
}

TEST_CASE("grid-only detection overestimates survival") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  PathConfig cfg;
  cfg.n_steps = 40;
  cfg.t_eval = 1.0;
  cfg.x0 = {0.0};
  cfg.exit_detection = ExitDetection::grid_only;
  const double grid = survival_estimate(spec, cfg, 30000, 555, 4);
  cfg.exit_detection = ExitDetection::bridge_corrected;
  const double bridge = survival_estimate(spec, cfg, 30000, 555, 4);
  const double exact = interval_survival(1.0);
  CHECK(grid > bridge);
  CHECK(std::abs(bridge - exact) < std::abs(grid - exact));
}

TEST_CASE("bridge detection kills pathwise at least as often as grid detection") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  PathConfig cfg;
  cfg.n_steps = 60;
  cfg.t_eval = 1.0;
  cfg.x0 = {0.3};
  for (int rep = 0; rep < 200; ++rep) {
    cfg.seed = derive_seed(888, rep);
    cfg.exit_detection = ExitDetection::grid_only;
    auto g = simulate_path(spec, cfg);
    cfg.exit_detection = ExitDetection::bridge_corrected;
    auto b = simulate_path(spec, cfg);
    if (g.exited()) {
      CHECK(b.exited());
      CHECK(*b.exit_time <= *g.exit_time + 1e-15);
    }
  }
}

TEST_CASE("survival is monotone in the domain, path by path") {
  auto small = testutil::interval_spec(-1.0, 1.0);
  auto large = testutil::interval_spec(-2.0, 2.0);
  PathConfig cfg;
  cfg.n_steps = 80;
  cfg.t_eval = 1.0;
  cfg.x0 = {0.0};
  for (int rep = 0; rep < 300; ++rep) {
    cfg.seed = derive_seed(4321, rep);
    auto ps = simulate_path(small, cfg);
    auto pl = simulate_path(large, cfg);
    if (pl.exited()) {
      // exiting the big interval forces exiting the small one no later
      CHECK(ps.exited());
      CHECK(*ps.exit_time <= *pl.exit_time + 1e-15);
    }
  }
}

TEST_CASE("survival curve is nonincreasing in time") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  PathConfig cfg;
  cfg.n_steps = 120;
  cfg.x0 = {0.0};
  double prev = 1.0;
  for (double t : {0.25, 0.5, 1.0, 2.0}) {
    cfg.t_eval = t;
    const double s = survival_estimate(spec, cfg, 20000, 777, 4) ;
    CHECK(s <= prev + 0.01);  // MC slack
    prev = s;
  }
}

TEST_CASE("exit bookkeeping lands on the boundary") {
  auto spec = testutil::box_spec(2, 1.0);
  PathConfig cfg;
  cfg.n_steps = 64;
  cfg.t_eval = 4.0;  // long horizon: nearly every path exits
  cfg.x0 = {0.0, 0.0};
  int exits = 0;
  for (int rep = 0; rep < 200; ++rep) {
    cfg.seed = derive_seed(2468, rep);
    auto p = simulate_path(spec, cfg);
    if (!p.exited()) continue;
    ++exits;
    CHECK(spec.domain.classify(p.exit_point) == Containment::boundary);
    CHECK(*p.exit_time > 0.0);
    CHECK(*p.exit_time <= cfg.t_eval + 1e-15);
    CHECK(*p.exit_index >= 1);
    CHECK(p.n_recorded == *p.exit_index + 1);
    // recorded interior states really are interior
    for (int i = 0; i + 1 < p.n_recorded; ++i)
      CHECK(spec.domain.classify(p.state(i)) != Containment::exterior);
  }
  CHECK(exits > 150);
}

TEST_CASE("ball domains kill on the sphere") {
  auto spec = testutil::box_spec(2, 1.0);
  spec.domain = DomainSpec::ball(std::vector<double>{0.0, 0.0}, 1.0);
  PathConfig cfg;
  cfg.n_steps = 64;
  cfg.t_eval = 4.0;
  cfg.x0 = {0.0, 0.0};
  for (int rep = 0; rep < 100; ++rep) {
    cfg.seed = derive_seed(1357, rep);
    auto p = simulate_path(spec, cfg);
    if (!p.exited()) continue;
    const double r = std::hypot(p.exit_point[0], p.exit_point[1]);
    CHECK(r == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("coupled pairs share driving noise") {
  auto spec = testutil::box_spec(1, 200.0);
  CoupledEndpoint a{1.0, 4.0, {0.0}};
  CoupledEndpoint b{1.0, 4.0, {0.0}};
  auto pr = simulate_coupled_pair(spec, a, b, 1.0 / 16, 99, ExitDetection::bridge_corrected);
  CHECK(pr.first.states == pr.second.states);

  // constant coefficients: the reversed clock argument is irrelevant, so a
  // shifted time parameter still reproduces the identical trajectory
  CoupledEndpoint c{1.25, 4.0, {0.0}};
  auto pr2 = simulate_coupled_pair(spec, a, c, 1.0 / 16, 99, ExitDetection::bridge_corrected);
  CHECK(pr.first.states == pr2.second.states);

  // a genuinely time-dependent diffusion must break the identity
  auto spec_t = testutil::box_spec(1, 200.0);
  spec_t.coeffs.sigma = [](double w, std::span<const double>, std::span<double> out) {
    out[0] = 1.0 + 0.5 * w;
  };
  spec_t.coeffs.ellipticity = 1.0;
  auto pr3 = simulate_coupled_pair(spec_t, a, c, 1.0 / 16, 99, ExitDetection::bridge_corrected);
  CHECK(pr3.first.states != pr3.second.states);

  // horizons that do not fit the step size are rejected
  CHECK_THROWS_AS(simulate_coupled_pair(spec, a, c, 0.3, 99, ExitDetection::bridge_corrected),
                  DegenerateGrid);
}

TEST_CASE("coupled endpoint gap scales with the horizon offset") {
  // same increments, horizons t and t + off: the gap is the extra walk over
  // (t, t + off], so E gap^2 = off exactly for unit diffusion
  auto spec = testutil::box_spec(1, 1000.0);
  std::vector<double> offs{0.1, 0.2, 0.4};
  std::vector<double> lo, lg;
  for (double off : offs) {
    CoupledEndpoint a{1.0, 1.0, {0.0}};
    CoupledEndpoint b{1.0 + off, 1.0 + off, {0.0}};
    MeanVar gap;
    for (int rep = 0; rep < 4000; ++rep) {
      auto pr = simulate_coupled_pair(spec, a, b, 0.025, derive_seed(10101, rep),
                                      ExitDetection::bridge_corrected);
      const double d = pr.first.end_state()[0] - pr.second.end_state()[0];
      gap.add(d * d);
    }
    lo.push_back(std::log(off));
    lg.push_back(std::log(gap.mean));
  }
  auto fit = linear_fit(lo, lg);
  CHECK(fit.slope == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("path csv export round-trips the header and row count") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  PathConfig cfg;
  cfg.n_steps = 16;
  cfg.t_eval = 0.5;
  cfg.x0 = {0.0};
  cfg.seed = 5;
  auto paths = simulate_replicas(spec, cfg, 3, 5, 1);
  const char* fname = "paths_test_out.csv";
  write_paths_csv(fname, paths);
  std::FILE* f = std::fopen(fname, "r");
  REQUIRE(f != nullptr);
  char line[512];
  REQUIRE(std::fgets(line, sizeof line, f));
  CHECK(std::string(line).find("fkmc-paths v1") != std::string::npos);
  REQUIRE(std::fgets(line, sizeof line, f));
  CHECK(std::string(line).find("columns:") != std::string::npos);
  CHECK(std::string(line).find("path") != std::string::npos);
  size_t rows = 0;
  while (std::fgets(line, sizeof line, f)) ++rows;
  std::fclose(f);
  size_t expect = 0;
  for (const auto& p : paths) expect += p.n_recorded;
  CHECK(rows == expect);
  std::remove(fname);
}

TEST_CASE("empirical density check passes for plain BM on an interval") {
  auto spec = testutil::interval_spec(-4.0, 4.0);
  DensityCheckConfig dc;
  dc.s = 0.5;
  dc.r = 0.25;
  dc.n_bins = 25;
  dc.n_paths = 60000;
  dc.n_steps = 100;
  dc.transition_paths_per_bin = 4000;
  dc.transition_steps = 50;
  dc.seed = 31415;
  dc.workers = 4;
  PathConfig cfg;
  cfg.x0 = {0.0};
  auto rep = empirical_density_check(spec, cfg, dc);
  CHECK(rep.mass_ok);
  CHECK(rep.envelope_ok);
  CHECK(rep.envelope_violations == 0);
  // gaussian envelope calibrated on true BM: kappa2 should sit near 1
  CHECK(rep.kappa2 == doctest::Approx(1.0).epsilon(0.35));
  CHECK(rep.kappa1 > 0.0);
  CHECK(rep.two_step_ok);
  CHECK(rep.two_step_tv < 0.05);
}

TEST_CASE("density envelope widens with the diffusion scale") {
  auto spec = testutil::interval_spec(-12.0, 12.0, 0.8, 0.8, 2.0);
  DensityCheckConfig dc;
  dc.s = 0.5;
  dc.r = 0.25;
  dc.n_bins = 25;
  dc.n_paths = 60000;
  dc.n_steps = 100;
  dc.transition_paths_per_bin = 4000;
  dc.transition_steps = 50;
  dc.seed = 2718;
  dc.workers = 4;
  PathConfig cfg;
  cfg.x0 = {0.0};
  auto rep = empirical_density_check(spec, cfg, dc);
  CHECK(rep.mass_ok);
  CHECK(rep.envelope_ok);
  CHECK(rep.kappa2 == doctest::Approx(4.0).epsilon(0.35));
}

TEST_CASE("density check rejects bad windows and dimensions") {
  auto spec1 = testutil::interval_spec(-4.0, 4.0);
  DensityCheckConfig dc;
  dc.s = 0.5;
  dc.r = 0.333;  // not on the step grid of n_steps = 100
  dc.n_steps = 100;
  PathConfig c1;
  c1.x0 = {0.0};
  CHECK_THROWS_AS(empirical_density_check(spec1, c1, dc), DegenerateGrid);
  dc.r = 0.6;  // after s
  CHECK_THROWS_AS(empirical_density_check(spec1, c1, dc), DegenerateGrid);
  auto spec2 = testutil::box_spec(2, 4.0);
  dc.r = 0.25;
  PathConfig c2;
  c2.x0 = {0.0, 0.0};
  CHECK_THROWS_AS(empirical_density_check(spec2, c2, dc), DimensionMismatch);
}
