#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "fkmc/fk_estimator.hpp"
#include "fkmc/noisefield.hpp"
#include "fkmc/pathsim.hpp"
#include "fkmc/rng.hpp"
#include "fkmc/stats.hpp"
#include "helpers.hpp"

using namespace fkmc;

namespace {

std::vector<double> origin{0.0};

ProblemSpec skorohod(ProblemSpec s) {
  s.product = ProductType::skorohod;
  return s;
}

TensorGrid wide_sheet_grid() {
  return TensorGrid::uniform(1.05, 85, std::vector<std::pair<double, double>>{{-3.0, 3.0}}, 121);
}

}  // namespace

TEST_CASE("geometric-correction first moment with flat data is exactly one") {
  auto spec = skorohod(testutil::interval_spec(-2.0, 2.0));
  SolveOptions opts;
  opts.n_steps = 100;
  auto est = solve_point_conditional(spec, 1.0, origin, 2000, 42, opts);
  CHECK(est.value == 1.0);
  CHECK(est.std_error == 0.0);
  CHECK(est.n_paths == 2000);
  CHECK(est.product == ProductType::skorohod);
}

TEST_CASE("exponential-product first moment with flat data exceeds one") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  SolveOptions opts;
  opts.n_steps = 100;
  auto est = solve_point_conditional(spec, 1.0, origin, 3000, 42, opts);
  // every path weight is exp(half a nonnegative energy) >= 1
  CHECK(est.value > 1.0);
  CHECK(est.std_error > 0.0);
  CHECK(est.median_of_means > 1.0);
}

TEST_CASE("short-horizon estimates recover the initial datum") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  spec.data_h = [](double, std::span<const double> x) { return 1.0 + 0.5 * x[0] * x[0]; };
  std::vector<double> x{0.3};
  const double fx = 1.0 + 0.5 * 0.09;
  SolveOptions opts;
  opts.n_steps = 8;
  for (auto product : {ProductType::stratonovich, ProductType::skorohod}) {
    spec.product = product;
    auto est = solve_point_conditional(spec, 1e-4, x, 1500, 7, opts);
    CHECK(std::abs(est.value - fx) / fx < 0.01);
  }
}

TEST_CASE("estimates are reproducible and seed sensitive") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  SolveOptions opts;
  opts.n_steps = 60;
  auto a = solve_point_conditional(spec, 0.5, origin, 800, 11, opts);
  auto b = solve_point_conditional(spec, 0.5, origin, 800, 11, opts);
  CHECK(a.value == b.value);
  CHECK(a.std_error == b.std_error);
  CHECK(a.config_digest == b.config_digest);
  auto c = solve_point_conditional(spec, 0.5, origin, 800, 12, opts);
  CHECK(c.value != a.value);
  CHECK(c.config_digest != a.config_digest);

  SolveOptions w1 = opts, w4 = opts;
  w1.workers = 1;
  w4.workers = 4;
  auto p1 = solve_point_conditional(spec, 0.5, origin, 800, 11, w1);
  auto p4 = solve_point_conditional(spec, 0.5, origin, 800, 11, w4);
  CHECK(p1.value == p4.value);
  CHECK(p1.std_error == p4.std_error);
}

TEST_CASE("split runs merge exactly into the long run") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  SolveOptions opts;
  opts.n_steps = 50;
  auto whole = solve_point_conditional(spec, 0.5, origin, 1200, 5, opts);
  SolveOptions second = opts;
  second.path_offset = 600;
  auto lo = solve_point_conditional(spec, 0.5, origin, 600, 5, opts);
  auto hi = solve_point_conditional(spec, 0.5, origin, 600, 5, second);
  auto merged = merge(lo, hi);
  CHECK(merged.n_paths == 1200);
  CHECK(merged.value == doctest::Approx(whole.value).epsilon(1e-14));
  CHECK(merged.std_error == doctest::Approx(whole.std_error).epsilon(1e-12));

  auto k2 = moment_estimate(spec, 0.5, origin, 2, 100, 5, opts);
  CHECK_THROWS_AS(merge(whole, k2), GridMismatch);
}

TEST_CASE("replica order one reproduces the conditional point estimator") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  SolveOptions opts;
  opts.n_steps = 80;
  auto cond = solve_point_conditional(spec, 1.0, origin, 600, 77, opts);
  auto rep1 = moment_estimate(spec, 1.0, origin, 1, 600, 77, opts);
  CHECK(rep1.value == cond.value);
  CHECK(rep1.std_error == cond.std_error);
  CHECK(rep1.k == 1);

  // flat data in Wick mode: the interaction sum is empty
  auto spec_sk = skorohod(testutil::interval_spec(-2.0, 2.0));
  auto one = moment_estimate(spec_sk, 1.0, origin, 1, 400, 3, opts);
  CHECK(one.value == 1.0);
  CHECK(one.std_error == 0.0);
}

TEST_CASE("second moment dominates the squared first moment") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  SolveOptions opts;
  opts.n_steps = 100;
  auto m1 = moment_estimate(spec, 1.0, origin, 1, 2500, 19, opts);
  auto m2 = moment_estimate(spec, 1.0, origin, 2, 2500, 20, opts);
  const double lhs = m2.value;
  const double rhs = m1.value * m1.value;
  const double joint_se =
      std::sqrt(m2.std_error * m2.std_error +
                4.0 * m1.value * m1.value * m1.std_error * m1.std_error);
  CHECK(lhs >= rhs - 3.0 * joint_se);
  CHECK(m2.value > 0.0);
  CHECK(m2.median_of_means > 0.0);
  CHECK(m2.log_se > 0.0);
}

TEST_CASE("first moment grows with the horizon") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  SolveOptions opts;
  opts.n_steps = 100;
  auto a = solve_point_conditional(spec, 0.25, origin, 4000, 123, opts);
  auto b = solve_point_conditional(spec, 0.5, origin, 4000, 124, opts);
  auto c = solve_point_conditional(spec, 1.0, origin, 4000, 125, opts);
  auto se = [](const FKEstimate& u, const FKEstimate& v) {
    return 3.0 * std::sqrt(u.std_error * u.std_error + v.std_error * v.std_error);
  };
  CHECK(b.value >= a.value - se(a, b));
  CHECK(c.value >= b.value - se(b, c));
  CHECK(a.value > 0.0);
}

TEST_CASE("fixed zero sheet reduces to the killed mean") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  auto grid = wide_sheet_grid();
  SheetSample zero;
  zero.grid = grid;
  zero.hurst = spec.hurst;
  zero.values.assign(grid.node_count(), 0.0);
  MollifierParams m{0.01, 0.2};
  SolveOptions opts;
  opts.n_steps = 50;

  auto est = solve_point_fixed_noise(spec, 1.0, origin, zero, m, 1500, 66, opts);
  CHECK(est.value == 1.0);  // flat data, unit weights
  CHECK(est.std_error == 0.0);

  // non-flat data: must coincide bitwise with the direct killed-path average
  spec.data_h = [](double, std::span<const double> x) { return 2.0 + x[0]; };
  auto est2 = solve_point_fixed_noise(spec, 1.0, origin, zero, m, 1500, 66, opts);
  PathConfig cfg;
  cfg.n_steps = 50;
  cfg.t_eval = 1.0;
  cfg.x0 = origin;
  auto paths = simulate_replicas(spec, cfg, 1500, 66, 4);
  MeanVar mv;
  for (const auto& p : paths) mv.add(spec.data_h(p.clipped_time(), p.end_state()));
  CHECK(est2.value == doctest::Approx(mv.mean).epsilon(1e-15));
}

TEST_CASE("fixed-noise estimates are monotone in the data") {
  auto spec = testutil::interval_spec(-2.0, 2.0);
  auto grid = wide_sheet_grid();
  auto sheet = sample_sheet(grid, spec.hurst, 9001);
  MollifierParams m{0.01, 0.2};
  SolveOptions opts;
  opts.n_steps = 50;

  auto lo_spec = spec, hi_spec = spec;
  lo_spec.data_h = [](double, std::span<const double> x) { return 1.0 + 0.1 * x[0] * x[0]; };
  hi_spec.data_h = [](double, std::span<const double> x) { return 1.3 + 0.1 * x[0] * x[0]; };
  auto lo = solve_point_fixed_noise(lo_spec, 1.0, origin, sheet, m, 800, 31, opts);
  auto hi = solve_point_fixed_noise(hi_spec, 1.0, origin, sheet, m, 800, 31, opts);
  CHECK(lo.value < hi.value);
  CHECK(lo.value > 0.0);
  CHECK(lo.mode == EstimatorMode::pathwise_fixed_noise);
}

TEST_CASE("sheet-averaged fixed-noise estimates match the lognormal identity") {
  // Conditioned on the driving paths, each exponent is a centered Gaussian in
  // the sheet with variance given by the lattice contraction, so averaging
  // the fixed-noise estimate over independent sheets must reproduce the
  // killed mean weighted by exp(variance / 2) on the very same paths.
  auto spec = testutil::interval_spec(-2.0, 2.0, 0.8, 0.8);
  auto grid = wide_sheet_grid();
  MollifierParams m{0.01, 0.2};
  SolveOptions opts;
  opts.n_steps = 50;
  opts.workers = 4;
  const int n_paths = 400;

  PathConfig cfg;
  cfg.n_steps = 50;
  cfg.t_eval = 1.0;
  cfg.x0 = origin;
  auto paths = simulate_replicas(spec, cfg, n_paths, 17, 4);
  MeanVar target;
  for (const auto& p : paths)
    target.add(std::exp(0.5 * conditional_variance_exact(p, grid, spec.hurst, m, 1.0)));

  const int n_sheets = 40;
  MeanVar across;
  for (int s = 0; s < n_sheets; ++s) {
    auto sheet = sample_sheet(grid, spec.hurst, derive_seed(505, s));
    across.add(solve_point_fixed_noise(spec, 1.0, origin, sheet, m, n_paths, 17, opts).value);
  }
  CHECK(std::abs(across.mean - target.mean) < 4.0 * across.std_error());
}

TEST_CASE("estimator input validation") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  std::vector<double> outside{1.5};
  CHECK_THROWS_AS(solve_point_conditional(spec, 1.0, outside, 100, 1), StartOutsideDomain);
  CHECK_THROWS_AS(solve_point_conditional(spec, 0.0, origin, 100, 1), DegenerateGrid);
  CHECK_THROWS_AS(solve_point_conditional(spec, 9.0, origin, 100, 1), DegenerateGrid);
  CHECK_THROWS_AS(solve_point_conditional(spec, 1.0, origin, 0, 1), InsufficientSamples);
  CHECK_THROWS_AS(moment_estimate(spec, 1.0, origin, 0, 100, 1), InsufficientSamples);
}

TEST_CASE("near-boundary estimates absorb into the boundary datum") {
  auto spec = skorohod(testutil::interval_spec(-1.0, 1.0));
  spec.data_h = [](double, std::span<const double> x) {
    return 3.0 + 2.0 * (1.0 - std::abs(x[0]));
  };
  std::vector<double> x{0.99};
  SolveOptions opts;
  std::vector<double> gap;
  for (int steps : {16, 64, 256}) {
    opts.n_steps = steps;
    gap.push_back(solve_point_conditional(spec, 1.0, x, 20000, 808, opts).value - 3.0);
  }
  CHECK(gap[0] > 0.0);  // unresolved exits leave interior mass behind
  CHECK(gap[1] < gap[0]);
  CHECK(gap[2] < gap[1]);
  CHECK(gap[2] < 0.01);
}

TEST_CASE("brownian functional comparison is an equality for plain diffusion") {
  auto spec = testutil::interval_spec(-6.0, 6.0, 0.8, 0.8);
  std::vector<double> grid{0.2, 0.4, 0.6, 0.8, 1.0};
  SolveOptions opts;
  opts.n_steps = 100;
  opts.workers = 4;
  auto rep = comparison_check(spec, grid, 30000, 99, opts, std::make_pair(1.0, 1.0));
  CHECK(rep.rows.size() == 10);
  CHECK(rep.violations == 0);
  for (const auto& row : rep.rows) {
    CHECK(row.ok);
    CHECK(std::abs(row.lhs - row.rhs) < 4.0 * row.lhs_se);  // genuine equality both ways
  }
}

TEST_CASE("diffusion scale folds into the comparison clock") {
  auto spec = testutil::interval_spec(-12.0, 12.0, 0.8, 0.8, 2.0);
  std::vector<double> grid{0.25, 0.5, 1.0};
  SolveOptions opts;
  opts.n_steps = 80;
  opts.workers = 4;
  auto rep = comparison_check(spec, grid, 30000, 100, opts, std::make_pair(1.0, 4.0));
  CHECK(rep.violations == 0);
  for (const auto& row : rep.rows)
    CHECK(std::abs(row.lhs - row.rhs) < 4.0 * row.lhs_se);
}

TEST_CASE("fitted density constants cover the drifted diffusion") {
  auto spec = testutil::interval_spec(-6.0, 6.0, 0.8, 0.8);
  spec.coeffs.drift = [](double, std::span<const double> x, std::span<double> o) {
    o[0] = -0.4 * x[0];
  };
  std::vector<double> grid{0.25, 0.5, 1.0};
  SolveOptions opts;
  opts.n_steps = 80;
  opts.workers = 4;
  auto rep = comparison_check(spec, grid, 20000, 101, opts);
  CHECK(rep.kappa1 > 0.0);
  CHECK(rep.kappa2 > 0.0);
  CHECK(rep.violations == 0);
}

TEST_CASE("comparison check rejects heavy killing and misaligned grids") {
  auto tight = testutil::interval_spec(-0.5, 0.5);
  std::vector<double> grid{0.5, 1.0};
  SolveOptions opts;
  opts.n_steps = 50;
  CHECK_THROWS_AS(comparison_check(tight, grid, 4000, 9, opts, std::make_pair(1.0, 1.0)),
                  InsufficientSamples);
  auto wide = testutil::interval_spec(-6.0, 6.0);
  std::vector<double> off{0.3333, 1.0};
  CHECK_THROWS_AS(comparison_check(wide, off, 4000, 9, opts, std::make_pair(1.0, 1.0)),
                  DegenerateGrid);
}
