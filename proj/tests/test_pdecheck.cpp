#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "fkmc/pdecheck.hpp"
#include "helpers.hpp"

using namespace fkmc;

namespace {

constexpr double kPi = std::numbers::pi;

ProblemSpec rect_spec(double lo, double hi, double sigma = 1.0, double b = 0.0) {
  ProblemSpec spec;
  spec.domain = DomainSpec::hyperrectangle({lo}, {hi});
  spec.coeffs = make_constant_coeffs(1, {b}, sigma);
  spec.hurst.h0 = 0.8;
  spec.hurst.h_space = {0.8};
  spec.data_h = constant_data(1.0);
  spec.horizon = 4.0;
  return spec;
}

FDMesh mesh1(int n_time, int cells, double t_max, double theta = 0.5) {
  FDMesh mesh;
  mesh.n_time = n_time;
  mesh.n_cells = {cells};
  mesh.t_max = t_max;
  mesh.theta = theta;
  return mesh;
}

double max_err_final(const FDSolution& sol, const std::function<double(double)>& exact) {
  double err = 0.0;
  const int it = sol.mesh.n_time;
  for (std::size_t i = 0; i < sol.axes[0].size(); ++i) {
    const int idx[1] = {static_cast<int>(i)};
    err = std::max(err, std::abs(sol.node_value(it, idx) - exact(sol.axes[0][i])));
  }
  return err;
}

TensorGrid sheet_grid() {
  return TensorGrid::uniform(1.05, 85, std::vector<std::pair<double, double>>{{-3.0, 3.0}}, 121);
}

}  // namespace

TEST_CASE("constants are exact for the stencil") {
  auto spec = rect_spec(-1.0, 1.0);
  auto sol = fd_solve(spec, constant_data(0.0), mesh1(200, 24, 1.0));
  for (double v : sol.values) CHECK(std::abs(v - 1.0) < 1e-12);
  CHECK(sol.coeffs_autonomous);
  CHECK(sol.theta_used == 0.5);
  CHECK(sol.stability.monotone_ok());

  ProblemSpec spec2;
  spec2.domain = DomainSpec::hyperrectangle({0.0, 0.0}, {1.0, 1.0});
  spec2.coeffs = make_constant_coeffs(2, {0.0, 0.0}, 1.0);
  spec2.hurst.h0 = 0.8;
  spec2.hurst.h_space = {0.8, 0.8};
  spec2.data_h = constant_data(1.0);
  spec2.horizon = 2.0;
  FDMesh mesh;
  mesh.n_time = 30;
  mesh.n_cells = {12, 12};
  mesh.t_max = 0.5;
  auto sol2 = fd_solve(spec2, constant_data(0.0), mesh);
  for (double v : sol2.values) CHECK(std::abs(v - 1.0) < 1e-12);
}

TEST_CASE("constant potential grows exponentially before the boundary is felt") {
  auto spec = rect_spec(-8.0, 8.0);
  auto sol = fd_solve(spec, constant_data(1.0), mesh1(250, 160, 0.25));
  std::vector<double> x{0.0};
  const double got = sol.at(0.25, x);
  CHECK(std::abs(got - std::exp(0.25)) / std::exp(0.25) < 0.005);
  CHECK(sol.coeffs_autonomous);
}

TEST_CASE("time-dependent diffusion takes the per-step assembly path") {
  auto spec = rect_spec(-8.0, 8.0);
  spec.coeffs = make_coeffs(
      [](double, std::span<const double>, std::span<double> o) { o[0] = 0.0; },
      [](double t, std::span<const double>, std::span<double> o) { o[0] = 1.0 + 0.5 * t; },
      1.0, 0.0, 0.5, 1.0);
  auto sol = fd_solve(spec, constant_data(0.8), mesh1(250, 160, 0.25));
  CHECK_FALSE(sol.coeffs_autonomous);
  std::vector<double> x{0.0};
  const double got = sol.at(0.25, x);
  CHECK(std::abs(got - std::exp(0.2)) / std::exp(0.2) < 0.005);
}

TEST_CASE("manufactured solution converges at second order in space") {
  // u* = exp(-t) sin(pi x) solves u_t = (1/2) u_xx + c u on (0,1) with
  // c = pi^2/2 - 1 and zero boundary data
  ProblemSpec spec;
  spec.domain = DomainSpec::hyperrectangle({0.0}, {1.0});
  spec.coeffs = make_constant_coeffs(1, {0.0}, 1.0);
  spec.hurst.h0 = 0.8;
  spec.hurst.h_space = {0.8};
  spec.data_h = [](double, std::span<const double> x) { return std::sin(kPi * x[0]); };
  spec.horizon = 1.0;
  const double c0 = kPi * kPi / 2.0 - 1.0;
  const double t_end = 0.5;

  std::vector<double> errs;
  for (int cells : {16, 32, 64}) {
    auto sol = fd_solve(spec, constant_data(c0), mesh1(cells * cells / 2, cells, t_end));
    errs.push_back(max_err_final(
        sol, [&](double x) { return std::exp(-t_end) * std::sin(kPi * x); }));
  }
  const double o1 = std::log2(errs[0] / errs[1]);
  const double o2 = std::log2(errs[1] / errs[2]);
  CHECK(o1 > 1.6);
  CHECK(o1 < 2.4);
  CHECK(o2 > 1.6);
  CHECK(o2 < 2.4);
}

TEST_CASE("rotated anisotropic diffusion with mixed term converges at second order") {
  // a = R(pi/6) diag(1.4, 0.6) R(pi/6)^T, u* = exp(-t)(1.5 + sin(pi x)sin(pi y)),
  // potential chosen so u* solves the equation; boundary data decays in time
  const double cth = std::cos(kPi / 6.0), sth = std::sin(kPi / 6.0);
  const double s0 = std::sqrt(1.4), s1 = std::sqrt(0.6);
  const double a00 = 1.4 * cth * cth + 0.6 * sth * sth;
  const double a11 = 1.4 * sth * sth + 0.6 * cth * cth;
  const double a01 = (1.4 - 0.6) * cth * sth;

  ProblemSpec spec;
  spec.domain = DomainSpec::hyperrectangle({0.0, 0.0}, {1.0, 1.0});
  spec.coeffs = make_coeffs(
      [](double, std::span<const double>, std::span<double> o) { o[0] = o[1] = 0.0; },
      [=](double, std::span<const double>, std::span<double> o) {
        o[0] = cth * s0;
        o[1] = -sth * s1;
        o[2] = sth * s0;
        o[3] = cth * s1;
      },
      0.6, 0.0, 0.0, 1.0);
  spec.hurst.h0 = 0.8;
  spec.hurst.h_space = {0.8, 0.8};
  spec.data_h = [](double t, std::span<const double> x) {
    return std::exp(-t) * (1.5 + std::sin(kPi * x[0]) * std::sin(kPi * x[1]));
  };
  spec.horizon = 1.0;
  const ScalarField potential = [=](double, std::span<const double> x) {
    const double s = std::sin(kPi * x[0]) * std::sin(kPi * x[1]);
    const double cc = std::cos(kPi * x[0]) * std::cos(kPi * x[1]);
    const double phi = 1.5 + s;
    return (-phi + 0.5 * kPi * kPi * (a00 + a11) * s - a01 * kPi * kPi * cc) / phi;
  };
  const double t_end = 0.25;

  std::vector<double> errs;
  for (int cells : {16, 32}) {
    FDMesh mesh;
    mesh.n_time = cells * cells / 2;
    mesh.n_cells = {cells, cells};
    mesh.t_max = t_end;
    auto sol = fd_solve(spec, potential, mesh);
    CHECK(sol.theta_used == 0.5);  // midpoint scheme genuinely exercised
    CHECK(sol.stability.cross_ratio_max > 0.1);  // the mixed stencil is active
    CHECK(sol.stability.monotone_ok());
    double err = 0.0;
    for (std::size_t i = 0; i < sol.axes[0].size(); ++i)
      for (std::size_t j = 0; j < sol.axes[1].size(); ++j) {
        const int idx[2] = {static_cast<int>(i), static_cast<int>(j)};
        const double exact =
            std::exp(-t_end) *
            (1.5 + std::sin(kPi * sol.axes[0][i]) * std::sin(kPi * sol.axes[1][j]));
        err = std::max(err, std::abs(sol.node_value(mesh.n_time, idx) - exact));
      }
    errs.push_back(err);
  }
  const double order = std::log2(errs[0] / errs[1]);
  CHECK(order > 1.5);
  CHECK(order < 2.5);
}

TEST_CASE("solution is linear in the data") {
  auto base = rect_spec(-1.0, 1.0, 1.0, 0.2);
  const ScalarField c = [](double t, std::span<const double> x) {
    return 0.3 * std::sin(t + x[0]);
  };
  auto s1 = base, s2 = base, s12 = base;
  s1.data_h = [](double, std::span<const double> x) { return 1.0 + 0.2 * x[0] * x[0]; };
  s2.data_h = [](double, std::span<const double> x) { return 0.5 - 0.1 * x[0]; };
  s12.data_h = [](double, std::span<const double> x) {
    return 1.0 + 0.2 * x[0] * x[0] + 0.5 - 0.1 * x[0];
  };
  auto mesh = mesh1(100, 40, 0.8);
  auto u1 = fd_solve(s1, c, mesh), u2 = fd_solve(s2, c, mesh), u12 = fd_solve(s12, c, mesh);
  double gap = 0.0;
  for (std::size_t i = 0; i < u1.values.size(); ++i)
    gap = std::max(gap, std::abs(u12.values[i] - u1.values[i] - u2.values[i]));
  CHECK(gap < 1e-11);
}

TEST_CASE("implicit scheme preserves bounds and positivity for damping potential") {
  auto spec = rect_spec(-1.0, 1.0);
  spec.data_h = [](double, std::span<const double> x) {
    return 1.0 + 0.5 * std::cos(kPi * x[0]);
  };
  auto sol = fd_solve(spec, constant_data(-0.5), mesh1(60, 30, 1.0, 1.0));
  CHECK(sol.theta_used == 1.0);
  CHECK_FALSE(sol.stability.theta_fallback);
  double lo = 1e300, hi = -1e300;
  for (double v : sol.values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(lo > 0.0);
  CHECK(hi <= 1.5 + 1e-12);
}

TEST_CASE("coarse time steps demote the midpoint scheme to implicit") {
  auto spec = rect_spec(-1.0, 1.0);
  auto sol = fd_solve(spec, constant_data(0.0), mesh1(4, 200, 1.0));
  CHECK(sol.stability.theta_fallback);
  CHECK(sol.theta_used == 1.0);
  CHECK(sol.scheme.find("fallback") != std::string::npos);
  for (double v : sol.values) CHECK(std::abs(v - 1.0) < 1e-12);
}

TEST_CASE("stability violations are rejected") {
  auto drifty = rect_spec(-1.0, 1.0, 1.0, 60.0);
  CHECK_THROWS_AS(fd_solve(drifty, constant_data(0.0), mesh1(40, 8, 1.0)), StabilityViolation);

  auto spec = rect_spec(-1.0, 1.0);
  CHECK_THROWS_AS(fd_solve(spec, constant_data(50.0), mesh1(10, 10, 1.0)), StabilityViolation);

  ProblemSpec ball;
  ball.domain = DomainSpec::ball({0.0, 0.0}, 1.0);
  ball.coeffs = make_constant_coeffs(2, {0.0, 0.0}, 1.0);
  ball.hurst.h0 = 0.8;
  ball.hurst.h_space = {0.8, 0.8};
  ball.data_h = constant_data(1.0);
  FDMesh bmesh;
  bmesh.n_time = 10;
  bmesh.n_cells = {10, 10};
  bmesh.t_max = 0.5;
  CHECK_THROWS_AS(fd_solve(ball, constant_data(0.0), bmesh), NonRectangularDomain);

  CHECK_THROWS_AS(fd_solve(spec, constant_data(0.0), mesh1(10, 10, 1.0, 0.3)), DegenerateGrid);
  CHECK_THROWS_AS(fd_solve(spec, constant_data(0.0), mesh1(10, 2, 1.0)), DegenerateGrid);
  CHECK_THROWS_AS(fd_solve(spec, constant_data(0.0), mesh1(10, 10, 9.0)), DegenerateGrid);
}

TEST_CASE("zero-sheet crosscheck reproduces the killed heat content") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  // payoff 1 inside, 0 on the boundary: both solvers then compute the
  // probability of staying inside (-1,1) up to t
  spec.data_h = [](double, std::span<const double> x) {
    return std::abs(x[0]) >= 1.0 - 1e-9 ? 0.0 : 1.0;
  };
  auto grid = sheet_grid();
  SheetSample zero;
  zero.grid = grid;
  zero.hurst = spec.hurst;
  zero.values.assign(grid.node_count(), 0.0);
  MollifierParams m{0.02, 0.2};
  CrosscheckBudget budget;
  budget.n_time = 400;
  budget.cells_per_axis = 96;
  budget.n_paths = 20000;
  budget.n_steps = 200;
  budget.seed = 31;
  budget.workers = 4;
  auto rep = crosscheck(spec, zero, m, {{1.0, {0.0}}}, budget);
  REQUIRE(rep.rows.size() == 1);
  CHECK(rep.rows[0].ok);
  CHECK(rep.violations == 0);
  CHECK(std::abs(rep.rows[0].fd - 0.370833) < 2e-3);
}

TEST_CASE("frozen-sheet crosscheck agrees at three interior points") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  auto sheet = sample_sheet(sheet_grid(), spec.hurst, 4242);
  MollifierParams m{0.02, 0.2};
  CrosscheckBudget budget;
  budget.n_time = 600;
  budget.cells_per_axis = 128;
  budget.n_paths = 12000;
  budget.n_steps = 150;
  budget.seed = 77;
  budget.workers = 4;
  std::vector<std::pair<double, std::vector<double>>> pts{
      {1.0, {-0.3}}, {1.0, {0.0}}, {1.0, {0.4}}};
  auto rep = crosscheck(spec, sheet, m, pts, budget);
  REQUIRE(rep.rows.size() == 3);
  CHECK(rep.violations == 0);
  CHECK(rep.max_rel_gap < 0.05);
  for (const auto& row : rep.rows) {
    CHECK(row.ok);
    CHECK(row.fd > 0.0);
    CHECK(row.fk > 0.0);
  }
}

TEST_CASE("crosscheck gap is stable under mollifier refinement") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  auto sheet = sample_sheet(sheet_grid(), spec.hurst, 4242);
  CrosscheckBudget budget;
  budget.n_time = 500;
  budget.cells_per_axis = 100;
  budget.n_paths = 8000;
  budget.n_steps = 150;
  budget.seed = 78;
  budget.workers = 4;
  std::vector<std::pair<double, std::vector<double>>> pts{{1.0, {0.0}}};
  auto coarse = crosscheck(spec, sheet, MollifierParams{0.02, 0.2}, pts, budget);
  auto fine = crosscheck(spec, sheet, MollifierParams{0.01, 0.1}, pts, budget);
  CHECK(coarse.rows[0].ok);
  CHECK(fine.rows[0].ok);
  CHECK(std::abs(coarse.rows[0].rel_gap - fine.rows[0].rel_gap) < 0.03);
}

TEST_CASE("crosscheck input validation") {
  auto spec = testutil::interval_spec(-1.0, 1.0);
  SheetSample zero;
  zero.grid = sheet_grid();
  zero.hurst = spec.hurst;
  zero.values.assign(zero.grid.node_count(), 0.0);
  MollifierParams m{0.02, 0.2};
  CrosscheckBudget tiny;
  tiny.n_paths = 50;
  CHECK_THROWS_AS(crosscheck(spec, zero, m, {{1.0, {0.0}}}, tiny), InsufficientSamples);
  CrosscheckBudget budget;
  budget.n_paths = 500;
  CHECK_THROWS_AS(crosscheck(spec, zero, m, {}, budget), DegenerateGrid);
  CHECK_THROWS_AS(crosscheck(spec, zero, m, {{1.0, {0.999}}}, budget), StartOutsideDomain);
  CHECK_THROWS_AS(crosscheck(spec, zero, m, {{-0.5, {0.0}}}, budget), DegenerateGrid);
}

TEST_CASE("crosscheck report round-trips through csv") {
  CrosscheckReport rep;
  CrosscheckRow row;
  row.t = 1.0;
  row.x = {0.25};
  row.fd = 0.5;
  row.fk = 0.51;
  row.fk_se = 0.004;
  row.rel_gap = 0.02;
  row.ok = true;
  rep.rows.push_back(row);
  const std::string path = "crosscheck_test_tmp.csv";
  write_crosscheck_csv(rep, path);
  std::ifstream in(path);
  std::string header, line;
  REQUIRE(std::getline(in, header));
  CHECK(header == "t,x0,fd_value,fk_value,rel_gap,mc_se");
  REQUIRE(std::getline(in, line));
  CHECK(line.find("0.51") != std::string::npos);
  in.close();
  std::remove(path.c_str());
}
