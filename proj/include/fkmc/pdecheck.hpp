#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fkmc/model.hpp"
#include "fkmc/noisefield.hpp"

namespace fkmc {

// Deterministic finite-difference oracle for the smoothed problem
//   du/dt = L_t u + c(t,x) u   on a hyperrectangle, Dirichlet data from
// ProblemSpec::data_h (t=0 slice is the initial condition, boundary nodes
// carry data_h(t, x) at every step).  The potential c is any scalar field --
// in the crosscheck below it is a SmoothedNoise sample, frozen for the run.

struct FDMesh {
  int n_time = 400;          // time steps; nodes are n_time + 1
  std::vector<int> n_cells;  // cells per spatial axis; nodes per axis = n+1
  double t_max = 1.0;
  // theta = 1/2 is Crank-Nicolson in the diffusion part, theta = 1 implicit
  // Euler.  The potential term is always explicit at the step midpoint time.
  double theta = 0.5;
};

struct StabilityReport {
  // advective vs diffusive stencil weight, max over sampled nodes of
  // |b_a| h_a / (reduced axis diffusion); <= 1 keeps off-diagonals signed
  double peclet_max = 0.0;
  // mixed-term budget |a_01| * max(h0/h1 / a_00, h1/h0 / a_11); <= 1 keeps
  // the tilted mixed stencil monotone
  double cross_ratio_max = 0.0;
  double parabolic_ratio = 0.0;   // dt * max over nodes of sum_a 2 a_aa / h_a^2
  double potential_dt_max = 0.0;  // dt * max |c| over the frozen potential
  bool theta_fallback = false;    // theta=1/2 request demoted to theta=1
  std::string note;

  // the conditions that both schemes need (violations throw instead)
  bool monotone_ok() const {
    return peclet_max <= 1.0 + 1e-12 && cross_ratio_max <= 1.0 + 1e-12 &&
           potential_dt_max <= 1.0 + 1e-12;
  }
};

struct FDSolution {
  int dim = 0;
  DomainSpec domain;
  FDMesh mesh;
  std::vector<double> times;              // n_time + 1 node times
  std::vector<std::vector<double>> axes;  // node coordinates per axis
  // time-major lattice values including boundary nodes; slice n starts at
  // n * nodes_per_slice()
  std::vector<double> values;
  double theta_used = 0.5;
  bool coeffs_autonomous = true;
  std::string scheme;
  StabilityReport stability;

  std::size_t nodes_per_slice() const;
  double node_value(int it, std::span<const int> idx) const;
  // linear interpolation in time, multilinear in space; OutOfCoverage outside
  // the space-time mesh
  double at(double t, std::span<const double> x) const;
};

FDSolution fd_solve(const ProblemSpec& spec, const ScalarField& potential, const FDMesh& mesh);

// ---- FD vs fixed-noise Monte Carlo cross-validation ----------------------

struct CrosscheckBudget {
  int n_time = 600;
  int cells_per_axis = 128;
  int n_paths = 12000;
  int n_steps = 150;
  std::uint64_t seed = 1;
  int workers = 0;
  double tol = 0.03;  // relative-gap acceptance per point, before MC slack
};

struct CrosscheckRow {
  double t = 0.0;
  std::vector<double> x;
  double fd = 0.0;
  double fk = 0.0;
  double fk_se = 0.0;
  double rel_gap = 0.0;
  bool ok = false;
};

struct CrosscheckReport {
  std::vector<CrosscheckRow> rows;
  double max_rel_gap = 0.0;
  int violations = 0;
  FDMesh mesh;
  std::string scheme;
  std::uint64_t paths_per_point = 0;
};

// Solves the PDE once with the sheet's smoothed sample as potential, then runs
// the fixed-noise path estimator from every requested (t, x) with the very
// same sheet and mollifier.  Both sides discretize the same classical problem,
// so the relative gap is pure truncation + MC noise; a row passes when
// rel_gap <= tol + 3 * fk_se / |fd|.  Points must sit at least three mesh
// cells away from the boundary (per axis) or StartOutsideDomain is thrown.
CrosscheckReport crosscheck(const ProblemSpec& spec, const SheetSample& sheet,
                            const MollifierParams& m,
                            const std::vector<std::pair<double, std::vector<double>>>& points,
                            const CrosscheckBudget& budget = {});

void write_crosscheck_csv(const CrosscheckReport& report, const std::string& path);

}  // namespace fkmc
