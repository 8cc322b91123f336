#pragma once

#include <span>
#include <string>
#include <vector>

#include "fkmc/model.hpp"

namespace fkmc {

// Principal Dirichlet eigenpair of the (autonomous) generator
//     L u = -1/2 sum_ij a_ij(x) d2u/dx_i dx_j - sum_i b_i(x) du/dx_i,
// with a = sigma sigma^T, discretized by second-order centered differences on
// a uniform lattice over the domain's bounding box.  Mixed derivatives use the
// four-point cross stencil (u_{++} + u_{--} - u_{+-} - u_{-+}) / (4 h_i h_j),
// first derivatives the centered two-point stencil, so the scheme is fully
// determined by n_grid and results reproduce bit-for-bit.  Lattice nodes on or
// outside the domain boundary carry Dirichlet rows; for balls this clips the
// boundary to lattice accuracy (first order), which the callers' tolerances
// account for.
struct EigenResult {
  int dim = 0;
  double lambda1 = 0.0;
  std::vector<std::vector<double>> axes;  // lattice node coordinates per axis
  std::vector<double> psi1;  // row-major over the lattice, zero at Dirichlet nodes
  double h_grid = 0.0;       // largest cell width
  double residual = 0.0;     // ||A psi - lambda psi||_2 with ||psi||_2 = 1

  // multilinear interpolation between lattice nodes; zero outside the box
  double psi_at(std::span<const double> x) const;
  // lattice quadrature of psi1 (trapezoid; boundary values vanish)
  double psi_integral() const;
};

// Smallest-eigenvalue pair via inverse power iteration on the sparse LU
// factorization.  psi1 comes back L2-normalized against the lattice measure
// and positive in the interior; a sign/positivity guard rejects convergence
// to anything other than the principal eigenvector.  n_grid counts lattice
// cells per axis.
EigenResult principal_eigenpair(const CoefficientField& coeffs, const DomainSpec& d_sub,
                                int n_grid);

// Domain-geometry sanity report for an eigenpair: lambda1 * R^2 against the
// fixed calibration c_d * (kappa_max + R * b_max), where R is the inradius,
// c_d is the principal eigenvalue of -1/2 Laplacian on the unit ball
// (pi^2/8 in d=1, j_{0,1}^2/2 in d=2, pi^2/2 in d=3) and kappa_max / b_max
// are probed suprema of the diffusion eigenvalues and drift magnitude; plus
// boundedness of psi1 relative to its value at the domain center.
struct EigenBoundsReport {
  double radius = 0.0;
  double kappa_max = 0.0;
  double drift_max = 0.0;
  double lambda_r2 = 0.0;   // lambda1 * R^2
  double c_fit = 0.0;       // calibrated right-hand side for lambda_r2
  double psi_center = 0.0;
  double psi_peak = 0.0;
  double psi_ratio = 0.0;   // psi_peak / psi_center
  double k_fit = 0.0;       // fixed bound for psi_ratio
  bool lambda_ok = false;
  bool psi_ok = false;
  std::vector<std::string> violations;
};

EigenBoundsReport eigen_bounds_check(const EigenResult& r, const DomainSpec& d_sub,
                                     const CoefficientField& coeffs);

// One-term small-ball prediction exp(-lambda1 t) psi1(x) * integral(psi1) for
// the event that the diffusion stays within eps of x up to time t.  The
// eigenpair is solved on the ball around x, which must sit inside the domain.
double smallball_predict(const CoefficientField& coeffs, const DomainSpec& domain,
                         std::span<const double> x, double eps, double t, int n_grid = 200);

}  // namespace fkmc
