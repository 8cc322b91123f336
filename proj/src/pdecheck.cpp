#include "fkmc/pdecheck.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>
#include <tuple>
#include <vector>

#include "fkmc/fk_estimator.hpp"
#include "fkmc/rng.hpp"

namespace fkmc {
namespace {

constexpr std::size_t kMaxStoredValues = std::size_t{1} << 25;

struct Lattice {
  int dim = 0;
  std::vector<int> n_nodes;               // nodes per axis
  std::vector<double> lo, h;
  std::vector<std::vector<double>> axes;  // node coordinates
  std::size_t slice = 1;

  std::size_t flat(std::span<const int> idx) const {
    std::size_t f = 0;
    for (int a = 0; a < dim; ++a) f = f * static_cast<std::size_t>(n_nodes[a]) + idx[a];
    return f;
  }
  bool boundary_node(std::span<const int> idx) const {
    for (int a = 0; a < dim; ++a)
      if (idx[a] == 0 || idx[a] == n_nodes[a] - 1) return true;
    return false;
  }
  void coords(std::span<const int> idx, std::span<double> out) const {
    for (int a = 0; a < dim; ++a) out[a] = axes[a][idx[a]];
  }
};

Lattice build_lattice(const DomainSpec& dom, const FDMesh& mesh) {
  Lattice lat;
  lat.dim = dom.dim;
  lat.n_nodes.resize(lat.dim);
  lat.lo = dom.lo;
  lat.h.resize(lat.dim);
  lat.axes.resize(lat.dim);
  for (int a = 0; a < lat.dim; ++a) {
    const int cells = mesh.n_cells[a];
    lat.n_nodes[a] = cells + 1;
    lat.h[a] = (dom.hi[a] - dom.lo[a]) / cells;
    lat.axes[a].resize(cells + 1);
    for (int i = 0; i <= cells; ++i) lat.axes[a][i] = dom.lo[a] + i * lat.h[a];
    lat.axes[a].back() = dom.hi[a];
    lat.slice *= static_cast<std::size_t>(cells + 1);
  }
  return lat;
}

// advance a multi-index over interior nodes, last axis fastest
bool advance_interior(std::vector<int>& idx, const Lattice& lat) {
  for (int a = lat.dim - 1; a >= 0; --a) {
    if (++idx[a] <= lat.n_nodes[a] - 2) return true;
    idx[a] = 1;
  }
  return false;
}

void eval_coeffs(const CoefficientField& coeffs, double t, std::span<const double> x, int dim,
                 std::vector<double>& a, std::vector<double>& b, std::vector<double>& sig) {
  sig.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  b.assign(dim, 0.0);
  coeffs.sigma(t, x, sig);
  coeffs.drift(t, x, b);
  a.assign(static_cast<std::size_t>(dim) * dim, 0.0);
  for (int r = 0; r < dim; ++r)
    for (int c = 0; c < dim; ++c) {
      double acc = 0.0;
      for (int k = 0; k < dim; ++k) acc += sig[r * dim + k] * sig[c * dim + k];
      a[r * dim + c] = acc;
    }
  for (double v : a)
    if (!std::isfinite(v)) throw CoefficientEvaluationFailure("diffusion matrix not finite");
  for (double v : b)
    if (!std::isfinite(v)) throw CoefficientEvaluationFailure("drift not finite");
}

bool probe_autonomous(const CoefficientField& coeffs, const DomainSpec& dom, double t_max) {
  const int dim = dom.dim;
  std::vector<std::vector<double>> points;
  std::vector<double> center(dim), shifted(dim), pulled(dim);
  for (int a = 0; a < dim; ++a) {
    const double mid = 0.5 * (dom.lo[a] + dom.hi[a]);
    const double half = 0.5 * (dom.hi[a] - dom.lo[a]);
    center[a] = mid;
    shifted[a] = mid + 0.31 * half;
    pulled[a] = mid - 0.17 * half;
  }
  points = {center, shifted, pulled};
  std::vector<double> a0, b0, s0, a1, b1, s1;
  for (const auto& p : points) {
    eval_coeffs(coeffs, 0.0, p, dim, a0, b0, s0);
    for (double t : {0.37 * t_max, 0.91 * t_max}) {
      eval_coeffs(coeffs, t, p, dim, a1, b1, s1);
      for (std::size_t k = 0; k < a0.size(); ++k)
        if (std::abs(a1[k] - a0[k]) > 1e-13 * (1.0 + std::abs(a0[k]))) return false;
      for (std::size_t k = 0; k < b0.size(); ++k)
        if (std::abs(b1[k] - b0[k]) > 1e-13 * (1.0 + std::abs(b0[k]))) return false;
    }
  }
  return true;
}

struct Unknowns {
  std::vector<int> node_to_unknown;        // -1 at boundary nodes
  std::vector<std::size_t> unknown_node;   // lattice ids of the unknowns
  int m = 0;
};

Unknowns map_unknowns(const Lattice& lat) {
  Unknowns u;
  u.node_to_unknown.assign(lat.slice, -1);
  std::vector<int> idx(lat.dim, 1);
  do {
    const std::size_t node = lat.flat(idx);
    u.node_to_unknown[node] = u.m++;
    u.unknown_node.push_back(node);
  } while (advance_interior(idx, lat));
  return u;
}

// Interior stencil of the generator L = (1/2) sum a_ij d_ij + sum b_i d_i.
// The mixed term uses the tilted (monotone) form: the |a_01| part is carried
// by a second difference along the diagonal matching sign(a_01), with the
// axis diffusion reduced accordingly, so all off-diagonal weights stay
// nonnegative whenever the stability scan passed.
struct Assembled {
  Eigen::SparseMatrix<double> aii;
  std::vector<std::tuple<int, std::size_t, double>> aib;  // row, lattice node, coeff
  // implicit matrix M = I - theta dt A
  std::vector<double> msub, mdia, msup;  // d=1 tridiagonal
  std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu;  // d=2
  Eigen::SparseMatrix<double> mimp;
};

Assembled assemble(const CoefficientField& coeffs, const Lattice& lat, const Unknowns& un,
                   double t_mid, double theta_dt) {
  const int dim = lat.dim;
  Assembled out;
  std::vector<Eigen::Triplet<double>> trips, mtrips;
  if (dim == 1) {
    out.msub.assign(un.m, 0.0);
    out.mdia.assign(un.m, 1.0);
    out.msup.assign(un.m, 0.0);
  }
  std::vector<double> a, b, sig, x(dim);
  std::vector<int> idx(dim, 1), nb(dim);

  auto emit = [&](int row, std::span<const int> nidx, double coeff) {
    const std::size_t node = lat.flat(nidx);
    const int col = un.node_to_unknown[node];
    if (col >= 0) {
      trips.emplace_back(row, col, coeff);
      mtrips.emplace_back(row, col, -theta_dt * coeff);
      if (dim == 1) {
        if (col == row - 1) out.msub[row] = -theta_dt * coeff;
        if (col == row + 1) out.msup[row] = -theta_dt * coeff;
        if (col == row) out.mdia[row] = 1.0 - theta_dt * coeff;
      }
    } else {
      out.aib.emplace_back(row, node, coeff);
    }
  };

  do {
    const int row = un.node_to_unknown[lat.flat(idx)];
    lat.coords(idx, x);
    eval_coeffs(coeffs, t_mid, x, dim, a, b, sig);
    if (dim == 1) {
      const double h0 = lat.h[0], a00 = a[0], b0 = b[0];
      nb = idx;
      nb[0] = idx[0] - 1;
      emit(row, nb, a00 / (2 * h0 * h0) - b0 / (2 * h0));
      nb[0] = idx[0] + 1;
      emit(row, nb, a00 / (2 * h0 * h0) + b0 / (2 * h0));
      emit(row, idx, -a00 / (h0 * h0));
    } else {
      const double h0 = lat.h[0], h1 = lat.h[1];
      const double a00 = a[0], a11 = a[3], a01 = a[1];
      const double m01 = std::abs(a01);
      const double r00 = a00 - m01 * h0 / h1;
      const double r11 = a11 - m01 * h1 / h0;
      nb = idx;
      nb[0] = idx[0] - 1;
      emit(row, nb, r00 / (2 * h0 * h0) - b[0] / (2 * h0));
      nb[0] = idx[0] + 1;
      emit(row, nb, r00 / (2 * h0 * h0) + b[0] / (2 * h0));
      nb = idx;
      nb[1] = idx[1] - 1;
      emit(row, nb, r11 / (2 * h1 * h1) - b[1] / (2 * h1));
      nb[1] = idx[1] + 1;
      emit(row, nb, r11 / (2 * h1 * h1) + b[1] / (2 * h1));
      const int d1 = a01 >= 0.0 ? 1 : -1;  // diagonal direction of the tilt
      if (m01 > 0.0) {
        const double w = m01 / (2 * h0 * h1);
        nb = idx;
        nb[0] = idx[0] + 1;
        nb[1] = idx[1] + d1;
        emit(row, nb, w);
        nb[0] = idx[0] - 1;
        nb[1] = idx[1] - d1;
        emit(row, nb, w);
      }
      emit(row, idx, -(r00 / (h0 * h0) + r11 / (h1 * h1) + m01 / (h0 * h1)));
    }
  } while (advance_interior(idx, lat));

  out.aii.resize(un.m, un.m);
  out.aii.setFromTriplets(trips.begin(), trips.end());
  if (dim == 2) {
    for (int r = 0; r < un.m; ++r) mtrips.emplace_back(r, r, 1.0);
    out.mimp.resize(un.m, un.m);
    out.mimp.setFromTriplets(mtrips.begin(), mtrips.end());
    out.lu = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
    out.lu->compute(out.mimp);
    if (out.lu->info() != Eigen::Success)
      throw FactorizationFailure("implicit step matrix is singular");
  }
  return out;
}

void thomas_solve(const std::vector<double>& sub, const std::vector<double>& dia,
                  const std::vector<double>& sup, Eigen::VectorXd& rhs,
                  std::vector<double>& cp) {
  const int m = static_cast<int>(dia.size());
  cp.assign(m, 0.0);
  double piv = dia[0];
  if (std::abs(piv) < 1e-300) throw FactorizationFailure("tridiagonal pivot vanished");
  cp[0] = sup[0] / piv;
  rhs[0] /= piv;
  for (int i = 1; i < m; ++i) {
    piv = dia[i] - sub[i] * cp[i - 1];
    if (std::abs(piv) < 1e-300) throw FactorizationFailure("tridiagonal pivot vanished");
    cp[i] = sup[i] / piv;
    rhs[i] = (rhs[i] - sub[i] * rhs[i - 1]) / piv;
  }
  for (int i = m - 2; i >= 0; --i) rhs[i] -= cp[i] * rhs[i + 1];
}

void scan_stability(const CoefficientField& coeffs, const Lattice& lat, double t_max,
                    int n_time, bool autonomous, StabilityReport& rep) {
  const int dim = lat.dim;
  const double dt = t_max / n_time;
  std::vector<double> sample_times;
  if (autonomous) {
    sample_times.push_back(0.5 * dt);
  } else {
    const int n_samples = std::min(n_time, 33);
    for (int k = 0; k < n_samples; ++k) {
      const int step = static_cast<int>((static_cast<double>(k) / n_samples) * n_time);
      sample_times.push_back((step + 0.5) * dt);
    }
  }
  std::vector<double> a, b, sig, x(dim);
  double parab = 0.0;
  for (double t : sample_times) {
    std::vector<int> idx(dim, 1);
    do {
      lat.coords(idx, x);
      eval_coeffs(coeffs, t, x, dim, a, b, sig);
      if (dim == 1) {
        const double a00 = a[0];
        if (a00 <= 0.0) throw StabilityViolation("diffusion degenerate at a mesh node");
        rep.peclet_max = std::max(rep.peclet_max, std::abs(b[0]) * lat.h[0] / a00);
        parab = std::max(parab, 2 * a00 / (lat.h[0] * lat.h[0]));
      } else {
        const double a00 = a[0], a11 = a[3], m01 = std::abs(a[1]);
        if (a00 <= 0.0 || a11 <= 0.0)
          throw StabilityViolation("diffusion degenerate at a mesh node");
        const double cross =
            std::max(m01 * lat.h[0] / (lat.h[1] * a00), m01 * lat.h[1] / (lat.h[0] * a11));
        rep.cross_ratio_max = std::max(rep.cross_ratio_max, cross);
        const double r00 = a00 - m01 * lat.h[0] / lat.h[1];
        const double r11 = a11 - m01 * lat.h[1] / lat.h[0];
        const double pec0 = std::abs(b[0]) < 1e-300 ? 0.0
                            : r00 <= 0.0 ? std::numeric_limits<double>::infinity()
                                         : std::abs(b[0]) * lat.h[0] / r00;
        const double pec1 = std::abs(b[1]) < 1e-300 ? 0.0
                            : r11 <= 0.0 ? std::numeric_limits<double>::infinity()
                                         : std::abs(b[1]) * lat.h[1] / r11;
        rep.peclet_max = std::max({rep.peclet_max, pec0, pec1});
        parab = std::max(parab, 2 * a00 / (lat.h[0] * lat.h[0]) + 2 * a11 / (lat.h[1] * lat.h[1]));
      }
    } while (advance_interior(idx, lat));
  }
  rep.parabolic_ratio = dt * parab;
}

}  // namespace

std::size_t FDSolution::nodes_per_slice() const {
  std::size_t s = 1;
  for (const auto& ax : axes) s *= ax.size();
  return s;
}

double FDSolution::node_value(int it, std::span<const int> idx) const {
  std::size_t f = 0;
  for (int a = 0; a < dim; ++a) f = f * axes[a].size() + idx[a];
  return values[static_cast<std::size_t>(it) * nodes_per_slice() + f];
}

double FDSolution::at(double t, std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim) throw DimensionMismatch("query point dimension");
  const double t_tol = 1e-9 * (mesh.t_max + 1.0);
  if (t < -t_tol || t > mesh.t_max + t_tol) throw OutOfCoverage("query time outside the mesh");
  const double dt = mesh.t_max / mesh.n_time;
  int n = static_cast<int>(std::floor(std::clamp(t, 0.0, mesh.t_max) / dt));
  n = std::clamp(n, 0, mesh.n_time - 1);
  const double wt = std::clamp((t - n * dt) / dt, 0.0, 1.0);

  std::vector<int> base(dim);
  std::vector<double> wx(dim);
  for (int a = 0; a < dim; ++a) {
    const double lo = axes[a].front(), hi = axes[a].back();
    const double x_tol = 1e-9 * (hi - lo);
    if (x[a] < lo - x_tol || x[a] > hi + x_tol)
      throw OutOfCoverage("query point outside the mesh");
    const double h = axes[a][1] - axes[a][0];
    const double s = std::clamp((x[a] - lo) / h, 0.0, static_cast<double>(axes[a].size() - 1));
    int i = std::min(static_cast<int>(std::floor(s)), static_cast<int>(axes[a].size()) - 2);
    base[a] = i;
    wx[a] = std::clamp(s - i, 0.0, 1.0);
  }
  const std::size_t slice = nodes_per_slice();
  auto corner = [&](int it, unsigned mask) {
    std::size_t f = 0;
    for (int a = 0; a < dim; ++a) f = f * axes[a].size() + base[a] + ((mask >> a) & 1u);
    return values[static_cast<std::size_t>(it) * slice + f];
  };
  double out = 0.0;
  for (unsigned mask = 0; mask < (1u << dim); ++mask) {
    double w = 1.0;
    for (int a = 0; a < dim; ++a) w *= ((mask >> a) & 1u) ? wx[a] : 1.0 - wx[a];
    out += w * ((1.0 - wt) * corner(n, mask) + wt * corner(n + 1, mask));
  }
  return out;
}

FDSolution fd_solve(const ProblemSpec& spec, const ScalarField& potential, const FDMesh& mesh) {
  spec.validate();
  if (spec.domain.kind != DomainSpec::Kind::hyperrectangle)
    throw NonRectangularDomain("finite differences need a hyperrectangle");
  const int dim = spec.domain.dim;
  if (dim < 1 || dim > 2)
    throw NonRectangularDomain("finite differences cover one or two space dimensions");
  if (static_cast<int>(mesh.n_cells.size()) != dim)
    throw DimensionMismatch("mesh axes do not match the domain");
  for (int c : mesh.n_cells)
    if (c < 4) throw DegenerateGrid("need at least four cells per axis");
  if (mesh.n_time < 1) throw DegenerateGrid("need at least one time step");
  if (!(mesh.t_max > 0.0)) throw DegenerateGrid("nonpositive time horizon");
  if (mesh.t_max > spec.horizon * (1.0 + 1e-12))
    throw DegenerateGrid("mesh horizon exceeds the problem horizon");
  if (mesh.theta < 0.5 - 1e-12 || mesh.theta > 1.0 + 1e-12)
    throw DegenerateGrid("theta must lie in [1/2, 1]");

  Lattice lat = build_lattice(spec.domain, mesh);
  const std::size_t n_slices = static_cast<std::size_t>(mesh.n_time) + 1;
  if (n_slices * lat.slice > kMaxStoredValues)
    throw DegenerateGrid("space-time mesh too large to store");
  Unknowns un = map_unknowns(lat);
  if (un.m == 0) throw EmptyDomainMesh("no interior nodes");

  const double dt = mesh.t_max / mesh.n_time;
  const bool autonomous = probe_autonomous(spec.coeffs, spec.domain, mesh.t_max);

  FDSolution sol;
  sol.dim = dim;
  sol.domain = spec.domain;
  sol.mesh = mesh;
  sol.axes = lat.axes;
  sol.coeffs_autonomous = autonomous;

  scan_stability(spec.coeffs, lat, mesh.t_max, mesh.n_time, autonomous, sol.stability);
  if (sol.stability.peclet_max > 1.0 + 1e-12)
    throw StabilityViolation("mesh Peclet number exceeds one; refine the mesh or damp the drift");
  if (sol.stability.cross_ratio_max > 1.0 + 1e-12)
    throw StabilityViolation("mixed derivative too strong for a monotone stencil on this mesh");

  sol.theta_used = mesh.theta;
  if (mesh.theta < 1.0 - 1e-12 && sol.stability.parabolic_ratio > 2.0 + 1e-9) {
    sol.theta_used = 1.0;
    sol.stability.theta_fallback = true;
    sol.stability.note = "parabolic mesh ratio above two; demoted to the implicit scheme";
  }

  // freeze the potential at step-midpoint times over the interior nodes
  std::vector<double> pot(static_cast<std::size_t>(mesh.n_time) * un.m);
  {
    std::vector<double> x(dim);
    std::vector<int> idx(dim);
    double cmax = 0.0;
    for (int n = 0; n < mesh.n_time; ++n) {
      const double tm = (n + 0.5) * dt;
      for (int uix = 0; uix < un.m; ++uix) {
        std::size_t node = un.unknown_node[uix];
        for (int a = dim - 1; a >= 0; --a) {
          idx[a] = static_cast<int>(node % lat.n_nodes[a]);
          node /= lat.n_nodes[a];
        }
        lat.coords(idx, x);
        const double c = potential(tm, x);
        if (!std::isfinite(c)) throw CoefficientEvaluationFailure("potential not finite");
        pot[static_cast<std::size_t>(n) * un.m + uix] = c;
        cmax = std::max(cmax, std::abs(c));
      }
    }
    sol.stability.potential_dt_max = dt * cmax;
    if (sol.stability.potential_dt_max > 1.0 + 1e-12)
      throw StabilityViolation("potential too stiff for the explicit product step");
  }

  // boundary values at a given node time
  std::vector<std::size_t> bnodes;
  {
    std::vector<int> idx(dim, 0);
    // enumerate the full lattice; keep boundary ids
    const std::size_t total = lat.slice;
    for (std::size_t node = 0; node < total; ++node) {
      std::size_t rem = node;
      bool bnd = false;
      for (int a = dim - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(rem % lat.n_nodes[a]);
        rem /= lat.n_nodes[a];
        bnd = bnd || idx[a] == 0 || idx[a] == lat.n_nodes[a] - 1;
      }
      if (bnd) bnodes.push_back(node);
    }
  }
  auto fill_boundary = [&](double t, std::vector<double>& bvals) {
    std::vector<int> idx(dim);
    std::vector<double> x(dim);
    for (std::size_t node : bnodes) {
      std::size_t rem = node;
      for (int a = dim - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(rem % lat.n_nodes[a]);
        rem /= lat.n_nodes[a];
      }
      lat.coords(idx, x);
      const double g = spec.data_h(t, x);
      if (!std::isfinite(g)) throw CoefficientEvaluationFailure("boundary datum not finite");
      bvals[node] = g;
    }
  };

  sol.times.resize(n_slices);
  for (std::size_t n = 0; n < n_slices; ++n) sol.times[n] = n * dt;
  sol.times.back() = mesh.t_max;
  sol.values.assign(n_slices * lat.slice, 0.0);

  // initial slice straight from the data
  {
    std::vector<int> idx(dim);
    std::vector<double> x(dim);
    for (std::size_t node = 0; node < lat.slice; ++node) {
      std::size_t rem = node;
      for (int a = dim - 1; a >= 0; --a) {
        idx[a] = static_cast<int>(rem % lat.n_nodes[a]);
        rem /= lat.n_nodes[a];
      }
      lat.coords(idx, x);
      const double v = spec.data_h(0.0, x);
      if (!std::isfinite(v)) throw CoefficientEvaluationFailure("initial datum not finite");
      sol.values[node] = v;
    }
  }

  const double theta = sol.theta_used;
  Assembled asm_cache;
  if (autonomous) asm_cache = assemble(spec.coeffs, lat, un, 0.5 * dt, theta * dt);

  Eigen::VectorXd u(un.m), w(un.m), rhs(un.m);
  for (int i = 0; i < un.m; ++i) u[i] = sol.values[un.unknown_node[i]];
  std::vector<double> bvals_now(lat.slice, 0.0), bvals_next(lat.slice, 0.0), scratch;
  fill_boundary(0.0, bvals_now);

  for (int n = 0; n < mesh.n_time; ++n) {
    const Assembled& A =
        autonomous ? asm_cache
                   : (asm_cache = assemble(spec.coeffs, lat, un, (n + 0.5) * dt, theta * dt),
                      asm_cache);
    fill_boundary(sol.times[n + 1], bvals_next);

    w = A.aii * u;
    for (const auto& [row, node, coeff] : A.aib) w[row] += coeff * bvals_now[node];
    const double* c = pot.data() + static_cast<std::size_t>(n) * un.m;
    for (int i = 0; i < un.m; ++i)
      rhs[i] = u[i] + dt * (1.0 - theta) * w[i] + dt * c[i] * u[i];
    for (const auto& [row, node, coeff] : A.aib)
      rhs[row] += theta * dt * coeff * bvals_next[node];

    if (dim == 1) {
      thomas_solve(A.msub, A.mdia, A.msup, rhs, scratch);
      u = rhs;
    } else {
      u = A.lu->solve(rhs);
      if (A.lu->info() != Eigen::Success)
        throw FactorizationFailure("implicit step solve failed");
    }

    double* slice_out = sol.values.data() + (static_cast<std::size_t>(n) + 1) * lat.slice;
    for (std::size_t node : bnodes) slice_out[node] = bvals_next[node];
    for (int i = 0; i < un.m; ++i) slice_out[un.unknown_node[i]] = u[i];
    std::swap(bvals_now, bvals_next);
  }

  for (double v : sol.values)
    if (!std::isfinite(v)) throw StabilityViolation("solution lost finiteness while stepping");

  std::ostringstream sch;
  sch << "theta=" << theta << " diffusion-implicit, potential explicit at step midpoints, "
      << (dim == 1 ? "tridiagonal sweeps" : "sparse LU");
  if (!autonomous) sch << ", matrices rebuilt per step";
  if (sol.stability.theta_fallback) sch << " (stability fallback)";
  sol.scheme = sch.str();
  return sol;
}

CrosscheckReport crosscheck(const ProblemSpec& spec, const SheetSample& sheet,
                            const MollifierParams& m,
                            const std::vector<std::pair<double, std::vector<double>>>& points,
                            const CrosscheckBudget& budget) {
  if (points.empty()) throw DegenerateGrid("no crosscheck points");
  if (budget.n_paths < 100) throw InsufficientSamples("crosscheck needs at least 100 paths");
  const int dim = spec.domain.dim;
  double t_max = 0.0;
  for (const auto& [t, x] : points) {
    if (static_cast<int>(x.size()) != dim) throw DimensionMismatch("crosscheck point dimension");
    if (!(t > 0.0)) throw DegenerateGrid("crosscheck times must be positive");
    t_max = std::max(t_max, t);
  }

  FDMesh mesh;
  mesh.n_time = budget.n_time;
  mesh.n_cells.assign(dim, budget.cells_per_axis);
  mesh.t_max = t_max;
  for (const auto& [t, x] : points) {
    for (int a = 0; a < dim; ++a) {
      const double h = (spec.domain.hi[a] - spec.domain.lo[a]) / budget.cells_per_axis;
      if (x[a] - spec.domain.lo[a] < 3 * h || spec.domain.hi[a] - x[a] < 3 * h)
        throw StartOutsideDomain("crosscheck point within three mesh cells of the boundary");
    }
  }

  SmoothedNoise noise(sheet, m);
  const ScalarField potential = [&noise](double t, std::span<const double> x) {
    return noise(t, x);
  };
  FDSolution fd = fd_solve(spec, potential, mesh);

  SolveOptions opts;
  opts.n_steps = budget.n_steps;
  opts.workers = budget.workers;

  CrosscheckReport rep;
  rep.mesh = mesh;
  rep.scheme = fd.scheme;
  rep.paths_per_point = static_cast<std::uint64_t>(budget.n_paths);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& [t, x] = points[i];
    CrosscheckRow row;
    row.t = t;
    row.x = x;
    row.fd = fd.at(t, x);
    auto est = solve_point_fixed_noise(spec, t, x, sheet, m, budget.n_paths,
                                       derive_seed(budget.seed, i), opts);
    row.fk = est.value;
    row.fk_se = est.std_error;
    const double denom = std::max(std::abs(row.fd), 1e-12);
    row.rel_gap = std::abs(row.fd - row.fk) / denom;
    row.ok = row.rel_gap <= budget.tol + 3.0 * row.fk_se / denom;
    rep.max_rel_gap = std::max(rep.max_rel_gap, row.rel_gap);
    if (!row.ok) ++rep.violations;
    rep.rows.push_back(std::move(row));
  }
  return rep;
}

void write_crosscheck_csv(const CrosscheckReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path + " for writing");
  const int dim = report.rows.empty() ? 0 : static_cast<int>(report.rows.front().x.size());
  out << "t";
  for (int a = 0; a < dim; ++a) out << ",x" << a;
  out << ",fd_value,fk_value,rel_gap,mc_se\n";
  out.precision(12);
  for (const auto& row : report.rows) {
    out << row.t;
    for (double xv : row.x) out << "," << xv;
    out << "," << row.fd << "," << row.fk << "," << row.rel_gap << "," << row.fk_se << "\n";
  }
  if (!out.good()) throw Error("short write to " + path);
}

}  // namespace fkmc
