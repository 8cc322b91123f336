#include "fkmc/spectral.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>

#include "fkmc/errors.hpp"

namespace fkmc {

namespace {

constexpr int kMaxIterations = 800;
constexpr double kResidualTol = 1e-9;
constexpr std::int64_t kMaxUnknowns = 1 << 22;

// principal eigenvalue of -1/2 Laplacian on the unit ball, by dimension
double unit_ball_rate(int d) {
  switch (d) {
    case 1: return M_PI * M_PI / 8.0;
    case 2: {
      const double j01 = 2.404825557695773;  // first zero of J_0
      return 0.5 * j01 * j01;
    }
    case 3: return M_PI * M_PI / 2.0;
    default: return 0.5 * (M_PI + d) * (M_PI + d);  // crude cover for d > 3
  }
}

struct BoxLattice {
  int dim = 0;
  std::vector<std::vector<double>> axes;   // n_grid + 1 nodes per axis
  std::vector<double> h;                   // cell width per axis
  std::vector<std::int64_t> stride;        // row-major node strides
  std::vector<std::int32_t> unknown;       // node -> unknown id, -1 for Dirichlet
  std::int64_t n_nodes = 0;
  std::int64_t n_unknowns = 0;
};

BoxLattice build_lattice(const DomainSpec& d_sub, int n_grid) {
  if (n_grid < 4) throw DegenerateGrid("eigenproblem needs at least 4 cells per axis");
  BoxLattice lat;
  lat.dim = d_sub.dim;
  std::vector<double> lo(lat.dim), hi(lat.dim);
  if (d_sub.kind == DomainSpec::Kind::hyperrectangle) {
    lo = d_sub.lo;
    hi = d_sub.hi;
  } else {
    for (int i = 0; i < lat.dim; ++i) {
      lo[i] = d_sub.center[i] - d_sub.radius;
      hi[i] = d_sub.center[i] + d_sub.radius;
    }
  }
  lat.axes.resize(lat.dim);
  lat.h.resize(lat.dim);
  lat.n_nodes = 1;
  for (int i = 0; i < lat.dim; ++i) {
    lat.h[i] = (hi[i] - lo[i]) / n_grid;
    if (!(lat.h[i] > 0.0)) throw DegenerateGrid("empty box extent in the eigenproblem lattice");
    lat.axes[i].resize(n_grid + 1);
    for (int k = 0; k <= n_grid; ++k) lat.axes[i][k] = lo[i] + k * lat.h[i];
    lat.n_nodes *= n_grid + 1;
  }
  if (lat.n_nodes > kMaxUnknowns) throw DegenerateGrid("eigenproblem lattice too large");

  lat.stride.assign(lat.dim, 1);
  for (int i = lat.dim - 2; i >= 0; --i)
    lat.stride[i] = lat.stride[i + 1] * static_cast<std::int64_t>(lat.axes[i + 1].size());

  // interior test with a tiny geometric slack so hyperrectangle boundary
  // nodes land exactly on Dirichlet rows
  const double tol = 1e-9 * d_sub.diameter();
  lat.unknown.assign(lat.n_nodes, -1);
  std::vector<int> idx(lat.dim, 0);
  std::vector<double> x(lat.dim);
  for (std::int64_t flat = 0; flat < lat.n_nodes; ++flat) {
    for (int i = 0; i < lat.dim; ++i) x[i] = lat.axes[i][idx[i]];
    if (d_sub.boundary_distance(x) > tol)
      lat.unknown[flat] = static_cast<std::int32_t>(lat.n_unknowns++);
    for (int i = lat.dim - 1; i >= 0; --i) {
      if (++idx[i] < static_cast<int>(lat.axes[i].size())) break;
      idx[i] = 0;
    }
  }
  if (lat.n_unknowns == 0) throw EmptyDomainMesh("no interior lattice nodes in the eigenproblem");
  return lat;
}

// sampled check that drift and diffusion ignore the time argument
void require_autonomous(const CoefficientField& coeffs, const DomainSpec& d_sub) {
  const int d = d_sub.dim;
  std::vector<double> center(d);
  if (d_sub.kind == DomainSpec::Kind::hyperrectangle) {
    for (int i = 0; i < d; ++i) center[i] = 0.5 * (d_sub.lo[i] + d_sub.hi[i]);
  } else {
    center = d_sub.center;
  }
  std::vector<std::vector<double>> probes{center};
  for (int i = 0; i < d; ++i) {
    auto p = center;
    p[i] += 0.31 * (d_sub.kind == DomainSpec::Kind::hyperrectangle
                        ? 0.5 * (d_sub.hi[i] - d_sub.lo[i])
                        : d_sub.radius);
    probes.push_back(std::move(p));
  }
  std::vector<double> b0(d), b1(d), s0(d * d), s1(d * d);
  for (const auto& p : probes) {
    for (double t : {0.37, 1.0}) {
      coeffs.drift(0.0, p, b0);
      coeffs.drift(t, p, b1);
      coeffs.sigma(0.0, p, s0);
      coeffs.sigma(t, p, s1);
      for (int k = 0; k < d; ++k)
        if (std::abs(b0[k] - b1[k]) > 1e-12 * (1.0 + std::abs(b0[k])))
          throw Error("principal_eigenpair requires autonomous coefficients (drift varies in time)");
      for (int k = 0; k < d * d; ++k)
        if (std::abs(s0[k] - s1[k]) > 1e-12 * (1.0 + std::abs(s0[k])))
          throw Error(
              "principal_eigenpair requires autonomous coefficients (diffusion varies in time)");
    }
  }
}

}  // namespace

double EigenResult::psi_at(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim) throw DimensionMismatch("psi_at point dimension");
  // locate the cell per axis; clamp-and-zero outside the box
  std::vector<int> cell(dim);
  std::vector<double> frac(dim);
  for (int i = 0; i < dim; ++i) {
    const auto& ax = axes[i];
    const double h = ax[1] - ax[0];
    const double s = (x[i] - ax.front()) / h;
    if (s < -1e-12 || s > static_cast<double>(ax.size() - 1) + 1e-12) return 0.0;
    int c = static_cast<int>(std::floor(s));
    c = std::clamp(c, 0, static_cast<int>(ax.size()) - 2);
    cell[i] = c;
    frac[i] = std::clamp(s - c, 0.0, 1.0);
  }
  std::vector<std::int64_t> stride(dim, 1);
  for (int i = dim - 2; i >= 0; --i)
    stride[i] = stride[i + 1] * static_cast<std::int64_t>(axes[i + 1].size());
  double acc = 0.0;
  for (int corner = 0; corner < (1 << dim); ++corner) {
    double w = 1.0;
    std::int64_t flat = 0;
    for (int i = 0; i < dim; ++i) {
      const int up = (corner >> i) & 1;
      w *= up ? frac[i] : 1.0 - frac[i];
      flat += stride[i] * (cell[i] + up);
    }
    acc += w * psi1[flat];
  }
  return acc;
}

double EigenResult::psi_integral() const {
  double cell_vol = 1.0;
  for (int i = 0; i < dim; ++i) cell_vol *= axes[i][1] - axes[i][0];
  return std::accumulate(psi1.begin(), psi1.end(), 0.0) * cell_vol;
}

EigenResult principal_eigenpair(const CoefficientField& coeffs, const DomainSpec& d_sub,
                                int n_grid) {
  require_autonomous(coeffs, d_sub);
  auto lat = build_lattice(d_sub, n_grid);
  const int d = lat.dim;

  // assemble the FD matrix over the unknowns
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(lat.n_unknowns) * (1 + 2 * d + 2 * d * (d - 1)));
  std::vector<int> idx(d, 0);
  std::vector<double> x(d), b(d), sig(d * d), a(d * d);
  auto add = [&](std::int64_t node, int row, double v) {
    const std::int32_t col = lat.unknown[node];
    if (col >= 0) trip.emplace_back(row, col, v);  // Dirichlet neighbors drop out
  };
  for (std::int64_t flat = 0; flat < lat.n_nodes; ++flat) {
    const std::int32_t row = lat.unknown[flat];
    if (row >= 0) {
      for (int i = 0; i < d; ++i) x[i] = lat.axes[i][idx[i]];
      coeffs.drift(0.0, x, b);
      coeffs.sigma(0.0, x, sig);
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double s = 0.0;
          for (int k = 0; k < d; ++k) s += sig[i * d + k] * sig[j * d + k];
          a[i * d + j] = s;
        }
      double diag = 0.0;
      for (int i = 0; i < d; ++i) {
        const double c2 = a[i * d + i] / (lat.h[i] * lat.h[i]);
        const double c1 = b[i] / (2.0 * lat.h[i]);
        diag += c2;
        add(flat + lat.stride[i], row, -0.5 * c2 - c1);
        add(flat - lat.stride[i], row, -0.5 * c2 + c1);
        for (int j = i + 1; j < d; ++j) {
          const double cm = a[i * d + j] / (4.0 * lat.h[i] * lat.h[j]);
          add(flat + lat.stride[i] + lat.stride[j], row, -cm);
          add(flat - lat.stride[i] - lat.stride[j], row, -cm);
          add(flat + lat.stride[i] - lat.stride[j], row, cm);
          add(flat - lat.stride[i] + lat.stride[j], row, cm);
        }
      }
      trip.emplace_back(row, row, diag);
    }
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[i] < static_cast<int>(lat.axes[i].size())) break;
      idx[i] = 0;
    }
  }
  const auto m = lat.n_unknowns;
  Eigen::SparseMatrix<double> A(m, m);
  A.setFromTriplets(trip.begin(), trip.end());

  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success)
    throw FactorizationFailure("sparse LU of the eigenproblem matrix");

  // inverse power iteration from the positive constant vector, run until the
  // Rayleigh residual itself meets tolerance (an eigenvalue stall happens too
  // early on problems with a slow spectral-gap ratio)
  Eigen::VectorXd v = Eigen::VectorXd::Ones(m).normalized();
  double lambda = 0.0, prev = std::numeric_limits<double>::infinity();
  double residual = std::numeric_limits<double>::infinity();
  Eigen::VectorXd w;
  int stalled = 0;
  bool met = false;
  for (int it = 0; it < kMaxIterations; ++it) {
    v = lu.solve(v);
    const double nrm = v.norm();
    if (!std::isfinite(nrm) || nrm == 0.0)
      throw IterationDivergence("inverse power iterate degenerated");
    v /= nrm;
    w = A * v;
    lambda = v.dot(w);
    residual = (w - lambda * v).norm();
    if (residual <= kResidualTol * std::max(1.0, std::abs(lambda))) {
      met = true;
      break;
    }
    stalled = std::abs(lambda - prev) <= 1e-15 * std::max(1.0, std::abs(lambda)) ? stalled + 1 : 0;
    if (stalled >= 20)
      throw NonConvergedResidual("residual floor " + std::to_string(residual) +
                                 " sits above tolerance");
    prev = lambda;
  }
  if (!met) throw IterationDivergence("inverse power iteration did not settle");
  if (v.sum() < 0.0) v = -v;
  if (v.minCoeff() < -1e-8 * v.maxCoeff())
    throw IterationDivergence("iteration settled on a sign-changing (non-principal) eigenvector");
  if (!(lambda > 0.0)) throw IterationDivergence("principal eigenvalue came out non-positive");

  EigenResult res;
  res.dim = d;
  res.lambda1 = lambda;
  res.axes = lat.axes;
  res.h_grid = *std::max_element(lat.h.begin(), lat.h.end());
  res.residual = residual;
  res.psi1.assign(lat.n_nodes, 0.0);
  double cell_vol = 1.0;
  for (int i = 0; i < d; ++i) cell_vol *= lat.h[i];
  const double scale = 1.0 / (std::sqrt(cell_vol));  // L2 lattice normalization of the unit vector
  for (std::int64_t flat = 0; flat < lat.n_nodes; ++flat)
    if (lat.unknown[flat] >= 0) res.psi1[flat] = scale * v[lat.unknown[flat]];
  return res;
}

EigenBoundsReport eigen_bounds_check(const EigenResult& r, const DomainSpec& d_sub,
                                     const CoefficientField& coeffs) {
  const int d = d_sub.dim;
  EigenBoundsReport rep;
  rep.radius = d_sub.inradius();

  // probe coefficient magnitudes over a coarse sweep of the lattice
  std::vector<double> x(d), b(d), sig(d * d);
  Eigen::MatrixXd a(d, d);
  const int probes = 9;
  std::vector<int> idx(d, 0);
  bool done = false;
  while (!done) {
    for (int i = 0; i < d; ++i) {
      const auto& ax = r.axes[i];
      const double s = (idx[i] + 0.5) / probes;
      x[i] = ax.front() + s * (ax.back() - ax.front());
    }
    if (d_sub.boundary_distance(x) > 0.0) {
      coeffs.drift(0.0, x, b);
      coeffs.sigma(0.0, x, sig);
      double bn = 0.0;
      for (int i = 0; i < d; ++i) bn += b[i] * b[i];
      rep.drift_max = std::max(rep.drift_max, std::sqrt(bn));
      for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) {
          double s = 0.0;
          for (int k = 0; k < d; ++k) s += sig[i * d + k] * sig[j * d + k];
          a(i, j) = s;
        }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
      rep.kappa_max = std::max(rep.kappa_max, es.eigenvalues().maxCoeff());
    }
    done = true;
    for (int i = d - 1; i >= 0; --i) {
      if (++idx[i] < probes) { done = false; break; }
      idx[i] = 0;
    }
  }

  rep.lambda_r2 = r.lambda1 * rep.radius * rep.radius;
  // calibration: unit-ball rate for the Laplacian, scaled by the probed
  // diffusion ceiling, plus a drift term on dimensional grounds; 5% slack
  // absorbs lattice error.  Fixed once, never refit per case.
  rep.c_fit = 1.05 * unit_ball_rate(d) * (rep.kappa_max + rep.radius * rep.drift_max);
  rep.lambda_ok = rep.lambda_r2 <= rep.c_fit;
  if (!rep.lambda_ok)
    rep.violations.push_back("lambda1 * R^2 = " + std::to_string(rep.lambda_r2) +
                             " exceeds the calibrated ceiling " + std::to_string(rep.c_fit));

  std::vector<double> center(d);
  if (d_sub.kind == DomainSpec::Kind::hyperrectangle) {
    for (int i = 0; i < d; ++i) center[i] = 0.5 * (d_sub.lo[i] + d_sub.hi[i]);
  } else {
    center = d_sub.center;
  }
  rep.psi_center = r.psi_at(center);
  rep.psi_peak = *std::max_element(r.psi1.begin(), r.psi1.end());
  rep.k_fit = 4.0;
  if (rep.psi_center > 0.0) {
    rep.psi_ratio = rep.psi_peak / rep.psi_center;
    rep.psi_ok = rep.psi_ratio <= rep.k_fit;
  } else {
    rep.psi_ratio = std::numeric_limits<double>::infinity();
    rep.psi_ok = false;
  }
  if (!rep.psi_ok)
    rep.violations.push_back("psi1 peak-to-center ratio " + std::to_string(rep.psi_ratio) +
                             " exceeds " + std::to_string(rep.k_fit));
  return rep;
}

double smallball_predict(const CoefficientField& coeffs, const DomainSpec& domain,
                         std::span<const double> x, double eps, double t, int n_grid) {
  if (static_cast<int>(x.size()) != domain.dim)
    throw DimensionMismatch("smallball_predict point dimension");
  if (!(eps > 0.0)) throw BallNotInsideDomain("ball radius must be positive");
  if (!(t >= 0.0)) throw Error("smallball_predict needs t >= 0");
  if (domain.boundary_distance(x) < eps - 1e-12 * domain.diameter())
    throw BallNotInsideDomain("ball of radius " + std::to_string(eps) +
                              " pokes out of the domain");
  DomainSpec ball;
  if (domain.dim == 1) {
    // a 1-d ball is an interval; the box form keeps the boundary exact
    ball = DomainSpec::hyperrectangle({x[0] - eps}, {x[0] + eps});
  } else {
    ball = DomainSpec::ball(std::vector<double>(x.begin(), x.end()), eps);
  }
  const auto pair = principal_eigenpair(coeffs, ball, n_grid);
  return std::exp(-pair.lambda1 * t) * pair.psi_at(x) * pair.psi_integral();
}

}  // namespace fkmc
