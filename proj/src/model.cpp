#include "fkmc/model.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fkmc/rng.hpp"

namespace fkmc {

double HurstParams::sum_space() const {
  double s = 0;
  for (double h : h_space) s += h;
  return s;
}

double HurstParams::admissibility_margin() const {
  return 2.0 * h0 + sum_space() - static_cast<double>(dim()) - 1.0;
}

double HurstParams::min_space() const {
  double m = 1.0;
  for (double h : h_space) m = std::min(m, h);
  return m;
}

double HurstParams::kernel_prefactor() const {
  double p = h0 * (2.0 * h0 - 1.0);
  for (double h : h_space) p *= h * (2.0 * h - 1.0);
  return p;
}

void HurstParams::validate(int expected_dim) const {
  if (expected_dim <= 0) throw DimensionMismatch("spatial dimension must be positive");
  if (dim() != expected_dim) {
    std::ostringstream os;
    os << "got " << dim() << " spatial Hurst indices for dimension " << expected_dim;
    throw DimensionMismatch(os.str());
  }
  auto in_range = [](double h) { return h > 0.5 && h < 1.0; };
  if (!in_range(h0)) throw HurstOutOfRange("temporal index must lie in (1/2, 1)");
  for (double h : h_space)
    if (!in_range(h)) throw HurstOutOfRange("spatial index must lie in (1/2, 1)");
  if (admissibility_margin() <= 0.0) {
    std::ostringstream os;
    os << "2*h0 + sum(h_i) - d - 1 = " << admissibility_margin() << " must be positive";
    throw AdmissibilityViolated(os.str());
  }
}

DomainSpec DomainSpec::hyperrectangle(std::vector<double> lo, std::vector<double> hi) {
  if (lo.empty() || lo.size() != hi.size())
    throw DimensionMismatch("hyperrectangle bounds must be non-empty and matched");
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(hi[i] > lo[i])) throw DegenerateGrid("hyperrectangle has empty extent on an axis");
  DomainSpec d;
  d.kind = Kind::hyperrectangle;
  d.dim = static_cast<int>(lo.size());
  d.lo = std::move(lo);
  d.hi = std::move(hi);
  return d;
}

DomainSpec DomainSpec::ball(std::vector<double> center, double radius) {
  if (center.empty()) throw DimensionMismatch("ball center must be non-empty");
  if (!(radius > 0)) throw DegenerateGrid("ball radius must be positive");
  DomainSpec d;
  d.kind = Kind::ball;
  d.dim = static_cast<int>(center.size());
  d.center = std::move(center);
  d.radius = radius;
  return d;
}

double DomainSpec::diameter() const {
  if (kind == Kind::ball) return 2.0 * radius;
  double s = 0;
  for (int i = 0; i < dim; ++i) s += (hi[i] - lo[i]) * (hi[i] - lo[i]);
  return std::sqrt(s);
}

double DomainSpec::inradius() const {
  if (kind == Kind::ball) return radius;
  double r = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) r = std::min(r, 0.5 * (hi[i] - lo[i]));
  return r;
}

double DomainSpec::boundary_distance(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim) throw DimensionMismatch("point has wrong dimension");
  if (kind == Kind::ball) {
    double s = 0;
    for (int i = 0; i < dim; ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
    return radius - std::sqrt(s);
  }
  // min over faces; for exterior points this is a (negative) face deficit,
  // which is all classification and projection need
  double d = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dim; ++i) d = std::min({d, x[i] - lo[i], hi[i] - x[i]});
  return d;
}

Containment DomainSpec::classify(std::span<const double> x, double tol) const {
  const double d = boundary_distance(x);
  if (d > tol) return Containment::interior;
  if (d < -tol) return Containment::exterior;
  return Containment::boundary;
}

void DomainSpec::project_to_boundary(std::span<const double> x, std::span<double> out) const {
  if (static_cast<int>(x.size()) != dim || out.size() != x.size())
    throw DimensionMismatch("projection buffers have wrong dimension");
  if (kind == Kind::ball) {
    double s = 0;
    for (int i = 0; i < dim; ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
    const double r = std::sqrt(s);
    if (r < 1e-300) {  // center: pick an arbitrary boundary point
      for (int i = 0; i < dim; ++i) out[i] = center[i];
      out[0] += radius;
      return;
    }
    for (int i = 0; i < dim; ++i) out[i] = center[i] + (x[i] - center[i]) * (radius / r);
    return;
  }
  for (int i = 0; i < dim; ++i) out[i] = std::clamp(x[i], lo[i], hi[i]);
  // if still strictly inside, snap the closest coordinate to its nearer face
  double best = std::numeric_limits<double>::infinity();
  int axis = 0;
  bool to_hi = false;
  for (int i = 0; i < dim; ++i) {
    if (out[i] - lo[i] < best) { best = out[i] - lo[i]; axis = i; to_hi = false; }
    if (hi[i] - out[i] < best) { best = hi[i] - out[i]; axis = i; to_hi = true; }
  }
  if (best > 0) out[axis] = to_hi ? hi[axis] : lo[axis];
}

void DomainSpec::boundary_normal(std::span<const double> x, std::span<double> out) const {
  if (static_cast<int>(x.size()) != dim || out.size() != x.size())
    throw DimensionMismatch("normal buffers have wrong dimension");
  if (kind == Kind::ball) {
    double s = 0;
    for (int i = 0; i < dim; ++i) s += (x[i] - center[i]) * (x[i] - center[i]);
    const double r = std::sqrt(s);
    for (int i = 0; i < dim; ++i) out[i] = r < 1e-300 ? (i == 0 ? 1.0 : 0.0) : (x[i] - center[i]) / r;
    return;
  }
  double best = std::numeric_limits<double>::infinity();
  int axis = 0;
  double sign = 1.0;
  for (int i = 0; i < dim; ++i) {
    if (x[i] - lo[i] < best) { best = x[i] - lo[i]; axis = i; sign = -1.0; }
    if (hi[i] - x[i] < best) { best = hi[i] - x[i]; axis = i; sign = 1.0; }
  }
  for (int i = 0; i < dim; ++i) out[i] = 0.0;
  out[axis] = sign;
}

Containment contains(const DomainSpec& d, std::span<const double> x, double tol) {
  if (static_cast<int>(x.size()) != d.dim)
    throw DimensionMismatch("contains: point dimension does not match domain");
  if (tol < 0) throw DegenerateGrid("contains: tolerance must be non-negative");
  return d.classify(x, tol);
}

CoefficientField time_reflect(const CoefficientField& c) {
  CoefficientField out = c;
  VectorField drift = c.drift;
  MatrixField sigma = c.sigma;
  out.drift = [drift](double t, std::span<const double> x, std::span<double> o) {
    drift(std::abs(t), x, o);
  };
  out.sigma = [sigma](double t, std::span<const double> x, std::span<double> o) {
    sigma(std::abs(t), x, o);
  };
  return out;
}

ExtendedScalarField::ExtendedScalarField(ScalarField f, PowerModulus omega, DomainSpec domain,
                                         std::vector<std::vector<double>> mesh)
    : f_(std::move(f)), omega_(omega), domain_(std::move(domain)), mesh_(std::move(mesh)) {
  if (mesh_.empty()) throw EmptyDomainMesh("extension mesh has no points");
}

double ExtendedScalarField::operator()(double t, std::span<const double> x) const {
  if (domain_.classify(x) != Containment::exterior) return f_(t, x);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& y : mesh_) {
    double s = 0;
    for (int i = 0; i < domain_.dim; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
    best = std::min(best, f_(t, y) + omega_(std::sqrt(s)));
  }
  return best;
}

ExtendedScalarField extend_coefficient(ScalarField f, PowerModulus omega, const DomainSpec& domain,
                                       int mesh_per_axis) {
  if (mesh_per_axis < 2) throw EmptyDomainMesh("need at least 2 mesh points per axis");
  if (!(omega.alpha > 0) || omega.alpha > 1 || !(omega.K > 0))
    throw CoefficientEvaluationFailure("modulus must have K > 0 and alpha in (0, 1]");
  std::vector<double> lo(domain.dim), hi(domain.dim);
  if (domain.kind == DomainSpec::Kind::ball) {
    for (int i = 0; i < domain.dim; ++i) {
      lo[i] = domain.center[i] - domain.radius;
      hi[i] = domain.center[i] + domain.radius;
    }
  } else {
    lo = domain.lo;
    hi = domain.hi;
  }
  std::vector<std::vector<double>> mesh;
  std::vector<int> idx(domain.dim, 0);
  for (;;) {
    std::vector<double> p(domain.dim);
    for (int i = 0; i < domain.dim; ++i)
      p[i] = lo[i] + (hi[i] - lo[i]) * static_cast<double>(idx[i]) / (mesh_per_axis - 1);
    if (domain.classify(p) != Containment::exterior) mesh.push_back(std::move(p));
    int axis = 0;
    while (axis < domain.dim && ++idx[axis] == mesh_per_axis) idx[axis++] = 0;
    if (axis == domain.dim) break;
  }
  if (mesh.empty()) throw EmptyDomainMesh("no mesh points fell inside the domain");
  return ExtendedScalarField(std::move(f), omega, domain, std::move(mesh));
}

void ProblemSpec::validate() const {
  hurst.validate(domain.dim);
  if (!(horizon > 0)) throw DegenerateGrid("horizon must be positive");
  if (!coeffs.drift || !coeffs.sigma) throw CoefficientEvaluationFailure("coefficients not set");
  if (!data_h) throw CoefficientEvaluationFailure("initial/boundary data not set");
  if (!(coeffs.ellipticity > 0)) throw CoefficientEvaluationFailure("ellipticity bound must be positive");
}

CoefficientCheckReport check_coefficients(const CoefficientField& c, const DomainSpec& d,
                                          double t_max, int samples, std::uint64_t seed) {
  GaussianStream rng(seed);
  auto draw_point = [&](std::span<double> x) {
    for (;;) {
      if (d.kind == DomainSpec::Kind::ball) {
        for (int i = 0; i < d.dim; ++i)
          x[i] = d.center[i] + d.radius * (2.0 * rng.uniform() - 1.0);
      } else {
        for (int i = 0; i < d.dim; ++i) x[i] = d.lo[i] + (d.hi[i] - d.lo[i]) * rng.uniform();
      }
      if (d.classify(x) == Containment::interior) return;
    }
  };

  CoefficientCheckReport rep;
  rep.min_ellipticity = std::numeric_limits<double>::infinity();
  const int n = d.dim;
  std::vector<double> x(n), y(n), bx(n), by(n), sx(n * n), sy(n * n);
  Eigen::MatrixXd a(n, n);
  for (int s = 0; s < samples; ++s) {
    draw_point(x);
    draw_point(y);
    const double t = t_max * rng.uniform();
    const double u = t_max * rng.uniform();
    c.drift(t, x, bx);
    c.sigma(t, x, sx);
    // smallest eigenvalue of sigma sigma^T
    Eigen::MatrixXd sm(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) sm(i, j) = sx[i * n + j];
    a = sm * sm.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    rep.min_ellipticity = std::min(rep.min_ellipticity, es.eigenvalues().minCoeff());

    double dx = 0;
    for (int i = 0; i < n; ++i) dx += (x[i] - y[i]) * (x[i] - y[i]);
    dx = std::sqrt(dx);
    if (dx > 1e-12) {
      c.drift(t, y, by);
      c.sigma(t, y, sy);
      double db = 0, ds = 0;
      for (int i = 0; i < n; ++i) db += (bx[i] - by[i]) * (bx[i] - by[i]);
      for (int i = 0; i < n * n; ++i) ds += (sx[i] - sy[i]) * (sx[i] - sy[i]);
      rep.max_lipschitz_ratio =
          std::max(rep.max_lipschitz_ratio, std::sqrt(std::max(db, ds)) / dx);
    }
    const double dt = std::abs(t - u);
    if (dt > 1e-12) {
      c.drift(u, x, by);
      c.sigma(u, x, sy);
      double db = 0, ds = 0;
      for (int i = 0; i < n; ++i) db += (bx[i] - by[i]) * (bx[i] - by[i]);
      for (int i = 0; i < n * n; ++i) ds += (sx[i] - sy[i]) * (sx[i] - sy[i]);
      rep.max_time_ratio = std::max(
          rep.max_time_ratio, std::sqrt(std::max(db, ds)) / std::pow(dt, c.time_holder_exp));
    }
  }
  const double slack = 1.05;
  rep.ellipticity_ok = rep.min_ellipticity >= c.ellipticity / slack;
  rep.lipschitz_ok = rep.max_lipschitz_ratio <= c.lipschitz_const * slack + 1e-12;
  rep.time_holder_ok = rep.max_time_ratio <= c.time_holder_const * slack + 1e-12;
  return rep;
}

CoefficientField make_constant_coeffs(int dim, std::vector<double> b0, double sigma_scale) {
  if (static_cast<int>(b0.size()) != dim) throw DimensionMismatch("drift vector has wrong size");
  if (!(sigma_scale > 0)) throw CoefficientEvaluationFailure("sigma scale must be positive");
  CoefficientField c;
  c.drift = [b0](double, std::span<const double>, std::span<double> out) {
    for (std::size_t i = 0; i < b0.size(); ++i) out[i] = b0[i];
  };
  c.sigma = [dim, sigma_scale](double, std::span<const double>, std::span<double> out) {
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) out[i * dim + j] = i == j ? sigma_scale : 0.0;
  };
  c.ellipticity = sigma_scale * sigma_scale;
  c.lipschitz_const = 0.0;
  c.time_holder_const = 0.0;
  c.time_holder_exp = 1.0;
  return c;
}

CoefficientField make_coeffs(VectorField drift, MatrixField sigma, double ellipticity,
                             double lipschitz, double time_k, double time_gamma) {
  CoefficientField c;
  c.drift = std::move(drift);
  c.sigma = std::move(sigma);
  c.ellipticity = ellipticity;
  c.lipschitz_const = lipschitz;
  c.time_holder_const = time_k;
  c.time_holder_exp = time_gamma;
  return c;
}

}  // namespace fkmc
