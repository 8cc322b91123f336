#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fkmc/errors.hpp"

namespace fkmc {

// Hurst parameters of the driving noise: one temporal index h0 and one index
// per space axis, all constrained to (1/2, 1).  The solvability condition is
//     2*h0 + sum_i h_space[i] > d + 1,
// and admissibility_margin() is the amount by which it holds; it doubles as
// the spatial regularity exponent used by the analysis module.
struct HurstParams {
  double h0 = 0.75;
  std::vector<double> h_space;

  int dim() const { return static_cast<int>(h_space.size()); }
  double sum_space() const;
  double admissibility_margin() const;  // 2*h0 + sum h_i - d - 1
  double min_space() const;
  // product of the H(2H-1) kernel prefactors over the time and space axes;
  // scales every pairwise-energy quadrature in this codebase.
  double kernel_prefactor() const;
  void validate(int expected_dim) const;
};

enum class Containment { interior, boundary, exterior };

struct DomainSpec {
  enum class Kind { hyperrectangle, ball };
  Kind kind = Kind::hyperrectangle;
  int dim = 0;
  std::vector<double> lo, hi;   // hyperrectangle bounds
  std::vector<double> center;   // ball center
  double radius = 0.0;

  static DomainSpec hyperrectangle(std::vector<double> lo, std::vector<double> hi);
  static DomainSpec ball(std::vector<double> center, double radius);

  double diameter() const;
  double boundary_tol() const { return 1e-9 * diameter(); }
  // distance to the boundary, positive inside and negative outside
  double boundary_distance(std::span<const double> x) const;
  Containment classify(std::span<const double> x, double tol) const;
  Containment classify(std::span<const double> x) const { return classify(x, boundary_tol()); }
  void project_to_boundary(std::span<const double> x, std::span<double> out) const;
  // outward unit normal attached to the boundary point nearest to x
  void boundary_normal(std::span<const double> x, std::span<double> out) const;
  // largest ball radius around an interior point (used by spectral bounds)
  double inradius() const;
};

// classification with explicit tolerance; points within tol of the boundary
// count as boundary
Containment contains(const DomainSpec& d, std::span<const double> x, double tol);

using ScalarField = std::function<double(double t, std::span<const double> x)>;
// writes d components
using VectorField = std::function<void(double t, std::span<const double> x, std::span<double> out)>;
// writes d*d entries, row-major
using MatrixField = std::function<void(double t, std::span<const double> x, std::span<double> out)>;

// Drift/diffusion pair with its declared regularity constants.  The declared
// constants are inputs, not derived quantities; check_coefficients probes them
// on a sample grid so misdeclared specs fail loudly in tests.
struct CoefficientField {
  VectorField drift;
  MatrixField sigma;
  double ellipticity = 1.0;        // lower bound on eigenvalues of sigma*sigma^T
  double lipschitz_const = 0.0;    // spatial Lipschitz bound for both fields
  double time_holder_const = 0.0;  // |f(t,x)-f(s,x)| <= K |t-s|^gamma
  double time_holder_exp = 1.0;
};

// Even reflection in the time argument: fields become defined for t < 0 via
// f(-t, x) = f(t, x).  Path simulation always goes through this wrapper since
// the reversed time argument can cross zero.
CoefficientField time_reflect(const CoefficientField& c);

// omega(r) = K * r^alpha with alpha in (0,1]; concave modulus of continuity
struct PowerModulus {
  double K = 1.0;
  double alpha = 1.0;
  double operator()(double r) const { return K * std::pow(r, alpha); }
};

// Whole-space extension of a scalar field by the infimal convolution
//   ext(t,x) = min over mesh y of  f(t,y) + omega(|x - y|),
// exact on the domain itself (where it returns f directly).  Preserves the
// modulus and the sup bound of f; see the model tests for the certificates.
class ExtendedScalarField {
 public:
  ExtendedScalarField(ScalarField f, PowerModulus omega, DomainSpec domain,
                      std::vector<std::vector<double>> mesh);
  double operator()(double t, std::span<const double> x) const;
  const std::vector<std::vector<double>>& mesh() const { return mesh_; }

 private:
  ScalarField f_;
  PowerModulus omega_;
  DomainSpec domain_;
  std::vector<std::vector<double>> mesh_;
};

ExtendedScalarField extend_coefficient(ScalarField f, PowerModulus omega, const DomainSpec& domain,
                                       int mesh_per_axis);

enum class ProductType { stratonovich, skorohod };

// Full problem description: domain, coefficients, noise indices, initial /
// boundary data (one continuous function h: h(0,.) is the initial condition,
// h(t, boundary point) the Dirichlet value), product convention and horizon.
struct ProblemSpec {
  DomainSpec domain;
  CoefficientField coeffs;
  HurstParams hurst;
  ScalarField data_h;
  ProductType product = ProductType::stratonovich;
  double horizon = 1.0;

  void validate() const;
};

struct CoefficientCheckReport {
  double min_ellipticity = 0.0;
  double max_lipschitz_ratio = 0.0;   // observed |df|/|dx| over declared bound
  double max_time_ratio = 0.0;        // observed |df|/|dt|^gamma over declared bound
  bool ellipticity_ok = false;
  bool lipschitz_ok = false;
  bool time_holder_ok = false;
};

CoefficientCheckReport check_coefficients(const CoefficientField& c, const DomainSpec& d,
                                          double t_max, int samples, std::uint64_t seed);

// ---- preset coefficient builders (shared by config files and tests) ----
CoefficientField make_constant_coeffs(int dim, std::vector<double> b0, double sigma_scale);
CoefficientField make_coeffs(VectorField drift, MatrixField sigma, double ellipticity,
                             double lipschitz, double time_k, double time_gamma);

inline ScalarField constant_data(double v) {
  return [v](double, std::span<const double>) { return v; };
}

}  // namespace fkmc
