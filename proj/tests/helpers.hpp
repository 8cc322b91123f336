#pragma once

#include <cmath>
#include <vector>

#include "fkmc/model.hpp"
#include "fkmc/pathsim.hpp"

namespace fkmc::testutil {

// driftless unit-diffusion spec on a 1-d interval
inline ProblemSpec interval_spec(double lo, double hi, double h0 = 0.8, double h1 = 0.8,
                                 double sigma = 1.0) {
  ProblemSpec spec;
  spec.domain = DomainSpec::hyperrectangle({lo}, {hi});
  spec.coeffs = make_constant_coeffs(1, {0.0}, sigma);
  spec.hurst = HurstParams{h0, {h1}};
  spec.data_h = constant_data(1.0);
  spec.product = ProductType::stratonovich;
  spec.horizon = 4.0;
  return spec;
}

inline ProblemSpec box_spec(int dim, double half_width, double h0 = 0.8, double sigma = 1.0) {
  ProblemSpec spec;
  std::vector<double> lo(dim, -half_width), hi(dim, half_width);
  spec.domain = DomainSpec::hyperrectangle(lo, hi);
  spec.coeffs = make_constant_coeffs(dim, std::vector<double>(dim, 0.0), sigma);
  spec.hurst = HurstParams{h0, std::vector<double>(dim, h0)};
  spec.data_h = constant_data(1.0);
  spec.product = ProductType::stratonovich;
  spec.horizon = 4.0;
  return spec;
}

// path with constant state, never killed
inline KilledPath const_path(const std::vector<double>& x, double t, int n_steps) {
  KilledPath p;
  p.dim = static_cast<int>(x.size());
  p.t_eval = t;
  p.times.resize(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) p.times[i] = t * i / n_steps;
  p.states.reserve(static_cast<std::size_t>(n_steps + 1) * p.dim);
  for (int i = 0; i <= n_steps; ++i) p.states.insert(p.states.end(), x.begin(), x.end());
  p.n_recorded = n_steps + 1;
  return p;
}

// deterministic 1-d path sampled from a smooth curve
template <class F>
inline KilledPath curve_path(F&& f, double t, int n_steps) {
  KilledPath p;
  p.dim = 1;
  p.t_eval = t;
  p.times.resize(n_steps + 1);
  p.states.resize(n_steps + 1);
  for (int i = 0; i <= n_steps; ++i) {
    p.times[i] = t * i / n_steps;
    p.states[i] = f(p.times[i]);
  }
  p.n_recorded = n_steps + 1;
  return p;
}

}  // namespace fkmc::testutil
