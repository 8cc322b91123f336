#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fkmc/model.hpp"

namespace fkmc {

// A parsed run file: the problem together with its run budgets.  The file is
// line-oriented `key = value` text; '#' starts a comment, keys may appear at
// most once and every value is a whitespace-separated token list.
//
//   dim         = 1
//   domain      = interval LO HI | box LO0 HI0 [LO1 HI1 ...] | ball C... R
//   hurst_time  = H0
//   hurst_space = H1 [H2 ...]          (one index per axis)
//   product     = stratonovich | skorohod          (default stratonovich)
//   horizon     = T
//   data        = constant V
//               | affine C A0 [A1 ...]              (C + sum_i A_i x_i)
//               | bump BASE AMP WIDTH [C0 C1 ...]   (BASE + AMP exp(-|x-C|^2/WIDTH^2))
//   drift       = constant V0 [V1 ...]
//               | affine C0 G0 [C1 G1 ...]          (component i: C_i + G_i x_i)
//               | trig_x AMP FREQ                   (component i: AMP sin(FREQ x_i))
//               | trig_t AMP FREQ                   (all components: AMP sin(FREQ t))
//               | poly_t C0 [C1 ...]                (all components: sum_j C_j t^j)
//               | table_t T0 V0 T1 V1 [...]         (piecewise linear in t)
//   sigma       = constant S                        (S * identity)
//               | diag S0 [S1 ...]
//               | poly_t C0 [C1 ...]                (scalar scale in t, times identity)
//               | table_t T0 V0 T1 V1 [...]
//   paths/steps/k/workers/seed = integers
//   eps/delta/t_eval           = reals
//   x_eval      = X0 [X1 ...]           (defaults to the domain center)
//
// The declared regularity constants (ellipticity, Lipschitz, time modulus)
// are derived from the preset in closed form, never guessed.
struct RunConfig {
  ProblemSpec spec;
  long paths = 10000;
  int steps = 200;
  int k = 2;
  int workers = 0;  // excluded from the digest: worker count never changes results
  std::uint64_t seed = 20240501;  // documented default, keeps examples reproducible
  double eps = 0.05;
  double delta = 0.05;
  double t_eval = 1.0;
  std::vector<double> x_eval;

  // normalized serialization of the problem block (filled by the parser)
  std::string problem_canonical;
  // problem_canonical plus the budget block, and its fnv1a64 hex digest
  std::string canonical;
  std::string digest;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::string& path);

// rebuild canonical + digest after mutating budget fields (CLI overrides)
void refresh_digest(RunConfig& rc);

}  // namespace fkmc
