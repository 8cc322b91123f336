#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "fkmc/config.hpp"
#include "fkmc/errors.hpp"

using namespace fkmc;

namespace {

const char* kMinimal = R"(
dim         = 1
domain      = interval -1 1
hurst_time  = 0.8
hurst_space = 0.8
horizon     = 4
data        = constant 1
drift       = constant 0
sigma       = constant 1
)";

std::vector<double> at(const RunConfig& rc, double t, std::vector<double> x, bool drift) {
  std::vector<double> out(drift ? x.size() : x.size() * x.size());
  if (drift)
    rc.spec.coeffs.drift(t, x, out);
  else
    rc.spec.coeffs.sigma(t, x, out);
  return out;
}

}  // namespace

TEST_CASE("a minimal file parses with documented defaults") {
  const RunConfig rc = parse_config(kMinimal);
  CHECK(rc.spec.domain.dim == 1);
  CHECK(rc.spec.hurst.h0 == 0.8);
  CHECK(rc.spec.product == ProductType::stratonovich);
  CHECK(rc.spec.horizon == 4.0);
  CHECK(rc.paths == 10000);
  CHECK(rc.steps == 200);
  CHECK(rc.seed == 20240501);
  REQUIRE(rc.x_eval.size() == 1);
  CHECK(rc.x_eval[0] == 0.0);  // domain center
  CHECK(rc.spec.data_h(0.0, rc.x_eval) == 1.0);
  CHECK(rc.spec.coeffs.ellipticity == 1.0);
  CHECK_FALSE(rc.digest.empty());
  // the canonical text pins the resolved values, not the raw layout
  CHECK(rc.canonical.find("product=stratonovich") != std::string::npos);
  CHECK(rc.canonical.find("x_eval=0") != std::string::npos);
}

TEST_CASE("digests are layout-invariant and budget-sensitive") {
  const RunConfig a = parse_config(kMinimal);
  // same content, different whitespace and comments
  const RunConfig b = parse_config(
      "dim=1\ndomain = interval -1    1\n# c\nhurst_time=0.8\nhurst_space=0.8\n"
      "horizon=4\ndata= constant 1\ndrift =constant 0\nsigma= constant 1\n");
  CHECK(a.digest == b.digest);
  CHECK(a.canonical == b.canonical);

  RunConfig c = parse_config(kMinimal);
  c.paths = 20000;
  refresh_digest(c);
  CHECK(c.digest != a.digest);

  // the worker count never changes numerics, so it never changes the digest
  RunConfig d = parse_config(kMinimal);
  d.workers = 7;
  refresh_digest(d);
  CHECK(d.digest == a.digest);
}

TEST_CASE("coefficient presets evaluate to their closed forms") {
  const RunConfig rc = parse_config(R"(
dim         = 2
domain      = box -1 1 -2 2
hurst_time  = 0.9
hurst_space = 0.9 0.9
horizon     = 2
data        = affine 1 0.5 -0.25
drift       = affine 0.1 0.3 -0.2 0.4
sigma       = diag 1.5 2
)");
  const std::vector<double> x{0.5, -1.0};
  const auto b = at(rc, 0.7, x, true);
  CHECK(b[0] == doctest::Approx(0.1 + 0.3 * 0.5).epsilon(1e-15));
  CHECK(b[1] == doctest::Approx(-0.2 + 0.4 * -1.0).epsilon(1e-15));
  const auto s = at(rc, 0.7, x, false);
  CHECK(s[0] == 1.5);
  CHECK(s[3] == 2.0);
  CHECK(s[1] == 0.0);
  CHECK(rc.spec.coeffs.ellipticity == doctest::Approx(2.25).epsilon(1e-15));
  CHECK(rc.spec.coeffs.lipschitz_const == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(rc.spec.data_h(0.0, x) == doctest::Approx(1.0 + 0.25 + 0.25).epsilon(1e-15));
}

TEST_CASE("time-dependent presets carry honest regularity constants") {
  const RunConfig rc = parse_config(R"(
dim         = 1
domain      = interval -3 3
hurst_time  = 0.8
hurst_space = 0.8
horizon     = 2
data        = constant 1
drift       = trig_t 0.1 1
sigma       = poly_t 1 0.25
)");
  std::vector<double> x{0.0};
  std::vector<double> out(1);
  rc.spec.coeffs.drift(0.5, x, out);
  CHECK(out[0] == doctest::Approx(0.1 * std::sin(0.5)).epsilon(1e-15));
  rc.spec.coeffs.sigma(2.0, x, out);
  CHECK(out[0] == doctest::Approx(1.5).epsilon(1e-15));
  // |d/dt 0.1 sin t| <= 0.1 and |d/dt (1 + t/4)| = 0.25
  CHECK(rc.spec.coeffs.time_holder_const == doctest::Approx(0.25).epsilon(1e-12));
  // scale minimum on [0,2] is 1 (at t=0), up to the sampling safeguard
  CHECK(rc.spec.coeffs.ellipticity == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(rc.spec.coeffs.ellipticity <= 1.0);

  const RunConfig tb = parse_config(R"(
dim         = 1
domain      = interval -3 3
hurst_time  = 0.8
hurst_space = 0.8
horizon     = 2
data        = constant 1
drift       = table_t 0 0  1 0.5  2 0.25
sigma       = table_t 0 1  2 0.5
)");
  rc.spec.coeffs.drift(0.0, x, out);
  tb.spec.coeffs.drift(0.5, x, out);
  CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-15));  // linear 0 -> 0.5 at t=1
  tb.spec.coeffs.drift(3.0, x, out);
  CHECK(out[0] == doctest::Approx(0.25).epsilon(1e-15));  // clamped past the end
  tb.spec.coeffs.sigma(1.0, x, out);
  CHECK(out[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(tb.spec.coeffs.ellipticity == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(tb.spec.coeffs.time_holder_const == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("bump data defaults its center to the domain center") {
  const RunConfig rc = parse_config(R"(
dim         = 1
domain      = interval 0 1
hurst_time  = 0.8
hurst_space = 0.8
horizon     = 1
data        = bump 1 0.5 0.3
drift       = constant 0
sigma       = constant 1
)");
  const std::vector<double> mid{0.5}, edge{0.0};
  CHECK(rc.spec.data_h(0.0, mid) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(rc.spec.data_h(0.0, edge) ==
        doctest::Approx(1.0 + 0.5 * std::exp(-0.25 / 0.09)).epsilon(1e-12));
  // resolved center lands in the canonical text
  CHECK(rc.canonical.find("bump 1 0.5") != std::string::npos);
  CHECK(rc.canonical.find("0.5\n") != std::string::npos);
}

TEST_CASE("parse errors carry line numbers and name the offense") {
  auto parse_fails = [](const std::string& text, const char* needle) {
    try {
      parse_config(text);
      FAIL_CHECK("expected ConfigParse for: " << needle);
    } catch (const ConfigParse& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  parse_fails("dim = 1\nfoo = 2\n", "unknown key 'foo'");
  parse_fails("dim = 1\ndim = 2\n", "duplicate key");
  parse_fails("dim = one\n", "bad integer");
  parse_fails("dim = 1\ndomain = interval 1 -1\n", "lo < hi");
  parse_fails("dim = 1\ndomain = pentagon 1 2\n", "unknown domain kind");
  parse_fails(std::string(kMinimal) + "paths\n", "expected 'key = value'");
  parse_fails("dim = 1\ndomain = interval -1 1\nhurst_time = 0.8\n", "missing required key");
  {
    std::string s(kMinimal);
    const auto p = s.find("drift       = constant 0");
    s.replace(p, 25, "drift       = warp 3 ");
    parse_fails(s, "unknown drift preset");
  }
}

TEST_CASE("model and budget validation surfaces the violated rule") {
  // inadmissible Hurst vector: parsing succeeds, validation throws
  std::string bad(kMinimal);
  bad.replace(bad.find("hurst_time  = 0.8"), 17, "hurst_time  = 0.6");
  bad.replace(bad.find("hurst_space = 0.8"), 17, "hurst_space = 0.6");
  CHECK_THROWS_AS(parse_config(bad), AdmissibilityViolated);

  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "t_eval = 9\n"), ValidationFailed);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "x_eval = 5\n"), ValidationFailed);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "paths = 0\n"), ValidationFailed);
  CHECK_THROWS_AS(parse_config(std::string(kMinimal) + "eps = -0.1\n"), ValidationFailed);
  // positivity of the time-tabulated diffusion scale is a parse-time check
  std::string degenerate(kMinimal);
  degenerate.replace(degenerate.find("sigma       = constant 1"), 24,
                     "sigma = table_t 0 1 2 0 ");
  CHECK_THROWS_AS(parse_config(degenerate), ConfigParse);
}

TEST_CASE("bundled spec files load, validate and stay untouched") {
  for (const char* stem :
       {"/specs/bm_interval.spec", "/specs/anderson_box.spec", "/specs/crosscheck_unit.spec"}) {
    const std::string name = std::string(FKMC_SOURCE_DIR) + stem;
    std::ifstream pre(name, std::ios::binary);
    REQUIRE_MESSAGE(pre.good(), name);
    std::string before((std::istreambuf_iterator<char>(pre)), std::istreambuf_iterator<char>());
    const RunConfig rc = load_config(name);
    CHECK_FALSE(rc.digest.empty());
    CHECK(rc.spec.domain.classify(rc.x_eval) == Containment::interior);
    std::ifstream post(name, std::ios::binary);
    std::string after((std::istreambuf_iterator<char>(post)), std::istreambuf_iterator<char>());
    CHECK(before == after);
  }
  CHECK_THROWS_AS(load_config("no_such_file.spec"), ConfigParse);
}
