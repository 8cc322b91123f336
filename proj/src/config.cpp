#include "fkmc/config.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fkmc/digest.hpp"
#include "fkmc/errors.hpp"

namespace fkmc {

namespace {

struct Entry {
  int line = 0;
  std::vector<std::string> tokens;
};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

[[noreturn]] void fail(int line, const std::string& msg) {
  throw ConfigParse("line " + std::to_string(line) + ": " + msg);
}

double to_real(const Entry& e, const std::string& tok) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(tok, &pos);
    if (pos != tok.size() || !std::isfinite(v)) fail(e.line, "bad number '" + tok + "'");
    return v;
  } catch (const ConfigParse&) {
    throw;
  } catch (...) {
    fail(e.line, "bad number '" + tok + "'");
  }
}

long long to_int(const Entry& e, const std::string& tok) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(tok, &pos);
    if (pos != tok.size()) fail(e.line, "bad integer '" + tok + "'");
    return v;
  } catch (const ConfigParse&) {
    throw;
  } catch (...) {
    fail(e.line, "bad integer '" + tok + "'");
  }
}

std::vector<double> to_reals(const Entry& e, std::size_t from = 0) {
  std::vector<double> out;
  for (std::size_t i = from; i < e.tokens.size(); ++i) out.push_back(to_real(e, e.tokens[i]));
  return out;
}

void need(const Entry& e, std::size_t n, const char* what) {
  if (e.tokens.size() != n) fail(e.line, std::string(what) + ": wrong number of values");
}

std::map<std::string, Entry> tokenize(std::string_view text) {
  static const char* known[] = {"dim",   "domain", "hurst_time", "hurst_space", "product",
                                "horizon", "data", "drift",      "sigma",       "paths",
                                "steps", "k",      "workers",    "seed",        "eps",
                                "delta", "t_eval", "x_eval"};
  std::map<std::string, Entry> entries;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const auto eq = raw.find('=');
    std::string stripped = raw;
    stripped.erase(std::remove_if(stripped.begin(), stripped.end(),
                                  [](unsigned char c) { return std::isspace(c); }),
                   stripped.end());
    if (stripped.empty()) continue;
    if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
    std::istringstream ks{raw.substr(0, eq)};
    std::string key;
    ks >> key;
    std::string extra;
    if (key.empty() || (ks >> extra)) fail(line_no, "malformed key");
    if (std::find_if(std::begin(known), std::end(known),
                     [&](const char* k) { return key == k; }) == std::end(known))
      fail(line_no, "unknown key '" + key + "'");
    if (entries.count(key)) fail(line_no, "duplicate key '" + key + "'");
    Entry e;
    e.line = line_no;
    std::istringstream vs{raw.substr(eq + 1)};
    std::string tok;
    while (vs >> tok) e.tokens.push_back(tok);
    if (e.tokens.empty()) fail(line_no, "key '" + key + "' has no value");
    entries.emplace(std::move(key), std::move(e));
  }
  return entries;
}

// piecewise-linear table in t: nodes strictly increasing, clamped ends
struct Table {
  std::vector<double> t, v;
  double operator()(double s) const {
    if (s <= t.front()) return v.front();
    if (s >= t.back()) return v.back();
    const auto it = std::upper_bound(t.begin(), t.end(), s);
    const std::size_t j = static_cast<std::size_t>(it - t.begin());
    const double w = (s - t[j - 1]) / (t[j] - t[j - 1]);
    return v[j - 1] + w * (v[j] - v[j - 1]);
  }
  double max_slope() const {
    double m = 0;
    for (std::size_t j = 1; j < t.size(); ++j)
      m = std::max(m, std::abs((v[j] - v[j - 1]) / (t[j] - t[j - 1])));
    return m;
  }
};

Table parse_table(const Entry& e) {
  if (e.tokens.size() < 5 || (e.tokens.size() - 1) % 2 != 0)
    fail(e.line, "table_t needs pairs: T0 V0 T1 V1 ...");
  Table tb;
  for (std::size_t i = 1; i < e.tokens.size(); i += 2) {
    tb.t.push_back(to_real(e, e.tokens[i]));
    tb.v.push_back(to_real(e, e.tokens[i + 1]));
  }
  for (std::size_t j = 1; j < tb.t.size(); ++j)
    if (!(tb.t[j] > tb.t[j - 1])) fail(e.line, "table_t times must be strictly increasing");
  return tb;
}

struct Poly {
  std::vector<double> c;
  double operator()(double t) const {
    double acc = 0;
    for (std::size_t j = c.size(); j-- > 0;) acc = acc * t + c[j];
    return acc;
  }
  // exact bound on |p'| over [0, T]
  double deriv_bound(double T) const {
    double k = 0;
    for (std::size_t j = 1; j < c.size(); ++j)
      k += static_cast<double>(j) * std::abs(c[j]) * std::pow(T, static_cast<double>(j - 1));
    return k;
  }
};

struct DriftSpec {
  VectorField fn;
  double lipschitz = 0.0;
  double time_k = 0.0;
  std::string canon;
};

DriftSpec build_drift(const Entry& e, int dim, double horizon) {
  DriftSpec out;
  const std::string& kind = e.tokens[0];
  if (kind == "constant") {
    need(e, 1 + static_cast<std::size_t>(dim), "drift constant");
    auto b = to_reals(e, 1);
    out.fn = [b](double, std::span<const double>, std::span<double> o) {
      std::copy(b.begin(), b.end(), o.begin());
    };
    out.canon = "constant";
    for (double v : b) out.canon += " " + fmt(v);
  } else if (kind == "affine") {
    need(e, 1 + 2 * static_cast<std::size_t>(dim), "drift affine");
    auto cg = to_reals(e, 1);
    out.fn = [cg, dim](double, std::span<const double> x, std::span<double> o) {
      for (int i = 0; i < dim; ++i)
        o[static_cast<std::size_t>(i)] =
            cg[2 * static_cast<std::size_t>(i)] + cg[2 * static_cast<std::size_t>(i) + 1] * x[i];
    };
    for (int i = 0; i < dim; ++i)
      out.lipschitz = std::max(out.lipschitz, std::abs(cg[2 * static_cast<std::size_t>(i) + 1]));
    out.canon = "affine";
    for (double v : cg) out.canon += " " + fmt(v);
  } else if (kind == "trig_x") {
    need(e, 3, "drift trig_x");
    const double amp = to_real(e, e.tokens[1]), freq = to_real(e, e.tokens[2]);
    out.fn = [amp, freq, dim](double, std::span<const double> x, std::span<double> o) {
      for (int i = 0; i < dim; ++i) o[static_cast<std::size_t>(i)] = amp * std::sin(freq * x[i]);
    };
    out.lipschitz = std::abs(amp * freq);
    out.canon = "trig_x " + fmt(amp) + " " + fmt(freq);
  } else if (kind == "trig_t") {
    need(e, 3, "drift trig_t");
    const double amp = to_real(e, e.tokens[1]), freq = to_real(e, e.tokens[2]);
    out.fn = [amp, freq, dim](double t, std::span<const double>, std::span<double> o) {
      for (int i = 0; i < dim; ++i) o[static_cast<std::size_t>(i)] = amp * std::sin(freq * t);
    };
    out.time_k = std::abs(amp * freq);
    out.canon = "trig_t " + fmt(amp) + " " + fmt(freq);
  } else if (kind == "poly_t") {
    if (e.tokens.size() < 2) fail(e.line, "drift poly_t needs coefficients");
    Poly p{to_reals(e, 1)};
    out.fn = [p, dim](double t, std::span<const double>, std::span<double> o) {
      const double v = p(t);
      for (int i = 0; i < dim; ++i) o[static_cast<std::size_t>(i)] = v;
    };
    out.time_k = p.deriv_bound(horizon);
    out.canon = "poly_t";
    for (double v : p.c) out.canon += " " + fmt(v);
  } else if (kind == "table_t") {
    Table tb = parse_table(e);
    out.time_k = tb.max_slope();
    out.fn = [tb, dim](double t, std::span<const double>, std::span<double> o) {
      const double v = tb(t);
      for (int i = 0; i < dim; ++i) o[static_cast<std::size_t>(i)] = v;
    };
    out.canon = "table_t";
    for (std::size_t j = 0; j < tb.t.size(); ++j)
      out.canon += " " + fmt(tb.t[j]) + " " + fmt(tb.v[j]);
  } else {
    fail(e.line, "unknown drift preset '" + kind + "'");
  }
  return out;
}

struct SigmaSpec {
  MatrixField fn;
  double ellipticity = 0.0;
  double time_k = 0.0;
  std::string canon;
};

SigmaSpec build_sigma(const Entry& e, int dim, double horizon) {
  SigmaSpec out;
  const std::string& kind = e.tokens[0];
  auto scaled_identity = [dim](auto scale) {
    return [scale, dim](double t, std::span<const double>, std::span<double> o) {
      const double s = scale(t);
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
          o[static_cast<std::size_t>(i) * dim + j] = (i == j) ? s : 0.0;
    };
  };
  if (kind == "constant") {
    need(e, 2, "sigma constant");
    const double s = to_real(e, e.tokens[1]);
    if (!(s > 0)) fail(e.line, "sigma scale must be positive");
    out.fn = scaled_identity([s](double) { return s; });
    out.ellipticity = s * s;
    out.canon = "constant " + fmt(s);
  } else if (kind == "diag") {
    need(e, 1 + static_cast<std::size_t>(dim), "sigma diag");
    auto s = to_reals(e, 1);
    double mn = s[0];
    for (double v : s) {
      if (!(v > 0)) fail(e.line, "sigma diagonal entries must be positive");
      mn = std::min(mn, v);
    }
    out.fn = [s, dim](double, std::span<const double>, std::span<double> o) {
      for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j)
          o[static_cast<std::size_t>(i) * dim + j] = (i == j) ? s[static_cast<std::size_t>(i)] : 0.0;
    };
    out.ellipticity = mn * mn;
    out.canon = "diag";
    for (double v : s) out.canon += " " + fmt(v);
  } else if (kind == "poly_t") {
    if (e.tokens.size() < 2) fail(e.line, "sigma poly_t needs coefficients");
    Poly p{to_reals(e, 1)};
    out.time_k = p.deriv_bound(horizon);
    // rigorous scale floor: sampled minimum minus the derivative bound over
    // one sampling step
    const int n = 2048;
    double mn = p(0.0);
    for (int i = 1; i <= n; ++i) mn = std::min(mn, p(horizon * i / n));
    mn -= out.time_k * horizon / n;
    if (!(mn > 0)) fail(e.line, "sigma poly_t must stay positive on [0, horizon]");
    out.fn = scaled_identity([p](double t) { return p(t); });
    out.ellipticity = mn * mn;
    out.canon = "poly_t";
    for (double v : p.c) out.canon += " " + fmt(v);
  } else if (kind == "table_t") {
    Table tb = parse_table(e);
    double mn = tb.v[0];
    for (double v : tb.v) mn = std::min(mn, v);  // piecewise linear: extrema at nodes
    if (!(mn > 0)) fail(e.line, "sigma table_t values must be positive");
    out.time_k = tb.max_slope();
    out.fn = scaled_identity([tb](double t) { return tb(t); });
    out.ellipticity = mn * mn;
    out.canon = "table_t";
    for (std::size_t j = 0; j < tb.t.size(); ++j)
      out.canon += " " + fmt(tb.t[j]) + " " + fmt(tb.v[j]);
  } else {
    fail(e.line, "unknown sigma preset '" + kind + "'");
  }
  return out;
}

struct DataSpec {
  ScalarField fn;
  std::string canon;
};

DataSpec build_data(const Entry& e, int dim, const std::vector<double>& domain_center) {
  DataSpec out;
  const std::string& kind = e.tokens[0];
  if (kind == "constant") {
    need(e, 2, "data constant");
    const double v = to_real(e, e.tokens[1]);
    out.fn = constant_data(v);
    out.canon = "constant " + fmt(v);
  } else if (kind == "affine") {
    need(e, 2 + static_cast<std::size_t>(dim), "data affine");
    const double c = to_real(e, e.tokens[1]);
    auto a = to_reals(e, 2);
    out.fn = [c, a](double, std::span<const double> x) {
      double v = c;
      for (std::size_t i = 0; i < a.size(); ++i) v += a[i] * x[i];
      return v;
    };
    out.canon = "affine " + fmt(c);
    for (double v : a) out.canon += " " + fmt(v);
  } else if (kind == "bump") {
    if (e.tokens.size() != 4 && e.tokens.size() != 4 + static_cast<std::size_t>(dim))
      fail(e.line, "data bump: BASE AMP WIDTH [CENTER...]");
    const double base = to_real(e, e.tokens[1]);
    const double amp = to_real(e, e.tokens[2]);
    const double width = to_real(e, e.tokens[3]);
    if (!(width > 0)) fail(e.line, "bump width must be positive");
    std::vector<double> center =
        e.tokens.size() > 4 ? to_reals(e, 4) : domain_center;
    out.fn = [base, amp, width, center](double, std::span<const double> x) {
      double q = 0;
      for (std::size_t i = 0; i < center.size(); ++i) {
        const double g = x[i] - center[i];
        q += g * g;
      }
      return base + amp * std::exp(-q / (width * width));
    };
    out.canon = "bump " + fmt(base) + " " + fmt(amp) + " " + fmt(width);
    for (double v : center) out.canon += " " + fmt(v);
  } else {
    fail(e.line, "unknown data preset '" + kind + "'");
  }
  return out;
}

}  // namespace

void refresh_digest(RunConfig& rc) {
  std::string c = rc.problem_canonical;
  c += "paths=" + std::to_string(rc.paths) + "\n";
  c += "steps=" + std::to_string(rc.steps) + "\n";
  c += "k=" + std::to_string(rc.k) + "\n";
  c += "seed=" + std::to_string(rc.seed) + "\n";
  c += "eps=" + fmt(rc.eps) + "\n";
  c += "delta=" + fmt(rc.delta) + "\n";
  c += "t_eval=" + fmt(rc.t_eval) + "\n";
  c += "x_eval=";
  for (std::size_t i = 0; i < rc.x_eval.size(); ++i)
    c += (i ? " " : "") + fmt(rc.x_eval[i]);
  c += "\n";
  rc.canonical = std::move(c);
  rc.digest = digest_string(rc.canonical);
}

RunConfig parse_config(std::string_view text) {
  auto entries = tokenize(text);
  auto require = [&](const char* key) -> const Entry& {
    const auto it = entries.find(key);
    if (it == entries.end()) throw ConfigParse(std::string("missing required key '") + key + "'");
    return it->second;
  };

  RunConfig rc;

  const Entry& edim = require("dim");
  need(edim, 1, "dim");
  const long long dim_ll = to_int(edim, edim.tokens[0]);
  if (dim_ll < 1 || dim_ll > 8) fail(edim.line, "dim must be between 1 and 8");
  const int dim = static_cast<int>(dim_ll);

  const Entry& edom = require("domain");
  const std::string& dkind = edom.tokens[0];
  std::string domain_canon;
  if (dkind == "interval") {
    if (dim != 1) fail(edom.line, "interval domains are one-dimensional");
    need(edom, 3, "domain interval");
    const double lo = to_real(edom, edom.tokens[1]), hi = to_real(edom, edom.tokens[2]);
    if (!(lo < hi)) fail(edom.line, "interval needs lo < hi");
    rc.spec.domain = DomainSpec::hyperrectangle({lo}, {hi});
    domain_canon = "interval " + fmt(lo) + " " + fmt(hi);
  } else if (dkind == "box") {
    need(edom, 1 + 2 * static_cast<std::size_t>(dim), "domain box");
    auto b = to_reals(edom, 1);
    std::vector<double> lo(static_cast<std::size_t>(dim)), hi(static_cast<std::size_t>(dim));
    for (int i = 0; i < dim; ++i) {
      lo[static_cast<std::size_t>(i)] = b[2 * static_cast<std::size_t>(i)];
      hi[static_cast<std::size_t>(i)] = b[2 * static_cast<std::size_t>(i) + 1];
      if (!(lo[static_cast<std::size_t>(i)] < hi[static_cast<std::size_t>(i)]))
        fail(edom.line, "box needs lo < hi on every axis");
    }
    rc.spec.domain = DomainSpec::hyperrectangle(lo, hi);
    domain_canon = "box";
    for (double v : b) domain_canon += " " + fmt(v);
  } else if (dkind == "ball") {
    need(edom, 2 + static_cast<std::size_t>(dim), "domain ball");
    auto b = to_reals(edom, 1);
    const double radius = b.back();
    b.pop_back();
    if (!(radius > 0)) fail(edom.line, "ball radius must be positive");
    rc.spec.domain = DomainSpec::ball(b, radius);
    domain_canon = "ball";
    for (double v : b) domain_canon += " " + fmt(v);
    domain_canon += " " + fmt(radius);
  } else {
    fail(edom.line, "unknown domain kind '" + dkind + "'");
  }

  const Entry& eh0 = require("hurst_time");
  need(eh0, 1, "hurst_time");
  const Entry& ehs = require("hurst_space");
  need(ehs, static_cast<std::size_t>(dim), "hurst_space");
  rc.spec.hurst.h0 = to_real(eh0, eh0.tokens[0]);
  rc.spec.hurst.h_space = to_reals(ehs);

  const Entry& ehor = require("horizon");
  need(ehor, 1, "horizon");
  rc.spec.horizon = to_real(ehor, ehor.tokens[0]);
  if (!(rc.spec.horizon > 0)) fail(ehor.line, "horizon must be positive");

  rc.spec.product = ProductType::stratonovich;
  std::string product_canon = "stratonovich";
  if (const auto it = entries.find("product"); it != entries.end()) {
    need(it->second, 1, "product");
    const std::string& p = it->second.tokens[0];
    if (p == "stratonovich")
      rc.spec.product = ProductType::stratonovich;
    else if (p == "skorohod")
      rc.spec.product = ProductType::skorohod;
    else
      fail(it->second.line, "product must be stratonovich or skorohod");
    product_canon = p;
  }

  std::vector<double> center(static_cast<std::size_t>(dim), 0.0);
  if (rc.spec.domain.kind == DomainSpec::Kind::hyperrectangle) {
    for (int i = 0; i < dim; ++i)
      center[static_cast<std::size_t>(i)] =
          0.5 * (rc.spec.domain.lo[static_cast<std::size_t>(i)] +
                 rc.spec.domain.hi[static_cast<std::size_t>(i)]);
  } else {
    center = rc.spec.domain.center;
  }

  const DriftSpec drift = build_drift(require("drift"), dim, rc.spec.horizon);
  const SigmaSpec sigma = build_sigma(require("sigma"), dim, rc.spec.horizon);
  const DataSpec data = build_data(require("data"), dim, center);
  rc.spec.coeffs = make_coeffs(drift.fn, sigma.fn, sigma.ellipticity, drift.lipschitz,
                               std::max(drift.time_k, sigma.time_k), 1.0);
  rc.spec.data_h = data.fn;

  // budgets
  auto opt_int = [&](const char* key, long long lo, long long hi, auto assign) {
    if (const auto it = entries.find(key); it != entries.end()) {
      need(it->second, 1, key);
      const long long v = to_int(it->second, it->second.tokens[0]);
      if (v < lo || v > hi)
        throw ValidationFailed(std::string(key) + " must lie in [" + std::to_string(lo) + ", " +
                               std::to_string(hi) + "]");
      assign(v);
    }
  };
  auto opt_real = [&](const char* key, auto assign) {
    if (const auto it = entries.find(key); it != entries.end()) {
      need(it->second, 1, key);
      assign(to_real(it->second, it->second.tokens[0]));
    }
  };
  opt_int("paths", 1, 1000000000, [&](long long v) { rc.paths = static_cast<long>(v); });
  opt_int("steps", 1, 10000000, [&](long long v) { rc.steps = static_cast<int>(v); });
  opt_int("k", 1, 64, [&](long long v) { rc.k = static_cast<int>(v); });
  opt_int("workers", 0, 4096, [&](long long v) { rc.workers = static_cast<int>(v); });
  if (const auto it = entries.find("seed"); it != entries.end()) {
    need(it->second, 1, "seed");
    const long long v = to_int(it->second, it->second.tokens[0]);
    if (v < 0) throw ValidationFailed("seed must be nonnegative");
    rc.seed = static_cast<std::uint64_t>(v);
  }
  opt_real("eps", [&](double v) { rc.eps = v; });
  opt_real("delta", [&](double v) { rc.delta = v; });
  opt_real("t_eval", [&](double v) { rc.t_eval = v; });
  if (const auto it = entries.find("x_eval"); it != entries.end()) {
    need(it->second, static_cast<std::size_t>(dim), "x_eval");
    rc.x_eval = to_reals(it->second);
  } else {
    rc.x_eval = center;
  }

  // semantic validation: the model's own checks first, then budget sanity
  rc.spec.validate();
  if (!(rc.eps > 0) || !(rc.delta > 0)) throw ValidationFailed("eps and delta must be positive");
  if (!(rc.t_eval > 0) || rc.t_eval > rc.spec.horizon + 1e-12)
    throw ValidationFailed("t_eval must lie in (0, horizon]");
  if (rc.spec.domain.classify(rc.x_eval) != Containment::interior)
    throw ValidationFailed("x_eval must be an interior point");

  std::string pc;
  pc += "dim=" + std::to_string(dim) + "\n";
  pc += "domain=" + domain_canon + "\n";
  pc += "hurst_time=" + fmt(rc.spec.hurst.h0) + "\n";
  pc += "hurst_space=";
  for (std::size_t i = 0; i < rc.spec.hurst.h_space.size(); ++i)
    pc += (i ? " " : "") + fmt(rc.spec.hurst.h_space[i]);
  pc += "\n";
  pc += "product=" + product_canon + "\n";
  pc += "horizon=" + fmt(rc.spec.horizon) + "\n";
  pc += "data=" + data.canon + "\n";
  pc += "drift=" + drift.canon + "\n";
  pc += "sigma=" + sigma.canon + "\n";
  rc.problem_canonical = std::move(pc);
  refresh_digest(rc);
  return rc;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigParse("cannot open spec file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

}  // namespace fkmc
