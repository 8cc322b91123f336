#include "fkmc/noisefield.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <numeric>

#include "fkmc/kernels.hpp"
#include "fkmc/parallel.hpp"
#include "fkmc/rng.hpp"

namespace fkmc {

namespace {

constexpr std::size_t kMaxAxisNodes = 4096;
constexpr std::size_t kMaxTotalNodes = std::size_t{1} << 22;
constexpr double kSpatialCutoffSigmas = 6.0;
const char kSheetMagic[8] = {'F', 'K', 'S', 'H', '0', '0', '0', '1'};

double fbm_cov(double hurst, double s, double t) {
  const double p = 2.0 * hurst;
  return 0.5 * (std::pow(std::abs(s), p) + std::pow(std::abs(t), p) -
                std::pow(std::abs(t - s), p));
}

// covariance of rectangular increments over [a,b] and [c,d] along one axis
double increment_cov(double hurst, double a, double b, double c, double d) {
  return fbm_cov(hurst, b, d) - fbm_cov(hurst, b, c) - fbm_cov(hurst, a, d) +
         fbm_cov(hurst, a, c);
}

std::vector<double> axis_midpoints(const std::vector<double>& nodes) {
  std::vector<double> mid(nodes.size() - 1);
  for (std::size_t i = 0; i + 1 < nodes.size(); ++i) mid[i] = 0.5 * (nodes[i] + nodes[i + 1]);
  return mid;
}

// apply a dense (rows x cols) matrix along one tensor axis; dims holds the
// per-axis extents of the input, which the call updates in place
std::vector<double> mode_apply(const std::vector<double>& in, std::vector<std::size_t>& dims,
                               int axis, const double* mat, std::size_t rows, std::size_t cols) {
  std::size_t inner = 1, outer = 1;
  for (int k = axis + 1; k < static_cast<int>(dims.size()); ++k) inner *= dims[k];
  for (int k = 0; k < axis; ++k) outer *= dims[k];
  std::vector<double> out(outer * rows * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r) {
      double* dst = out.data() + (o * rows + r) * inner;
      const double* mrow = mat + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        const double m = mrow[c];
        if (m == 0.0) continue;
        const double* src = in.data() + (o * cols + c) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += m * src[i];
      }
    }
  dims[axis] = rows;
  return out;
}

struct CellLayout {
  std::vector<std::size_t> dims;  // cells per axis
  std::size_t total = 1;
  explicit CellLayout(const TensorGrid& g) {
    for (const auto& ax : g.axes) dims.push_back(ax.size() - 1);
    for (auto d : dims) total *= d;
  }
};

// weight of the reflected rectangular time window at a cell midpoint
double time_window_weight(double w, double rbar, double delta) {
  double tk = 0.0;
  const double v1 = w - rbar;
  if (v1 >= 0.0 && v1 <= delta) tk += 1.0 / delta;
  const double v2 = w + rbar;
  if (v2 >= 0.0 && v2 <= delta) tk += 1.0 / delta;
  return tk;
}

double gauss_kernel(double v, double eps) {
  return std::exp(-v * v / (2.0 * eps)) / std::sqrt(2.0 * M_PI * eps);
}

// enumerate every sheet cell whose product kernel weight at (w, x) is nonzero
template <class Fn>
void for_each_weighted_cell(const TensorGrid& grid,
                            const std::vector<std::vector<double>>& midpoints,
                            const MollifierParams& m, double w, std::span<const double> x,
                            Fn&& fn) {
  const auto& tm = midpoints[0];
  const double cutoff = kSpatialCutoffSigmas * std::sqrt(m.eps);
  const int d = grid.dim_space();

  // time cells intersecting [w - delta, w] or the reflection [-w, delta - w]
  const double lo_t = std::min(w - m.delta, -w);
  const double hi_t = std::max(w, m.delta - w);
  const auto t0 = std::lower_bound(tm.begin(), tm.end(), lo_t) - tm.begin();
  const auto t1 = std::upper_bound(tm.begin(), tm.end(), hi_t) - tm.begin();

  // per-axis spatial windows and cell-tensor strides: stride[0] moves the
  // time index, stride[k+1] moves space axis k, the last axis is contiguous
  std::vector<std::pair<std::size_t, std::size_t>> win(d);
  std::vector<std::size_t> stride(d + 1, 1);
  for (int k = d - 1; k >= 0; --k) stride[k] = stride[k + 1] * (grid.axes[k + 1].size() - 1);

  // spatial kernel values depend only on the per-axis index, so they are
  // evaluated once per axis here instead of once per (time, space) tuple
  std::vector<std::vector<double>> gk(d);
  for (int k = 0; k < d; ++k) {
    const auto& xm = midpoints[k + 1];
    const auto a = std::lower_bound(xm.begin(), xm.end(), x[k] - cutoff) - xm.begin();
    const auto b = std::upper_bound(xm.begin(), xm.end(), x[k] + cutoff) - xm.begin();
    if (a >= b) return;
    win[k] = {static_cast<std::size_t>(a), static_cast<std::size_t>(b)};
    gk[k].resize(static_cast<std::size_t>(b - a));
    for (auto i = a; i < b; ++i)
      gk[k][static_cast<std::size_t>(i - a)] = gauss_kernel(x[k] - xm[static_cast<std::size_t>(i)], m.eps);
  }

  std::vector<std::size_t> idx(d);
  for (auto ti = static_cast<std::size_t>(t0); ti < static_cast<std::size_t>(t1); ++ti) {
    const double tk = time_window_weight(w, tm[ti], m.delta);
    if (tk == 0.0) continue;
    for (int k = 0; k < d; ++k) idx[k] = win[k].first;
    while (true) {
      double wgt = tk;
      std::size_t flat = ti * stride[0];
      for (int k = 0; k < d; ++k) {
        wgt *= gk[k][idx[k] - win[k].first];
        flat += idx[k] * stride[k + 1];
      }
      fn(flat, wgt);
      int k = d - 1;
      for (; k >= 0; --k) {
        if (++idx[k] < win[k].second) break;
        idx[k] = win[k].first;
      }
      if (k < 0) break;
    }
  }
}

void check_noise_coverage(const TensorGrid& grid, const MollifierParams& m, double w,
                          std::span<const double> x) {
  if (static_cast<int>(x.size()) != grid.dim_space())
    throw DimensionMismatch("evaluation point dimension does not match the sheet grid");
  if (w < -1e-12) throw OutOfCoverage("negative time argument for the mollified field");
  if (w > grid.axes[0].back() + 1e-12)
    throw OutOfCoverage("time argument beyond the sampled sheet horizon");
  const double cutoff = kSpatialCutoffSigmas * std::sqrt(m.eps);
  for (int k = 0; k < grid.dim_space(); ++k) {
    if (x[k] - cutoff < grid.axes[k + 1].front() - 1e-12 ||
        x[k] + cutoff > grid.axes[k + 1].back() + 1e-12)
      throw OutOfCoverage("spatial kernel support leaves the sampled sheet window");
  }
}

void check_mollifier(const MollifierParams& m) {
  if (!(m.eps > 0.0) || !(m.delta > 0.0))
    throw DegenerateGrid("mollifier widths must be positive");
}

double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
               double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) < 15.0 * tol) {
    return left + right + (left + right - whole) / 15.0;
  }
  return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

double integrate(const std::function<double(double)>& f, double a, double b, double tol) {
  const double m = 0.5 * (a + b);
  const double fa = f(a), fm = f(m), fb = f(b);
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson(f, a, b, fa, fm, fb, whole, tol, 40);
}

}  // namespace

std::size_t TensorGrid::node_count() const {
  std::size_t n = 1;
  for (const auto& ax : axes) n *= ax.size();
  return n;
}

std::size_t TensorGrid::cell_count() const {
  std::size_t n = 1;
  for (const auto& ax : axes) n *= ax.size() - 1;
  return n;
}

void TensorGrid::validate() const {
  if (axes.empty()) throw DegenerateGrid("tensor grid needs at least the time axis");
  for (const auto& ax : axes) {
    if (ax.size() < 2) throw DegenerateGrid("every grid axis needs at least 2 nodes");
    if (ax.size() > kMaxAxisNodes)
      throw DegenerateGrid("axis too large for dense covariance factorization");
    for (std::size_t i = 1; i < ax.size(); ++i)
      if (!(ax[i] > ax[i - 1])) throw DegenerateGrid("grid axes must be strictly increasing");
  }
  if (node_count() > kMaxTotalNodes)
    throw DegenerateGrid("total grid size exceeds the dense-sampling limit");
}

TensorGrid TensorGrid::uniform(double t_max, int nt,
                               std::span<const std::pair<double, double>> space_ranges, int nx) {
  if (nt < 2 || nx < 2) throw DegenerateGrid("uniform grid needs at least 2 nodes per axis");
  if (!(t_max > 0)) throw DegenerateGrid("time horizon must be positive");
  TensorGrid g;
  std::vector<double> t(nt);
  for (int i = 0; i < nt; ++i) t[i] = t_max * i / (nt - 1);
  t[0] = 0.0;
  g.axes.push_back(std::move(t));
  for (const auto& [lo, hi] : space_ranges) {
    if (!(hi > lo)) throw DegenerateGrid("space range must have positive width");
    std::vector<double> xs(nx);
    for (int i = 0; i < nx; ++i) xs[i] = lo + (hi - lo) * i / (nx - 1);
    g.axes.push_back(std::move(xs));
  }
  g.validate();
  return g;
}

double SheetSample::at(std::span<const int> idx) const {
  if (static_cast<int>(idx.size()) != grid.n_axes())
    throw DimensionMismatch("index rank does not match the grid");
  std::size_t flat = 0;
  for (int k = 0; k < grid.n_axes(); ++k) {
    if (idx[k] < 0 || idx[k] >= static_cast<int>(grid.axes[k].size()))
      throw OutOfCoverage("node index outside the grid");
    flat = flat * grid.axes[k].size() + idx[k];
  }
  return values[flat];
}

namespace detail {

std::vector<double> cholesky_with_jitter(std::vector<double> m, int n) {
  Eigen::Map<Eigen::MatrixXd> a(m.data(), n, n);
  double trace = 0;
  for (int i = 0; i < n; ++i) trace += a(i, i);
  const double jitter = 1e-12 * trace / n;
  for (int attempt = 0; attempt <= 3; ++attempt) {
    if (attempt > 0) a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd l = llt.matrixL();
      std::vector<double> out(static_cast<std::size_t>(n) * n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j <= i; ++j) out[static_cast<std::size_t>(i) * n + j] = l(i, j);
      return out;
    }
  }
  throw FactorizationFailure("axis covariance stayed indefinite after jitter retries");
}

}  // namespace detail

SheetSampler::SheetSampler(TensorGrid grid, HurstParams hurst)
    : grid_(std::move(grid)), hurst_(std::move(hurst)) {
  grid_.validate();
  hurst_.validate(grid_.dim_space());
  const std::vector<double> hs = [&] {
    std::vector<double> v{hurst_.h0};
    v.insert(v.end(), hurst_.h_space.begin(), hurst_.h_space.end());
    return v;
  }();
  factors_.resize(grid_.n_axes());
  nonzero_idx_.resize(grid_.n_axes());
  for (int k = 0; k < grid_.n_axes(); ++k) {
    const auto& ax = grid_.axes[k];
    for (int i = 0; i < static_cast<int>(ax.size()); ++i)
      if (ax[i] != 0.0) nonzero_idx_[k].push_back(i);
    const int nz = static_cast<int>(nonzero_idx_[k].size());
    if (nz == 0) continue;  // an axis of only the origin: the sheet is zero
    std::vector<double> cov(static_cast<std::size_t>(nz) * nz);
    for (int i = 0; i < nz; ++i)
      for (int j = 0; j < nz; ++j)
        cov[static_cast<std::size_t>(i) * nz + j] =
            fbm_cov(hs[k], ax[nonzero_idx_[k][i]], ax[nonzero_idx_[k][j]]);
    factors_[k] = detail::cholesky_with_jitter(std::move(cov), nz);
  }
}

SheetSample SheetSampler::sample(std::uint64_t seed) const {
  SheetSample s;
  s.grid = grid_;
  s.hurst = hurst_;
  s.seed = seed;

  std::vector<std::size_t> dims;
  std::size_t compact_total = 1;
  for (const auto& nz : nonzero_idx_) {
    dims.push_back(nz.size());
    compact_total *= nz.size();
  }
  GaussianStream gs(seed);
  std::vector<double> w(compact_total);
  for (auto& v : w) v = gs.gaussian();
  for (int k = 0; k < grid_.n_axes(); ++k) {
    const std::size_t nz = nonzero_idx_[k].size();
    if (nz == 0) {
      w.assign(1, 0.0);
      break;
    }
    w = mode_apply(w, dims, k, factors_[k].data(), nz, nz);
  }

  // embed with exact zeros at origin-coordinate slices
  s.values.assign(grid_.node_count(), 0.0);
  if (compact_total == 0) return s;
  std::vector<std::size_t> cidx(grid_.n_axes(), 0);
  for (std::size_t flat = 0; flat < compact_total; ++flat) {
    std::size_t full = 0;
    for (int k = 0; k < grid_.n_axes(); ++k)
      full = full * grid_.axes[k].size() + nonzero_idx_[k][cidx[k]];
    s.values[full] = w[flat];
    for (int k = grid_.n_axes() - 1; k >= 0; --k) {
      if (++cidx[k] < nonzero_idx_[k].size()) break;
      cidx[k] = 0;
    }
  }
  return s;
}

SheetSample sample_sheet(const TensorGrid& grid, const HurstParams& hurst, std::uint64_t seed) {
  return SheetSampler(grid, hurst).sample(seed);
}

std::vector<SheetSample> sample_sheets(const TensorGrid& grid, const HurstParams& hurst,
                                       std::uint64_t master_seed, int k, int workers) {
  if (k < 1) throw InsufficientSamples("sheet count must be >= 1");
  SheetSampler sampler(grid, hurst);
  std::vector<SheetSample> out(k);
  parallel_for(k, workers, [&](std::int64_t j) {
    out[j] = sampler.sample(derive_seed(master_seed, static_cast<std::uint64_t>(j)));
  });
  return out;
}

void save_sheet(const std::string& filename, const SheetSample& sheet) {
  std::FILE* f = std::fopen(filename.c_str(), "wb");
  if (!f) throw Error("cannot open " + filename + " for writing");
  std::fwrite(kSheetMagic, 1, 8, f);
  const std::uint32_t n_axes = sheet.grid.n_axes();
  std::fwrite(&n_axes, sizeof n_axes, 1, f);
  for (const auto& ax : sheet.grid.axes) {
    const std::uint64_t n = ax.size();
    std::fwrite(&n, sizeof n, 1, f);
    std::fwrite(ax.data(), sizeof(double), ax.size(), f);
  }
  std::fwrite(&sheet.hurst.h0, sizeof(double), 1, f);
  const std::uint32_t d = sheet.hurst.dim();
  std::fwrite(&d, sizeof d, 1, f);
  std::fwrite(sheet.hurst.h_space.data(), sizeof(double), d, f);
  std::fwrite(&sheet.seed, sizeof sheet.seed, 1, f);
  const std::uint64_t nv = sheet.values.size();
  std::fwrite(&nv, sizeof nv, 1, f);
  std::fwrite(sheet.values.data(), sizeof(double), sheet.values.size(), f);
  if (std::fclose(f) != 0) throw Error("failed to finalize " + filename);
}

SheetSample load_sheet(const std::string& filename) {
  std::FILE* f = std::fopen(filename.c_str(), "rb");
  if (!f) throw Error("cannot open " + filename);
  auto fail = [&](const char* what) {
    std::fclose(f);
    throw ConfigParse(std::string("sheet blob ") + filename + ": " + what);
  };
  char magic[8];
  if (std::fread(magic, 1, 8, f) != 8 || std::memcmp(magic, kSheetMagic, 8) != 0)
    fail("bad magic");
  SheetSample s;
  std::uint32_t n_axes = 0;
  if (std::fread(&n_axes, sizeof n_axes, 1, f) != 1 || n_axes == 0 || n_axes > 16)
    fail("bad axis count");
  s.grid.axes.resize(n_axes);
  for (auto& ax : s.grid.axes) {
    std::uint64_t n = 0;
    if (std::fread(&n, sizeof n, 1, f) != 1 || n < 2 || n > kMaxAxisNodes) fail("bad axis size");
    ax.resize(n);
    if (std::fread(ax.data(), sizeof(double), n, f) != n) fail("truncated axis nodes");
  }
  std::uint32_t d = 0;
  if (std::fread(&s.hurst.h0, sizeof(double), 1, f) != 1) fail("missing temporal index");
  if (std::fread(&d, sizeof d, 1, f) != 1 || d + 1 != n_axes) fail("bad spatial index count");
  s.hurst.h_space.resize(d);
  if (std::fread(s.hurst.h_space.data(), sizeof(double), d, f) != d) fail("missing indices");
  if (std::fread(&s.seed, sizeof s.seed, 1, f) != 1) fail("missing seed");
  std::uint64_t nv = 0;
  if (std::fread(&nv, sizeof nv, 1, f) != 1 || nv != s.grid.node_count()) fail("bad value count");
  s.values.resize(nv);
  if (std::fread(s.values.data(), sizeof(double), nv, f) != nv) fail("truncated values");
  std::fclose(f);
  s.grid.validate();
  return s;
}

SmoothedNoise::SmoothedNoise(const SheetSample& sheet, MollifierParams m)
    : grid_(sheet.grid), m_(m) {
  grid_.validate();
  check_mollifier(m_);
  if (grid_.axes[0].front() != 0.0)
    throw DegenerateGrid("sheet time axis must start at 0 for the reflected window");
  if (grid_.axes[0].back() < m_.delta)
    throw DegenerateGrid("sheet horizon shorter than the mollifier window");
  for (const auto& ax : grid_.axes) midpoints_.push_back(axis_midpoints(ax));

  // rectangular increments: difference successively along each axis
  std::vector<std::size_t> dims;
  for (const auto& ax : grid_.axes) dims.push_back(ax.size());
  dw_ = sheet.values;
  for (int k = 0; k < grid_.n_axes(); ++k) {
    std::size_t inner = 1, outer = 1;
    for (int j = k + 1; j < grid_.n_axes(); ++j) inner *= dims[j];
    for (int j = 0; j < k; ++j) outer *= dims[j];
    const std::size_t nk = dims[k];
    std::vector<double> out(outer * (nk - 1) * inner);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t i = 0; i + 1 < nk; ++i) {
        const double* hi = dw_.data() + (o * nk + i + 1) * inner;
        const double* lo = dw_.data() + (o * nk + i) * inner;
        double* dst = out.data() + (o * (nk - 1) + i) * inner;
        for (std::size_t t = 0; t < inner; ++t) dst[t] = hi[t] - lo[t];
      }
    dw_ = std::move(out);
    dims[k] = nk - 1;
  }
}

double SmoothedNoise::operator()(double t, std::span<const double> x) const {
  check_noise_coverage(grid_, m_, t, x);
  double acc = 0.0;
  for_each_weighted_cell(grid_, midpoints_, m_, t, x,
                         [&](std::size_t cell, double wgt) { acc += wgt * dw_[cell]; });
  return acc;
}

std::vector<double> path_coefficients(const KilledPath& path, const TensorGrid& grid,
                                      MollifierParams m, double t_eval) {
  grid.validate();
  check_mollifier(m);
  if (grid.axes[0].front() != 0.0)
    throw DegenerateGrid("sheet time axis must start at 0 for the reflected window");
  if (path.dim != grid.dim_space())
    throw DimensionMismatch("path dimension does not match the sheet grid");
  std::vector<std::vector<double>> midpoints;
  for (const auto& ax : grid.axes) midpoints.push_back(axis_midpoints(ax));

  CellLayout layout(grid);
  std::vector<double> c(layout.total, 0.0);
  const double dt = path.dt();
  std::vector<double> xbar(path.dim);
  for (int i = 0; i < path.active_cells(); ++i) {
    const double sbar = 0.5 * (path.times[i] + path.times[i + 1]);
    const double w = t_eval - sbar;
    auto lo = path.state(i), hi = path.state(i + 1);
    for (int k = 0; k < path.dim; ++k) xbar[k] = 0.5 * (lo[k] + hi[k]);
    check_noise_coverage(grid, m, w, xbar);
    for_each_weighted_cell(grid, midpoints, m, w, xbar,
                           [&](std::size_t cell, double wgt) { c[cell] += dt * wgt; });
  }
  return c;
}

double pathwise_v_regularized(const KilledPath& path, const SmoothedNoise& noise, double t_eval) {
  if (path.dim != noise.grid().dim_space())
    throw DimensionMismatch("path dimension does not match the sheet grid");
  double acc = 0.0;
  const double dt = path.dt();
  std::vector<double> xbar(path.dim);
  for (int i = 0; i < path.active_cells(); ++i) {
    const double sbar = 0.5 * (path.times[i] + path.times[i + 1]);
    auto lo = path.state(i), hi = path.state(i + 1);
    for (int k = 0; k < path.dim; ++k) xbar[k] = 0.5 * (lo[k] + hi[k]);
    acc += dt * noise(t_eval - sbar, xbar);
  }
  return acc;
}

double conditional_variance_exact(const KilledPath& path, const TensorGrid& grid,
                                  const HurstParams& hurst, MollifierParams m, double t_eval) {
  hurst.validate(grid.dim_space());
  const std::vector<double> c = path_coefficients(path, grid, m, t_eval);
  const std::vector<double> hs = [&] {
    std::vector<double> v{hurst.h0};
    v.insert(v.end(), hurst.h_space.begin(), hurst.h_space.end());
    return v;
  }();

  CellLayout layout(grid);
  std::vector<double> v = c;
  std::vector<std::size_t> dims = layout.dims;
  for (int k = 0; k < grid.n_axes(); ++k) {
    const auto& ax = grid.axes[k];
    const std::size_t nc = ax.size() - 1;
    std::vector<double> cov(nc * nc);
    for (std::size_t i = 0; i < nc; ++i)
      for (std::size_t j = 0; j < nc; ++j)
        cov[i * nc + j] = increment_cov(hs[k], ax[i], ax[i + 1], ax[j], ax[j + 1]);
    v = mode_apply(v, dims, k, cov.data(), nc, nc);
  }
  double var = 0.0;
  for (std::size_t i = 0; i < c.size(); ++i) var += c[i] * v[i];
  return var;
}

namespace detail {

double mollified_spatial_kernel(double z, double hurst, double eps) {
  if (!(hurst > 0.5 && hurst < 1.0)) throw HurstOutOfRange("spatial index must lie in (1/2, 1)");
  if (!(eps > 0.0)) throw DegenerateGrid("mollifier widths must be positive");
  const double p = 2.0 * hurst - 2.0;  // in (-1, 0)
  const double q = 1.0 + p;            // in (0, 1)
  const double az = std::abs(z);
  const double sigma = std::sqrt(2.0 * eps);
  const double upper = std::pow(az + 10.0 * sigma, q);
  auto h = [&](double y) {
    const double u = std::pow(y, 1.0 / q);
    return gauss_kernel(u - az, sigma * sigma) + gauss_kernel(u + az, sigma * sigma);
  };
  // absolute tolerance scaled to the integral's magnitude (peak x width)
  const double tol = 1e-9 * (1.0 + gauss_kernel(0.0, sigma * sigma) * upper);
  // split at the lower edge of the Gaussian bump so the subdivision never
  // straddles a spike that is narrow relative to the whole interval
  const double lo = az > 10.0 * sigma ? std::pow(az - 10.0 * sigma, q) : 0.0;
  double acc = integrate(h, lo, upper, tol) / q;
  if (lo > 0.0) acc += integrate(h, 0.0, lo, tol) / q;
  return acc;
}

double mollified_time_kernel(double w, double wp, double h0, double delta) {
  if (!(delta > 0.0)) throw DegenerateGrid("mollifier widths must be positive");
  // the reflected window carries mass on [max(w-delta,0), w] and, when
  // w < delta, on [0, delta - w]
  auto intervals = [&](double t, std::array<std::pair<double, double>, 2>& iv) {
    int n = 0;
    const double a = std::max(t - delta, 0.0);
    if (t > a) iv[n++] = {a, t};
    if (delta - t > 0.0) iv[n++] = {0.0, delta - t};
    return n;
  };
  std::array<std::pair<double, double>, 2> iw, ip;
  const int nw = intervals(w, iw), np = intervals(wp, ip);
  double acc = 0.0;
  for (int i = 0; i < nw; ++i)
    for (int j = 0; j < np; ++j)
      acc += temporal_cell_integral(iw[i].first, iw[i].second, ip[j].first, ip[j].second, h0);
  return acc / (delta * delta);
}

}  // namespace detail

double conditional_variance_quadrature(const KilledPath& path, const HurstParams& hurst,
                                       MollifierParams m, double t_eval) {
  hurst.validate(path.dim);
  check_mollifier(m);
  const int n = path.active_cells();
  const double dt = path.dt();
  std::vector<double> w(n), xbar(static_cast<std::size_t>(n) * path.dim);
  for (int i = 0; i < n; ++i) {
    w[i] = t_eval - 0.5 * (path.times[i] + path.times[i + 1]);
    auto lo = path.state(i), hi = path.state(i + 1);
    for (int k = 0; k < path.dim; ++k)
      xbar[static_cast<std::size_t>(i) * path.dim + k] = 0.5 * (lo[k] + hi[k]);
  }
  double acc = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      double term = detail::mollified_time_kernel(w[i], w[j], hurst.h0, m.delta);
      for (int k = 0; k < path.dim; ++k)
        term *= detail::mollified_spatial_kernel(
            xbar[static_cast<std::size_t>(i) * path.dim + k] -
                xbar[static_cast<std::size_t>(j) * path.dim + k],
            hurst.h_space[k], m.eps);
      acc += (i == j ? 1.0 : 2.0) * term;
    }
  return hurst.kernel_prefactor() * acc * dt * dt;
}

}  // namespace fkmc
