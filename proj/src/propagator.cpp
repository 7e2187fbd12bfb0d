#include "xfwi/propagator.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "xfwi/error.hpp"

namespace xfwi {

namespace {

// Second-derivative weights, 4th order.
constexpr double kC0 = -5.0 / 2.0;
constexpr double kC1 = 4.0 / 3.0;
constexpr double kC2 = -1.0 / 12.0;
constexpr int kHalo = 2;

}  // namespace

double ricker_delay(double f_peak, double dt) { return std::ceil(1.5 / (f_peak * dt) - 1e-9) * dt; }

std::vector<double> ricker(double f_peak, int nt, double dt) {
  if (!(f_peak > 0.0)) throw ConfigError("ricker: f_peak must be positive");
  if (!(dt > 0.0) || nt < 1) throw ConfigError("ricker: need dt > 0 and nt >= 1");
  // Effective band reaches ~3 f_peak.
  if (f_peak * dt >= 1.0 / 6.0) throw ConfigError("ricker: dt too large for f_peak (aliasing)");
  const long delay_steps = std::lround(ricker_delay(f_peak, dt) / dt);
  std::vector<double> w(nt);
  for (int n = 0; n < nt; ++n) {
    const double a = std::numbers::pi * f_peak * static_cast<double>(n - delay_steps) * dt;
    const double a2 = a * a;
    w[n] = (1.0 - 2.0 * a2) * std::exp(-a2);
  }
  return w;
}

std::vector<double> cerjan_taper(const GridDims& dims) {
  std::vector<double> g(dims.size(), 1.0);
  if (dims.nb == 0) return g;
  auto profile = [&](int i, int n) {
    int d = 0;
    if (i < dims.nb) d = dims.nb - i;
    else if (i >= n - dims.nb) d = i - (n - dims.nb - 1);
    const double a = 0.3 * d / dims.nb;
    return std::exp(-a * a);
  };
  for (int ix = 0; ix < dims.nx; ++ix)
    for (int iz = 0; iz < dims.nz; ++iz) g[dims.index(iz, ix)] = profile(ix, dims.nx) * profile(iz, dims.nz);
  return g;
}

Propagator::Propagator(const ModelGrid& model, TimeAxis time) : Propagator(model, time, Options{}) {}

Propagator::Propagator(const ModelGrid& model, TimeAxis time, Options opts)
    : dims_(model.dims()), time_(time), opts_(opts) {
  if (time_.nt < 1 || !(time_.dt > 0.0)) throw ConfigError("propagator needs nt >= 1 and dt > 0");
  if (opts_.check_cfl) check_cfl(time_.dt, dims_.dx, dims_.dz, model.max_velocity());
  m_.assign(model.squared_slowness().begin(), model.squared_slowness().end());
  c_.resize(m_.size());
  for (std::size_t k = 0; k < m_.size(); ++k) c_[k] = time_.dt * time_.dt / m_[k];
  g_ = cerjan_taper(dims_);
  inv_dz2_ = 1.0 / (dims_.dz * dims_.dz);
  inv_dx2_ = 1.0 / (dims_.dx * dims_.dx);
}

// Padded layout: (ix + 2) * (nz + 4) + (iz + 2), two zero nodes on every side.

inline void Propagator::laplacian_padded(const std::vector<double>& p, std::size_t k, int /*iz*/, int /*ix*/,
                                         double& out) const {
  const std::size_t sz = 1;
  const std::size_t sx = static_cast<std::size_t>(dims_.nz) + 2 * kHalo;
  const double c = p[k];
  const double lz = kC0 * c + kC1 * (p[k - sz] + p[k + sz]) + kC2 * (p[k - 2 * sz] + p[k + 2 * sz]);
  const double lx = kC0 * c + kC1 * (p[k - sx] + p[k + sx]) + kC2 * (p[k - 2 * sx] + p[k + 2 * sx]);
  out = lz * inv_dz2_ + lx * inv_dx2_;
}

void Propagator::laplacian(std::span<const double> in, std::span<double> out) const {
  const int nz = dims_.nz, nx = dims_.nx;
  const std::size_t pz = nz + 2 * kHalo;
  std::vector<double> p(pz * (nx + 2 * kHalo), 0.0);
  for (int ix = 0; ix < nx; ++ix)
    for (int iz = 0; iz < nz; ++iz) p[(ix + kHalo) * pz + iz + kHalo] = in[dims_.index(iz, ix)];
  for (int ix = 0; ix < nx; ++ix)
    for (int iz = 0; iz < nz; ++iz) laplacian_padded(p, (ix + kHalo) * pz + iz + kHalo, iz, ix, out[dims_.index(iz, ix)]);
}

void Propagator::forward_stream(const SliceSource& source, const SliceSink& sink) const {
  const int nz = dims_.nz, nx = dims_.nx;
  const std::size_t pz = nz + 2 * kHalo;
  const std::size_t psize = pz * (nx + 2 * kHalo);
  std::vector<double> prev2(psize, 0.0), prev1(psize, 0.0), next(psize, 0.0);
  std::vector<double> src(dims_.size()), out(dims_.size());

  for (int n = 0; n < time_.nt; ++n) {
    std::fill(src.begin(), src.end(), 0.0);
    if (source) source(n, src);
    double peak = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t pbase = (ix + kHalo) * pz + kHalo;
      const std::size_t base = static_cast<std::size_t>(ix) * nz;
      for (int iz = 0; iz < nz; ++iz) {
        const std::size_t p = pbase + iz;
        const std::size_t k = base + iz;
        double lap;
        laplacian_padded(prev1, p, iz, ix, lap);
        const double g = g_[k];
        const double v = g * (2.0 * prev1[p] + c_[k] * (lap + src[k])) - g * g * prev2[p];
        next[p] = v;
        out[k] = v;
        peak = std::max(peak, std::abs(v));
      }
    }
    if (!(peak <= opts_.overflow_guard)) {
      std::ostringstream msg;
      msg << "CFL/instability: wavefield exceeded " << opts_.overflow_guard << " at step " << n;
      throw NumericalError(msg.str());
    }
    if (sink) sink(n, out);
    std::swap(prev2, prev1);
    std::swap(prev1, next);
  }
}

// Transpose of the forward recurrence. With z the adjoint state,
//   z^n = y^n + 2 g z^{n+1} + L(c g z^{n+1}) - g^2 z^{n+2},   lambda^n = c g z^n,
// so L acts on lambda^{n+1}, which is kept padded.
void Propagator::adjoint_stream(const SliceSource& source, const SliceSink& sink) const {
  const int nz = dims_.nz, nx = dims_.nx;
  const std::size_t pz = nz + 2 * kHalo;
  const std::size_t psize = pz * (nx + 2 * kHalo);
  std::vector<double> z1(dims_.size(), 0.0), z2(dims_.size(), 0.0), z0(dims_.size(), 0.0);
  std::vector<double> lam1(psize, 0.0), lam0(psize, 0.0);
  std::vector<double> y(dims_.size()), out(dims_.size());

  for (int n = time_.nt - 1; n >= 0; --n) {
    std::fill(y.begin(), y.end(), 0.0);
    if (source) source(n, y);
    double peak = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
      const std::size_t pbase = (ix + kHalo) * pz + kHalo;
      const std::size_t base = static_cast<std::size_t>(ix) * nz;
      for (int iz = 0; iz < nz; ++iz) {
        const std::size_t p = pbase + iz;
        const std::size_t k = base + iz;
        double lap;
        laplacian_padded(lam1, p, iz, ix, lap);
        const double g = g_[k];
        const double z = y[k] + 2.0 * g * z1[k] + lap - g * g * z2[k];
        z0[k] = z;
        const double lam = c_[k] * g * z;
        lam0[p] = lam;
        out[k] = lam;
        peak = std::max(peak, std::abs(lam));
      }
    }
    if (!(peak <= opts_.overflow_guard)) {
      std::ostringstream msg;
      msg << "CFL/instability: adjoint field exceeded " << opts_.overflow_guard << " at step " << n;
      throw NumericalError(msg.str());
    }
    if (sink) sink(n, out);
    std::swap(z2, z1);
    std::swap(z1, z0);
    std::swap(lam1, lam0);
  }
}

Movie Propagator::forward(const Movie& f) const {
  if (!(f.shape() == movie_shape())) throw ConfigError("forward: source movie shape mismatch");
  Movie u(movie_shape());
  forward_stream(
      [&](int n, std::span<double> s) {
        const auto fs = f.slice(n);
        std::copy(fs.begin(), fs.end(), s.begin());
      },
      [&](int n, std::span<const double> v) { std::copy(v.begin(), v.end(), u.slice(n).begin()); });
  return u;
}

namespace {

Propagator::SliceSource point_source_fn(const PointSource& src, const GridDims& dims, int nt) {
  if (src.node.iz < 0 || src.node.iz >= dims.nz || src.node.ix < 0 || src.node.ix >= dims.nx) {
    throw ConfigError("point source outside grid");
  }
  if (static_cast<int>(src.wavelet.size()) != nt) throw ConfigError("wavelet length must equal nt");
  const std::size_t k = dims.index(src.node.iz, src.node.ix);
  return [&src, k](int n, std::span<double> s) { s[k] += src.wavelet[n]; };
}

}  // namespace

Movie Propagator::forward(const PointSource& src) const {
  Movie u(movie_shape());
  forward_stream(point_source_fn(src, dims_, time_.nt),
                 [&](int n, std::span<const double> v) { std::copy(v.begin(), v.end(), u.slice(n).begin()); });
  return u;
}

Movie Propagator::forward(const SourceTerm& src) const {
  return std::visit([this](const auto& s) { return forward(s); }, src);
}

StoredWavefield Propagator::forward(const SourceTerm& src, WavefieldStore& store) const {
  StoredWavefield out = store.allocate(movie_shape());
  SliceSource fn;
  if (const auto* ps = std::get_if<PointSource>(&src)) {
    fn = point_source_fn(*ps, dims_, time_.nt);
  } else {
    const auto& f = std::get<Movie>(src);
    if (!(f.shape() == movie_shape())) throw ConfigError("forward: source movie shape mismatch");
    fn = [&f](int n, std::span<double> s) {
      const auto fs = f.slice(n);
      std::copy(fs.begin(), fs.end(), s.begin());
    };
  }
  forward_stream(fn, [&](int n, std::span<const double> v) { out.write_step(n, v); });
  return out;
}

Movie Propagator::adjoint(const Movie& y) const {
  if (!(y.shape() == movie_shape())) throw ConfigError("adjoint: source movie shape mismatch");
  Movie lam(movie_shape());
  adjoint_stream(
      [&](int n, std::span<double> s) {
        const auto ys = y.slice(n);
        std::copy(ys.begin(), ys.end(), s.begin());
      },
      [&](int n, std::span<const double> v) { std::copy(v.begin(), v.end(), lam.slice(n).begin()); });
  return lam;
}

Movie Propagator::apply_wave_operator(const Movie& u) const {
  if (!(u.shape() == movie_shape())) throw ConfigError("wave operator: shape mismatch");
  Movie f(movie_shape());
  const double inv_dt2 = 1.0 / (time_.dt * time_.dt);
  std::vector<double> lap(dims_.size()), zero(dims_.size(), 0.0);
  for (int n = 0; n < time_.nt; ++n) {
    const auto un = u.slice(n);
    const std::span<const double> un1 = n >= 1 ? u.slice(n - 1) : std::span<const double>(zero);
    const std::span<const double> un2 = n >= 2 ? u.slice(n - 2) : std::span<const double>(zero);
    laplacian(un1, lap);
    auto fn = f.slice(n);
    for (std::size_t k = 0; k < fn.size(); ++k) {
      fn[k] = m_[k] * inv_dt2 * (un[k] / g_[k] - 2.0 * un1[k] + g_[k] * un2[k]) - lap[k];
    }
  }
  return f;
}

void Propagator::scheme_dAdm_step(int /*n*/, std::span<const double> un, std::span<const double> un1,
                                  std::span<const double> un2, std::span<double> out) const {
  const double inv_dt2 = 1.0 / (time_.dt * time_.dt);
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = (un[k] / g_[k] - 2.0 * un1[k] + g_[k] * un2[k]) * inv_dt2;
  }
}

Movie Propagator::scheme_dAdm(const Movie& u) const {
  if (!(u.shape() == movie_shape())) throw ConfigError("dAdm: shape mismatch");
  Movie out(movie_shape());
  std::vector<double> zero(dims_.size(), 0.0);
  for (int n = 0; n < time_.nt; ++n) {
    scheme_dAdm_step(n, u.slice(n), n >= 1 ? u.slice(n - 1) : std::span<const double>(zero),
                     n >= 2 ? u.slice(n - 2) : std::span<const double>(zero), out.slice(n));
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

void check_nodes(std::span<const GridNode> nodes, const MovieShape& shape) {
  for (const auto& r : nodes) {
    if (r.iz < 0 || r.iz >= shape.nz || r.ix < 0 || r.ix >= shape.nx) {
      throw ConfigError("receiver off-grid");
    }
  }
}

}  // namespace

ShotGather sample_R(const Movie& u, std::span<const GridNode> receivers, int shot_index) {
  check_nodes(receivers, u.shape());
  const int nr = static_cast<int>(receivers.size());
  ShotGather d(shot_index, u.nt(), nr);
  for (int n = 0; n < u.nt(); ++n)
    for (int r = 0; r < nr; ++r) d.at(n, r) = u.at(n, receivers[r].iz, receivers[r].ix);
  return d;
}

Movie spread_Rh(const ShotGather& d, std::span<const GridNode> receivers, MovieShape shape) {
  check_nodes(receivers, shape);
  if (d.nr() != static_cast<int>(receivers.size()) || d.nt() != shape.nt) {
    throw ConfigError("spread_Rh: gather does not match receivers/time axis");
  }
  Movie u(shape);
  for (int n = 0; n < shape.nt; ++n)
    for (int r = 0; r < d.nr(); ++r) u.at(n, receivers[r].iz, receivers[r].ix) += d.at(n, r);
  return u;
}

Movie apply_dAdm(const Movie& u, double dt) {
  const int nt = u.nt();
  if (nt < 3) throw ConfigError("apply_dAdm needs nt >= 3");
  Movie out(u.shape());
  const double inv_dt2 = 1.0 / (dt * dt);
  for (int n = 0; n < nt; ++n) {
    const int c = std::clamp(n, 1, nt - 2);  // one-sided stencil at both ends
    const auto a = u.slice(c - 1), b = u.slice(c), e = u.slice(c + 1);
    auto o = out.slice(n);
    for (std::size_t k = 0; k < o.size(); ++k) o[k] = (a[k] - 2.0 * b[k] + e[k]) * inv_dt2;
  }
  return out;
}

}  // namespace xfwi
