#include "xfwi/linops.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "xfwi/error.hpp"

namespace xfwi {

namespace {

void copy_slice(const Movie& f, int n, std::span<double> s) {
  const auto fs = f.slice(n);
  std::copy(fs.begin(), fs.end(), s.begin());
}

}  // namespace

ShotGather apply_S(const Propagator& prop, const Movie& p, std::span<const GridNode> receivers, int shot_index) {
  if (!(p.shape() == prop.movie_shape())) throw ConfigError("S: source movie shape mismatch");
  const GridDims& dims = prop.dims();
  std::vector<std::size_t> idx;
  for (const auto& r : receivers) {
    if (r.iz < 0 || r.iz >= dims.nz || r.ix < 0 || r.ix >= dims.nx) throw ConfigError("receiver off-grid");
    idx.push_back(dims.index(r.iz, r.ix));
  }
  ShotGather d(shot_index, prop.time().nt, static_cast<int>(idx.size()));
  prop.forward_stream([&](int n, std::span<double> s) { copy_slice(p, n, s); },
                      [&](int n, std::span<const double> u) {
                        auto row = d.step(n);
                        for (std::size_t r = 0; r < idx.size(); ++r) row[r] = u[idx[r]];
                      });
  return d;
}

Movie apply_Sh(const Propagator& prop, const ShotGather& d, std::span<const GridNode> receivers) {
  const GridDims& dims = prop.dims();
  if (d.nt() != prop.time().nt || d.nr() != static_cast<int>(receivers.size())) {
    throw ConfigError("S^H: gather does not match receivers/time axis");
  }
  std::vector<std::size_t> idx;
  for (const auto& r : receivers) {
    if (r.iz < 0 || r.iz >= dims.nz || r.ix < 0 || r.ix >= dims.nx) throw ConfigError("receiver off-grid");
    idx.push_back(dims.index(r.iz, r.ix));
  }
  Movie lam(prop.movie_shape());
  prop.adjoint_stream(
      [&](int n, std::span<double> s) {
        const auto row = d.step(n);
        for (std::size_t r = 0; r < idx.size(); ++r) s[idx[r]] += row[r];
      },
      [&](int n, std::span<const double> v) { std::copy(v.begin(), v.end(), lam.slice(n).begin()); });
  return lam;
}

LinearMap<Movie, ShotGather> op_S(PropagatorPtr prop, std::vector<GridNode> receivers, int shot_index) {
  LinearMap<Movie, ShotGather> op;
  op.name = "S";
  const MovieShape shape = prop->movie_shape();
  const int nr = static_cast<int>(receivers.size());
  op.apply = [prop, receivers, shot_index](const Movie& q) { return apply_S(*prop, q, receivers, shot_index); };
  op.apply_adjoint = [prop, receivers](const ShotGather& d) { return apply_Sh(*prop, d, receivers); };
  op.domain_zero = [shape] { return Movie(shape); };
  op.range_zero = [shape, nr, shot_index] { return ShotGather(shot_index, shape.nt, nr); };
  return op;
}

LinearMap<Movie, ShotGather> op_R(MovieShape shape, std::vector<GridNode> receivers, int shot_index) {
  LinearMap<Movie, ShotGather> op;
  op.name = "R";
  const int nr = static_cast<int>(receivers.size());
  op.apply = [receivers, shot_index](const Movie& u) { return sample_R(u, receivers, shot_index); };
  op.apply_adjoint = [receivers, shape](const ShotGather& d) { return spread_Rh(d, receivers, shape); };
  op.domain_zero = [shape] { return Movie(shape); };
  op.range_zero = [shape, nr, shot_index] { return ShotGather(shot_index, shape.nt, nr); };
  return op;
}

LinearMap<Movie, Movie> op_Ainv(PropagatorPtr prop) {
  LinearMap<Movie, Movie> op;
  op.name = "Ainv";
  const MovieShape shape = prop->movie_shape();
  op.apply = [prop](const Movie& f) { return prop->forward(f); };
  op.apply_adjoint = [prop](const Movie& y) { return prop->adjoint(y); };
  op.domain_zero = [shape] { return Movie(shape); };
  op.range_zero = op.domain_zero;
  return op;
}

// ---------------------------------------------------------------------------

Annihilator Annihilator::identity(MovieShape shape) {
  return Annihilator(Kind::Identity, shape, std::vector<double>(shape.slice_size(), 1.0), 1.0);
}

Annihilator Annihilator::spatial_distance(const GridDims& dims, int nt, GridNode source, double floor) {
  if (floor < 0.0) floor = std::hypot(dims.dx, dims.dz);
  if (!(floor > 0.0)) throw ConfigError("annihilator floor must be positive");
  std::vector<double> w(dims.size());
  for (int ix = 0; ix < dims.nx; ++ix) {
    for (int iz = 0; iz < dims.nz; ++iz) {
      const double r = std::hypot((ix - source.ix) * dims.dx, (iz - source.iz) * dims.dz);
      w[dims.index(iz, ix)] = std::max(r, floor);
    }
  }
  return Annihilator(Kind::SpatialDistance, {nt, dims.nz, dims.nx}, std::move(w), floor);
}

Annihilator Annihilator::time_weight(MovieShape shape, double dt, double floor) {
  if (floor < 0.0) floor = dt;
  if (!(floor > 0.0)) throw ConfigError("annihilator floor must be positive");
  std::vector<double> w(shape.nt);
  for (int n = 0; n < shape.nt; ++n) w[n] = std::max(n * dt, floor);
  return Annihilator(Kind::TimeWeight, shape, std::move(w), floor);
}

void Annihilator::accumulate_sq(double s, const Movie& q, Movie& out) const {
  if (!(q.shape() == shape_) || !(out.shape() == shape_)) throw ConfigError("annihilator: shape mismatch");
  for (int n = 0; n < shape_.nt; ++n) {
    const auto in = q.slice(n);
    auto o = out.slice(n);
    if (is_spatial()) {
      for (std::size_t k = 0; k < in.size(); ++k) o[k] += s * w_[k] * w_[k] * in[k];
    } else {
      const double w2 = s * w_[n] * w_[n];
      for (std::size_t k = 0; k < in.size(); ++k) o[k] += w2 * in[k];
    }
  }
}

void Annihilator::accumulate_sq_slice(double s, std::span<const double> in, std::span<double> out, int n) const {
  if (is_spatial()) {
    for (std::size_t k = 0; k < in.size(); ++k) out[k] += s * w_[k] * w_[k] * in[k];
  } else {
    const double w2 = s * w_[n] * w_[n];
    for (std::size_t k = 0; k < in.size(); ++k) out[k] += w2 * in[k];
  }
}

Movie Annihilator::apply_sq(const Movie& q) const {
  Movie out(q.shape());
  accumulate_sq(1.0, q, out);
  return out;
}

Movie Annihilator::apply_sq_inv(const Movie& lambda) const {
  if (!(lambda.shape() == shape_)) throw ConfigError("annihilator: shape mismatch");
  Movie out(lambda.shape());
  for (int n = 0; n < shape_.nt; ++n) {
    const auto in = lambda.slice(n);
    auto o = out.slice(n);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const double w = weight(n, k);
      o[k] = in[k] / (w * w);
    }
  }
  return out;
}

double Annihilator::penalty_norm_sq(const Movie& q) const {
  double s = 0.0;
  for (int n = 0; n < shape_.nt; ++n) {
    const auto in = q.slice(n);
    for (std::size_t k = 0; k < in.size(); ++k) {
      const double v = weight(n, k) * in[k];
      s += v * v;
    }
  }
  return s;
}

AnnihilatorKind parse_annihilator_kind(const std::string& s) {
  if (s == "identity") return AnnihilatorKind::Identity;
  if (s == "distance" || s == "spatial") return AnnihilatorKind::SpatialDistance;
  if (s == "time") return AnnihilatorKind::TimeWeight;
  throw ConfigError("unknown annihilator '" + s + "' (identity, distance, time)");
}

std::string to_string(AnnihilatorKind k) {
  switch (k) {
    case AnnihilatorKind::Identity: return "identity";
    case AnnihilatorKind::SpatialDistance: return "distance";
    case AnnihilatorKind::TimeWeight: return "time";
  }
  return "?";
}

Annihilator make_annihilator(AnnihilatorKind kind, const Acquisition& acq, int shot) {
  const MovieShape shape = acq.movie_shape();
  switch (kind) {
    case AnnihilatorKind::Identity: return Annihilator::identity(shape);
    case AnnihilatorKind::SpatialDistance:
      return Annihilator::spatial_distance(acq.dims, acq.time.nt, acq.sources.at(shot));
    case AnnihilatorKind::TimeWeight: return Annihilator::time_weight(shape, acq.time.dt);
  }
  throw ConfigError("bad annihilator kind");
}

// ---------------------------------------------------------------------------

FreqField::FreqField(std::vector<double> freqs, int nz, int nx)
    : freqs_(std::move(freqs)), nz_(nz), nx_(nx), data_(freqs_.size() * static_cast<std::size_t>(nz) * nx) {}

void validate_frequencies(const std::vector<double>& freqs, double dt) {
  if (freqs.empty()) throw ConfigError("frequency list is empty");
  for (std::size_t i = 0; i < freqs.size(); ++i) {
    const double f = freqs[i];
    if (!std::isfinite(f) || f < 0.0 || f * dt >= 1.0) {
      std::ostringstream msg;
      msg << "frequency " << f << " Hz outside [0, 1/dt)";
      throw ConfigError(msg.str());
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (freqs[j] == f) throw ConfigError("frequencies must be distinct");
    }
  }
}

std::vector<double> default_frequencies(double f_peak, int n) {
  if (n < 1) throw ConfigError("need at least one frequency");
  std::vector<double> f(n);
  if (n == 1) {
    f[0] = f_peak;
    return f;
  }
  for (int i = 0; i < n; ++i) f[i] = f_peak * (0.5 + 1.5 * i / (n - 1));
  return f;
}

DtftAccumulator::DtftAccumulator(std::vector<double> freqs, double dt, int nz, int nx)
    : dt_(dt), out_(std::move(freqs), nz, nx) {}

void DtftAccumulator::add(int n, std::span<const double> slice) {
  for (int m = 0; m < out_.nf(); ++m) {
    const double th = 2.0 * std::numbers::pi * out_.freqs()[m] * n * dt_;
    const std::complex<double> e(std::cos(th), std::sin(th));
    auto dst = out_.at_freq(m);
    for (std::size_t k = 0; k < slice.size(); ++k) dst[k] += slice[k] * e;
  }
}

void DtftAccumulator::add_weighted(int n, std::span<const double> slice, std::span<const double> weights, double s) {
  for (int m = 0; m < out_.nf(); ++m) {
    const double th = 2.0 * std::numbers::pi * out_.freqs()[m] * n * dt_;
    const std::complex<double> e(s * std::cos(th), s * std::sin(th));
    auto dst = out_.at_freq(m);
    for (std::size_t k = 0; k < slice.size(); ++k) dst[k] += (weights[k] * slice[k]) * e;
  }
}

void idtft_slice(const FreqField& F, int n, int nt, double dt, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  const double s = 1.0 / nt;
  for (int m = 0; m < F.nf(); ++m) {
    const double th = 2.0 * std::numbers::pi * F.freqs()[m] * n * dt;
    // Re(z e^{-j th}) = re cos + im sin
    const double c = s * std::cos(th), sn = s * std::sin(th);
    const auto src = F.at_freq(m);
    for (std::size_t k = 0; k < out.size(); ++k) out[k] += src[k].real() * c + src[k].imag() * sn;
  }
}

FreqField dtft(const Movie& u, const std::vector<double>& freqs, double dt) {
  DtftAccumulator acc(freqs, dt, u.nz(), u.nx());
  for (int n = 0; n < u.nt(); ++n) acc.add(n, u.slice(n));
  return acc.take();
}

FreqField dtft(const ShotGather& d, const std::vector<double>& freqs, double dt) {
  DtftAccumulator acc(freqs, dt, d.nr(), 1);
  for (int n = 0; n < d.nt(); ++n) acc.add(n, d.step(n));
  return acc.take();
}

Movie idtft(const FreqField& F, int nt, double dt) {
  Movie u({nt, F.nz(), F.nx()});
  for (int n = 0; n < nt; ++n) idtft_slice(F, n, nt, dt, u.slice(n));
  return u;
}

ShotGather idtft_gather(const FreqField& F, int nt, double dt, int shot_index) {
  if (F.nx() != 1) throw ConfigError("gather FreqField must have nx = 1");
  ShotGather d(shot_index, nt, F.nz());
  for (int n = 0; n < nt; ++n) idtft_slice(F, n, nt, dt, d.step(n));
  return d;
}

std::vector<double> amplitude_at(const FreqField& F, double f) {
  if (F.nf() == 0) throw ConfigError("empty FreqField");
  int best = 0;
  for (int m = 1; m < F.nf(); ++m) {
    if (std::abs(F.freqs()[m] - f) < std::abs(F.freqs()[best] - f)) best = m;
  }
  const auto src = F.at_freq(best);
  std::vector<double> a(src.size());
  for (std::size_t k = 0; k < a.size(); ++k) a[k] = std::abs(src[k]);
  return a;
}

LinearMap<Movie, FreqField> op_dtft(MovieShape shape, std::vector<double> freqs, double dt) {
  LinearMap<Movie, FreqField> op;
  op.name = "F";
  op.apply = [freqs, dt](const Movie& u) { return dtft(u, freqs, dt); };
  op.apply_adjoint = [shape, dt](const FreqField& F) {
    Movie u = idtft(F, shape.nt, dt);
    scale(u, static_cast<double>(shape.nt));
    return u;
  };
  op.domain_zero = [shape] { return Movie(shape); };
  op.range_zero = [shape, freqs] { return FreqField(freqs, shape.nz, shape.nx); };
  return op;
}

void save_freq_field(const FreqField& F, const GridDims& dims, const std::filesystem::path& path) {
  if (F.nz() != dims.nz || F.nx() != dims.nx) throw ConfigError("FreqField does not match grid");
  std::vector<double> interleaved;
  interleaved.reserve(2 * F.values().size());
  for (const auto& z : F.values()) {
    interleaved.push_back(z.real());
    interleaved.push_back(z.imag());
  }
  write_f32(bin_path(path), interleaved);
  std::ofstream meta(meta_path(path));
  if (!meta) throw ConfigError("cannot write " + meta_path(path).string());
  meta.precision(17);
  meta << "nz=" << dims.nz << "\nnx=" << dims.nx << "\ndz=" << dims.dz << "\ndx=" << dims.dx << "\nnb=" << dims.nb
       << "\nnf=" << F.nf() << "\nlayout=interleaved_re_im\nfrequencies=";
  for (int m = 0; m < F.nf(); ++m) meta << (m ? "," : "") << F.freqs()[m];
  meta << "\n";
}

}  // namespace xfwi
