#pragma once

#include <complex>
#include <filesystem>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "xfwi/field.hpp"
#include "xfwi/model_grid.hpp"
#include "xfwi/propagator.hpp"

namespace xfwi {

/// Matrix-free linear operator with its adjoint. domain_zero/range_zero build
/// correctly shaped zero vectors.
template <class Domain, class Range>
struct LinearMap {
  std::string name;
  std::function<Range(const Domain&)> apply;
  std::function<Domain(const Range&)> apply_adjoint;
  std::function<Domain()> domain_zero;
  std::function<Range()> range_zero;
  bool self_adjoint = false;
};

/// outer ∘ inner
template <class A, class B, class C>
LinearMap<A, C> compose(const LinearMap<B, C>& outer, const LinearMap<A, B>& inner) {
  LinearMap<A, C> out;
  out.name = outer.name + "*" + inner.name;
  out.apply = [o = outer.apply, i = inner.apply](const A& x) { return o(i(x)); };
  out.apply_adjoint = [o = outer.apply_adjoint, i = inner.apply_adjoint](const C& y) { return i(o(y)); };
  out.domain_zero = inner.domain_zero;
  out.range_zero = outer.range_zero;
  out.self_adjoint = false;
  return out;
}

struct DotTestResult {
  double lhs = 0.0;  // <A x, y>
  double rhs = 0.0;  // <x, A^H y>
  double rel_error = 0.0;
};

/// |<Ax,y> - <x,A^H y>| / (||Ax|| ||y||) for random x, y.
template <class D, class R>
DotTestResult dot_product_test(const LinearMap<D, R>& op, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  D x = op.domain_zero();
  R y = op.range_zero();
  fill_random(x, rng);
  fill_random(y, rng);
  const R ax = op.apply(x);
  const D ahy = op.apply_adjoint(y);
  DotTestResult r;
  r.lhs = inner(ax, y);
  r.rhs = inner(x, ahy);
  const double denom = norm(ax) * norm(y);
  r.rel_error = denom > 0.0 ? std::abs(r.lhs - r.rhs) / denom : std::abs(r.lhs - r.rhs);
  return r;
}

// ---------------------------------------------------------------------------

using PropagatorPtr = std::shared_ptr<const Propagator>;

/// S = R A^{-1}: source movie -> receiver gather. Neither direction stores a
/// full wavefield in the forward pass.
LinearMap<Movie, ShotGather> op_S(PropagatorPtr prop, std::vector<GridNode> receivers, int shot_index = 0);
/// R alone, as a map Movie -> ShotGather.
LinearMap<Movie, ShotGather> op_R(MovieShape shape, std::vector<GridNode> receivers, int shot_index = 0);
/// A^{-1} alone.
LinearMap<Movie, Movie> op_Ainv(PropagatorPtr prop);

/// S p (data only).
ShotGather apply_S(const Propagator& prop, const Movie& p, std::span<const GridNode> receivers, int shot_index = 0);
/// S^H d.
Movie apply_Sh(const Propagator& prop, const ShotGather& d, std::span<const GridNode> receivers);

// ---------------------------------------------------------------------------

/// Diagonal weighting B of the extended source. B^H B multiplies by w^2.
class Annihilator {
 public:
  enum class Kind { Identity, SpatialDistance, TimeWeight };

  static Annihilator identity(MovieShape shape);
  /// w(x) = max(|x - x_s|, floor); floor defaults to one cell diagonal.
  static Annihilator spatial_distance(const GridDims& dims, int nt, GridNode source, double floor = -1.0);
  /// w(t) = max(t, floor), t = n dt; floor defaults to dt.
  static Annihilator time_weight(MovieShape shape, double dt, double floor = -1.0);

  Kind kind() const { return kind_; }
  const MovieShape& shape() const { return shape_; }
  double floor() const { return floor_; }
  /// Spatial weights (nz*nx) for Identity/SpatialDistance, temporal (nt) for TimeWeight.
  std::span<const double> weights() const { return w_; }
  double weight(int n, std::size_t k) const { return kind_ == Kind::TimeWeight ? w_[n] : w_[k]; }
  bool is_spatial() const { return kind_ != Kind::TimeWeight; }

  /// B^H B q
  Movie apply_sq(const Movie& q) const;
  /// (B^H B)^{-1} lambda
  Movie apply_sq_inv(const Movie& lambda) const;
  /// out += s * B^H B q
  void accumulate_sq(double s, const Movie& q, Movie& out) const;
  /// ||B q||^2
  double penalty_norm_sq(const Movie& q) const;
  /// Spatial kinds only: w^2 applied per frequency slice.
  void accumulate_sq_slice(double s, std::span<const double> in, std::span<double> out, int n) const;

 private:
  Annihilator(Kind kind, MovieShape shape, std::vector<double> w, double floor)
      : kind_(kind), shape_(shape), w_(std::move(w)), floor_(floor) {}
  Kind kind_;
  MovieShape shape_;
  std::vector<double> w_;
  double floor_ = 0.0;
};

enum class AnnihilatorKind { Identity, SpatialDistance, TimeWeight };
AnnihilatorKind parse_annihilator_kind(const std::string& s);
std::string to_string(AnnihilatorKind k);
Annihilator make_annihilator(AnnihilatorKind kind, const Acquisition& acq, int shot);

// ---------------------------------------------------------------------------

/// Fields at a handful of frequencies: one complex grid (npoints = nz*nx) per
/// frequency, stored frequency-major.
class FreqField {
 public:
  FreqField() = default;
  FreqField(std::vector<double> freqs, int nz, int nx);

  const std::vector<double>& freqs() const { return freqs_; }
  int nf() const { return static_cast<int>(freqs_.size()); }
  int nz() const { return nz_; }
  int nx() const { return nx_; }
  std::size_t points() const { return static_cast<std::size_t>(nz_) * nx_; }
  std::span<std::complex<double>> at_freq(int m) { return {data_.data() + m * points(), points()}; }
  std::span<const std::complex<double>> at_freq(int m) const { return {data_.data() + m * points(), points()}; }

  std::span<std::complex<double>> values() { return data_; }
  std::span<const std::complex<double>> values() const { return data_; }

 private:
  std::vector<double> freqs_;
  int nz_ = 0;
  int nx_ = 0;
  std::vector<std::complex<double>> data_;
};

/// Frequencies must be finite, distinct, and in [0, 1/dt).
void validate_frequencies(const std::vector<double>& freqs, double dt);
/// n equispaced frequencies spanning [0.5, 2] f_peak.
std::vector<double> default_frequencies(double f_peak, int n = 5);

/// u(f_m) = sum_n u^n exp(+j 2 pi f_m n dt), accumulated one step at a time.
class DtftAccumulator {
 public:
  DtftAccumulator(std::vector<double> freqs, double dt, int nz, int nx);
  void add(int n, std::span<const double> slice);
  /// Adds s * weights ⊙ slice.
  void add_weighted(int n, std::span<const double> slice, std::span<const double> weights, double s);
  const FreqField& result() const { return out_; }
  FreqField take() { return std::move(out_); }

 private:
  double dt_;
  FreqField out_;
};

/// s^n = Re (1/N_t) sum_m s(f_m) exp(-j 2 pi f_m n dt) for one step.
void idtft_slice(const FreqField& F, int n, int nt, double dt, std::span<double> out);

FreqField dtft(const Movie& u, const std::vector<double>& freqs, double dt);
/// Gather version; the FreqField has nz = nr, nx = 1.
FreqField dtft(const ShotGather& d, const std::vector<double>& freqs, double dt);
Movie idtft(const FreqField& F, int nt, double dt);
ShotGather idtft_gather(const FreqField& F, int nt, double dt, int shot_index = 0);

/// Amplitude |u(f)| at the frequency closest to f as a spatial grid.
std::vector<double> amplitude_at(const FreqField& F, double f);

/// F as a LinearMap Movie -> FreqField. Its true adjoint is N_t * idtft.
LinearMap<Movie, FreqField> op_dtft(MovieShape shape, std::vector<double> freqs, double dt);

void save_freq_field(const FreqField& F, const GridDims& dims, const std::filesystem::path& path);

}  // namespace xfwi
