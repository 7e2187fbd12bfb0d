#pragma once

#include <functional>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "xfwi/field.hpp"
#include "xfwi/model_grid.hpp"
#include "xfwi/wavefield_store.hpp"

namespace xfwi {

/// Ricker wavelet with unit peak. The delay t0 is the first sample at or after
/// 1.5/f_peak, so the wavelet starts near zero and equals 1 exactly at t0.
/// Throws ConfigError when f_peak*dt >= 1/6 (wavelet band aliased).
std::vector<double> ricker(double f_peak, int nt, double dt);
double ricker_delay(double f_peak, double dt);

struct PointSource {
  GridNode node;
  std::vector<double> wavelet;
};

/// Either a wavelet injected at one node or a full space-time source movie.
using SourceTerm = std::variant<PointSource, Movie>;

/// 2D constant-density acoustic solver for (m d_tt - Laplacian) u = f.
///
/// Discretization (u^{-1} = u^{-2} = 0, n = 0..nt-1):
///   u^n = g (2 u^{n-1} + c (L u^{n-1} + f^n)) - g^2 u^{n-2},   c = dt^2 / m
/// with L the 4th-order Laplacian (zero outside the grid) and g a Cerjan taper
/// that equals 1 outside the absorbing strip. The adjoint is the exact
/// transpose of this recurrence, run backwards in time.
class Propagator {
 public:
  /// Fills `slice` (zeroed by the caller) with the source at step n.
  using SliceSource = std::function<void(int n, std::span<double> slice)>;
  /// Receives the field at step n; forward calls come in increasing n,
  /// adjoint calls in decreasing n.
  using SliceSink = std::function<void(int n, std::span<const double> slice)>;

  struct Options {
    bool check_cfl = true;
    double overflow_guard = 1e100;
  };

  Propagator(const ModelGrid& model, TimeAxis time);
  Propagator(const ModelGrid& model, TimeAxis time, Options opts);

  const GridDims& dims() const { return dims_; }
  const TimeAxis& time() const { return time_; }
  MovieShape movie_shape() const { return {time_.nt, dims_.nz, dims_.nx}; }
  std::span<const double> squared_slowness() const { return m_; }
  std::span<const double> taper() const { return g_; }

  void forward_stream(const SliceSource& source, const SliceSink& sink) const;
  void adjoint_stream(const SliceSource& source, const SliceSink& sink) const;

  /// u = A^{-1} f
  Movie forward(const Movie& f) const;
  Movie forward(const PointSource& src) const;
  Movie forward(const SourceTerm& src) const;
  /// Same as forward, but frames go into the store (memory or disk spill).
  StoredWavefield forward(const SourceTerm& src, WavefieldStore& store) const;
  /// lambda = A^{-H} y
  Movie adjoint(const Movie& y) const;

  /// The discrete wave operator itself: (A u)^n = (m/dt^2)(u^n/g - 2u^{n-1} + g u^{n-2}) - L u^{n-1}.
  Movie apply_wave_operator(const Movie& u) const;
  /// Exact derivative of the discrete operator with respect to m:
  /// (u^n/g - 2u^{n-1} + g u^{n-2}) / dt^2. Equals the centered second
  /// difference at step n-1 away from the absorbing strip.
  Movie scheme_dAdm(const Movie& u) const;
  void scheme_dAdm_step(int n, std::span<const double> un, std::span<const double> un1,
                        std::span<const double> un2, std::span<double> out) const;

  /// 4th-order Laplacian with zero exterior.
  void laplacian(std::span<const double> in, std::span<double> out) const;

 private:
  void laplacian_padded(const std::vector<double>& padded, std::size_t k, int iz, int ix, double& out) const;

  GridDims dims_;
  TimeAxis time_;
  Options opts_;
  std::vector<double> m_;
  std::vector<double> c_;  // dt^2 / m
  std::vector<double> g_;  // taper
  double inv_dz2_ = 0.0;
  double inv_dx2_ = 0.0;
};

/// Cerjan taper: exp(-(0.3 d / nb)^2) at depth d (nodes) into the strip.
std::vector<double> cerjan_taper(const GridDims& dims);

/// Receiver restriction R: u at receiver nodes for every step.
ShotGather sample_R(const Movie& u, std::span<const GridNode> receivers, int shot_index = 0);
/// R^H: each trace injected at its receiver node, zero elsewhere.
Movie spread_Rh(const ShotGather& d, std::span<const GridNode> receivers, MovieShape shape);

/// Centered second time difference, one-sided at both ends. Requires nt >= 3.
Movie apply_dAdm(const Movie& u, double dt);

}  // namespace xfwi
