#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <set>
#include <string>
#include <unistd.h>

#include "xfwi/linops.hpp"
#include "xfwi/model_grid.hpp"
#include "xfwi/normal_ops.hpp"
#include "xfwi/propagator.hpp"

namespace xfwi::testing {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
  static int counter = 0;
  auto dir = std::filesystem::temp_directory_path() /
             ("xfwi_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Smoothly varying random velocity in [vmin, vmax].
inline ModelGrid random_model(const GridDims& dims, std::uint64_t seed, double vmin = 1500.0, double vmax = 2000.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double a = u(rng) * 6.28, b = u(rng) * 6.28;
  std::vector<double> v(dims.size());
  for (int ix = 0; ix < dims.nx; ++ix)
    for (int iz = 0; iz < dims.nz; ++iz) {
      const double s = 0.5 + 0.25 * std::sin(0.7 * iz + a) + 0.25 * std::cos(0.5 * ix + b);
      v[dims.index(iz, ix)] = vmin + (vmax - vmin) * s;
    }
  return ModelGrid::from_velocity(dims, v);
}

/// Small heterogeneous problem: one source near the top, a receiver line below it.
struct TinyProblem {
  ModelGrid model;
  Acquisition acq;
  ShotContext ctx;
};

inline TinyProblem make_tiny(int n, int nt, int nb, std::uint64_t seed, double dt = 0.002) {
  GridDims dims{n, n, 10.0, 10.0, nb};
  ModelGrid model = random_model(dims, seed);
  Acquisition acq;
  acq.dims = dims;
  acq.time = {nt, dt};
  acq.f_peak = 25.0;
  acq.sources = {{nb + 1, n / 2}};
  for (int ix = nb; ix < n - nb; ix += 2) acq.receivers.push_back({n - nb - 2, ix});
  ShotContext ctx = make_shot_context(model, acq, 0);
  return {model, acq, ctx};
}

inline Eigen::VectorXd to_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

/// Column-by-column materialization of a real operator.
template <class D, class R>
Eigen::MatrixXd materialize(const std::function<R(const D&)>& apply, D e, std::size_t rows) {
  const auto n = static_cast<Eigen::Index>(e.values().size());
  Eigen::MatrixXd M(static_cast<Eigen::Index>(rows), n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e.values()[j] = 1.0;
    const R col = apply(e);
    M.col(j) = to_eigen(col.values());
    e.values()[j] = 0.0;
  }
  return M;
}

inline Eigen::MatrixXd materialize(const LinearMap<Movie, Movie>& op, MovieShape shape) {
  return materialize<Movie, Movie>(op.apply, Movie(shape), shape.size());
}

/// Dense S (rows: gather samples, columns: movie samples).
inline Eigen::MatrixXd materialize_S(const ShotContext& ctx) {
  return materialize<Movie, ShotGather>([&](const Movie& q) { return ctx.S(q); }, Movie(ctx.shape()),
                                        ctx.zero_gather().values().size());
}

/// Dense diagonal of B^H B.
inline Eigen::VectorXd annihilator_diag(const Annihilator& B) {
  Movie ones(B.shape());
  for (auto& v : ones.values()) v = 1.0;
  return to_eigen(B.apply_sq(ones).values());
}

/// Dense solution of (S^T S + beta W) q = S^T d.
inline Eigen::VectorXd dense_normal_solve(const Eigen::MatrixXd& S, const Eigen::VectorXd& wdiag, double beta,
                                          const Eigen::VectorXd& rhs) {
  Eigen::MatrixXd N = S.transpose() * S;
  N.diagonal() += beta * wdiag;
  return N.ldlt().solve(rhs);
}

inline ShotGather gather_from_eigen(const Eigen::VectorXd& x, const ShotContext& ctx) {
  ShotGather g = ctx.zero_gather();
  for (Eigen::Index i = 0; i < x.size(); ++i) g.values()[i] = x[i];
  return g;
}

inline Movie from_eigen(const Eigen::VectorXd& x, MovieShape shape) {
  Movie m(shape);
  for (Eigen::Index i = 0; i < x.size(); ++i) m.values()[i] = x[i];
  return m;
}

inline double rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return (a - b).norm() / std::max(a.norm(), b.norm());
}

}  // namespace xfwi::testing
