#include "xfwi/alt_solvers.hpp"

#include <cmath>

#include "xfwi/error.hpp"

namespace xfwi {

namespace {

void require_positive_beta(double beta) {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("this solver needs beta > 0");
}

/// y -> S W^{-1} S^H y
ShotGather data_space_apply(const ShotContext& ctx, const Annihilator& B, const ShotGather& y) {
  return ctx.S(B.apply_sq_inv(ctx.Sh(y)));
}

}  // namespace

SpectralEstimate estimate_spectral_radius(const ShotContext& ctx, const Annihilator& B, double beta,
                                          int n_power_iters, std::uint64_t seed, double tol) {
  require_positive_beta(beta);
  if (n_power_iters < 1) throw ConfigError("power iteration needs at least one step");
  std::mt19937_64 rng(seed);
  ShotGather y = ctx.zero_gather();
  fill_random(y, rng);
  scale(y, 1.0 / norm(y));
  SpectralEstimate est;
  double prev = 0.0;
  for (int k = 0; k < n_power_iters; ++k) {
    ShotGather z = data_space_apply(ctx, B, y);
    const double mu = inner(y, z);  // y has unit norm
    est.iterations = k + 1;
    est.mu = mu;
    est.gap = mu > 0.0 ? std::abs(mu - prev) / mu : 0.0;
    const double zn = norm(z);
    if (zn == 0.0) {
      est.converged = true;
      break;
    }
    if (k > 0 && est.gap <= tol) {
      est.converged = true;
      break;
    }
    prev = mu;
    scale(z, 1.0 / zn);
    y = std::move(z);
  }
  est.rho = est.mu / beta;
  return est;
}

RecursionResult gauss_seidel_solve(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                                   int n_iters, const Movie* u0) {
  require_positive_beta(beta);
  if (n_iters < 1) throw ConfigError("recursion needs at least one iteration");
  RecursionResult res;
  res.u = u0 ? *u0 : Movie(ctx.shape());
  for (int k = 0; k < n_iters; ++k) {
    ShotGather resid = d;
    axpy(-1.0, sample_R(res.u, ctx.receivers, ctx.shot_index), resid);
    res.lambda = ctx.Sh(resid);
    res.q = B.apply_sq_inv(res.lambda);
    scale(res.q, 1.0 / beta);
    Movie next = ctx.prop->forward(res.q);
    Movie diff = next;
    axpy(-1.0, res.u, diff);
    const double step = norm(diff);
    res.u = std::move(next);
    res.history.push_back(step);
    res.iterations = k + 1;
    const std::size_t n = res.history.size();
    if (!std::isfinite(step) || (n > 3 && step > 10.0 * res.history[n - 4])) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

double wavefield_objective(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                           const Movie& u) {
  ShotGather resid = sample_R(u, ctx.receivers, ctx.shot_index);
  axpy(-1.0, d, resid);
  const Movie Au = ctx.prop->apply_wave_operator(u);
  return 0.5 * inner(resid, resid) + 0.5 * beta * B.penalty_norm_sq(Au);
}

double surrogate_gamma(const SpectralEstimate& est) { return 1.05 * est.mu; }

RecursionResult surrogate_solve(const ShotContext& ctx, const Annihilator& B, double beta, double gamma,
                                const ShotGather& d, int n_iters, const Movie* u0) {
  require_positive_beta(beta);
  if (!(gamma > 0.0)) throw ConfigError("surrogate needs gamma > 0");
  if (n_iters < 1) throw ConfigError("recursion needs at least one iteration");
  RecursionResult res;
  res.u = u0 ? *u0 : Movie(ctx.shape());
  res.history.push_back(wavefield_objective(ctx, B, beta, d, res.u));
  for (int k = 0; k < n_iters; ++k) {
    ShotGather resid = d;
    axpy(-1.0, sample_R(res.u, ctx.receivers, ctx.shot_index), resid);
    res.lambda = ctx.Sh(resid);
    res.q = B.apply_sq_inv(res.lambda);
    scale(res.q, 1.0 / beta);
    Movie next = ctx.prop->forward(res.q);  // u~^k
    scale(next, beta / (beta + gamma));
    axpy(gamma / (beta + gamma), res.u, next);
    res.u = std::move(next);
    const double J = wavefield_objective(ctx, B, beta, d, res.u);
    res.history.push_back(J);
    res.iterations = k + 1;
    if (!std::isfinite(J) || J > 10.0 * res.history.front() + 1e-300) {
      res.diverged = true;
      break;
    }
  }
  return res;
}

DataSpaceResult data_space_solve_esi(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                                     const CgConfig& cfg) {
  require_positive_beta(beta);
  const ShotGather v = data_space_apply(ctx, B, d);
  auto op = [&](const ShotGather& w) {
    ShotGather out = data_space_apply(ctx, B, w);
    axpy(beta, w, out);
    return out;
  };
  auto [w, rep] = cg_solve(op, v, cfg);
  ShotGather resid = d;
  axpy(-1.0, w, resid);
  Movie q = B.apply_sq_inv(ctx.Sh(resid));
  scale(q, 1.0 / beta);
  return {std::move(q), std::move(w), std::move(rep)};
}

DataSpaceResult data_space_solve_wri(const ShotContext& ctx, double beta, const SourceTerm& f, const ShotGather& d,
                                     const CgConfig& cfg) {
  ShotGather dd = d;
  axpy(-1.0, synthetic_data(ctx, f), dd);
  return data_space_solve_esi(ctx, Annihilator::identity(ctx.shape()), beta, dd, cfg);
}

namespace {

/// F N F^H qbar with N = S^H S + beta B^H B, streamed.
FreqField freq_apply(const ShotContext& ctx, const Annihilator& B, double beta, const FreqField& qbar) {
  const auto& prop = *ctx.prop;
  const GridDims& dims = prop.dims();
  const int nt = prop.time().nt;
  const double dt = prop.time().dt;
  std::vector<std::size_t> idx;
  for (const auto& r : ctx.receivers) idx.push_back(dims.index(r.iz, r.ix));

  std::vector<double> w2(dims.size(), 1.0);
  if (B.is_spatial())
    for (std::size_t k = 0; k < w2.size(); ++k) w2[k] = B.weights()[k] * B.weights()[k];

  DtftAccumulator pen(qbar.freqs(), dt, dims.nz, dims.nx);
  ShotGather ds = ctx.zero_gather();
  prop.forward_stream(
      [&](int n, std::span<double> s) {
        idtft_slice(qbar, n, nt, dt, s);
        if (beta != 0.0) {
          const double scale_n = B.is_spatial() ? beta : beta * B.weights()[n] * B.weights()[n];
          pen.add_weighted(n, s, w2, scale_n);
        }
      },
      [&](int n, std::span<const double> u) {
        auto row = ds.step(n);
        for (std::size_t r = 0; r < idx.size(); ++r) row[r] = u[idx[r]];
      });
  DtftAccumulator acc(qbar.freqs(), dt, dims.nz, dims.nx);
  prop.adjoint_stream(
      [&](int n, std::span<double> s) {
        const auto row = ds.step(n);
        for (std::size_t r = 0; r < idx.size(); ++r) s[idx[r]] += row[r];
      },
      [&](int n, std::span<const double> lam) { acc.add(n, lam); });
  FreqField out = acc.take();
  if (beta != 0.0) axpy(1.0, pen.result(), out);
  return out;
}

}  // namespace

LinearMap<FreqField, FreqField> freq_reduced_operator(const ShotContext& ctx, const Annihilator& B, double beta,
                                                      const std::vector<double>& freqs) {
  validate_frequencies(freqs, ctx.dt());
  LinearMap<FreqField, FreqField> op;
  op.name = "F(ShS+bBhB)Fh";
  op.apply = [ctx, B, beta](const FreqField& q) { return freq_apply(ctx, B, beta, q); };
  op.apply_adjoint = op.apply;
  const MovieShape shape = ctx.shape();
  op.domain_zero = [freqs, shape] { return FreqField(freqs, shape.nz, shape.nx); };
  op.range_zero = op.domain_zero;
  op.self_adjoint = true;
  return op;
}

FreqReducedResult freq_reduced_solve(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                                     const std::vector<double>& freqs, const CgConfig& cfg) {
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  const auto op = freq_reduced_operator(ctx, B, beta, freqs);
  const int nt = ctx.prop->time().nt;
  const double dt = ctx.dt();
  // F S^H F^H dbar, accumulated during the adjoint modeling.
  const ShotGather d_band = idtft_gather(dtft(d, freqs, dt), nt, dt, d.shot_index());
  const GridDims& dims = ctx.prop->dims();
  std::vector<std::size_t> idx;
  for (const auto& r : ctx.receivers) idx.push_back(dims.index(r.iz, r.ix));
  DtftAccumulator acc(freqs, dt, dims.nz, dims.nx);
  ctx.prop->adjoint_stream(
      [&](int n, std::span<double> s) {
        const auto row = d_band.step(n);
        for (std::size_t r = 0; r < idx.size(); ++r) s[idx[r]] += row[r];
      },
      [&](int n, std::span<const double> lam) { acc.add(n, lam); });
  const FreqField rhs = acc.take();
  auto [qbar, rep] = cg_solve(op.apply, rhs, cfg);
  Movie q = idtft(qbar, nt, dt);
  return {std::move(qbar), std::move(q), std::move(rep)};
}

}  // namespace xfwi
