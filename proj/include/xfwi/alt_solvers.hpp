#pragma once

#include <cstdint>
#include <vector>

#include "xfwi/cg.hpp"
#include "xfwi/linops.hpp"
#include "xfwi/normal_ops.hpp"

namespace xfwi {

struct SpectralEstimate {
  /// Largest eigenvalue of S (B^H B)^{-1} S^H (data space, symmetric).
  double mu = 0.0;
  /// Spectral radius of (1/beta) A^{-1} (B^H B)^{-1} A^{-H} R^H R, i.e. mu / beta.
  double rho = 0.0;
  int iterations = 0;
  /// Relative gap between the last two Rayleigh quotients.
  double gap = 0.0;
  bool converged = false;
};

/// Power iteration on S (B^H B)^{-1} S^H. The eigenvalues of the Gauss-Seidel
/// iteration operator are these divided by beta.
SpectralEstimate estimate_spectral_radius(const ShotContext& ctx, const Annihilator& B, double beta,
                                          int n_power_iters, std::uint64_t seed = 1, double tol = 1e-6);

struct RecursionResult {
  Movie u;
  Movie lambda;
  Movie q;
  /// Gauss-Seidel: ||u^{k+1} - u^k||. Surrogate: J(u^k), starting with J(u^0).
  std::vector<double> history;
  bool diverged = false;
  int iterations = 0;
};

/// lambda^k = A^{-H} R^H (d - R u^k); q^k = (1/beta)(B^H B)^{-1} lambda^k; u^{k+1} = A^{-1} q^k.
/// Stops early (diverged = true) when the update norm grows more than tenfold
/// over three iterations or turns non-finite.
RecursionResult gauss_seidel_solve(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                                   int n_iters, const Movie* u0 = nullptr);

/// J(u) = 1/2 ||R u - d||^2 + beta/2 ||B A u||^2
double wavefield_objective(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                           const Movie& u);

/// gamma such that gamma (BA)^H BA - R^H R is PSD: 1.05 times the power-iteration mu.
double surrogate_gamma(const SpectralEstimate& est);

/// u^{k+1} = (beta u~^k + gamma u^k) / (beta + gamma) with u~^k the Gauss-Seidel image of u^k.
RecursionResult surrogate_solve(const ShotContext& ctx, const Annihilator& B, double beta, double gamma,
                                const ShotGather& d, int n_iters, const Movie* u0 = nullptr);

struct DataSpaceResult {
  Movie q;
  /// Synthetic data S q (plus S f for WRI).
  ShotGather w;
  CgReport report;
};

/// (beta I + S W^{-1} S^H) w = S W^{-1} S^H d,  q = (beta W)^{-1} S^H (d - w),  W = B^H B.
DataSpaceResult data_space_solve_esi(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                                     const CgConfig& cfg);
/// Same with d replaced by d - S f and B = I; the returned w is the data-space
/// unknown, so the modeled data is w + S f.
DataSpaceResult data_space_solve_wri(const ShotContext& ctx, double beta, const SourceTerm& f, const ShotGather& d,
                                     const CgConfig& cfg);

struct FreqReducedResult {
  FreqField qbar;
  Movie q;
  CgReport report;
};

/// CG on F (S^H S + beta B^H B) F^H qbar = F S^H F^H dbar with F^H the inverse
/// DTFT (1/N_t scaling). No wavefield movie is stored: every apply streams
/// q = F^H qbar through a forward and an adjoint modeling and accumulates
/// the DTFT on the fly.
FreqReducedResult freq_reduced_solve(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                                     const std::vector<double>& freqs, const CgConfig& cfg);

/// The operator used by freq_reduced_solve, exposed for testing.
LinearMap<FreqField, FreqField> freq_reduced_operator(const ShotContext& ctx, const Annihilator& B, double beta,
                                                      const std::vector<double>& freqs);

}  // namespace xfwi
