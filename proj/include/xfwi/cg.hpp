#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <type_traits>
#include <utility>
#include <vector>

#include "xfwi/error.hpp"
#include "xfwi/field.hpp"

namespace xfwi {

struct CgConfig {
  int max_iters = 10;
  double tol = 1e-3;
  bool record_history = true;

  void validate() const {
    if (max_iters < 1) throw ConfigError("CG needs max_iters >= 1");
    if (!(tol > 0.0 && tol < 1.0)) throw ConfigError("CG tol must lie in (0, 1)");
  }
};

struct CgReport {
  int iterations = 0;
  /// residual_history[0] = ||r_0||, then one entry per iteration.
  std::vector<double> residual_history;
  bool converged = false;
};

/// Writes "iter,residual_norm" rows.
void write_cg_report_csv(const CgReport& report, const std::filesystem::path& path);

/// Unpreconditioned CG for a self-adjoint PSD operator. Starts from zero unless
/// x0 is given; stops when ||r_{k+1}|| < tol ||r_0|| (tol ||b|| for a warm
/// start) or after max_iters iterations. `on_iter(k, x)` sees the iterate after k updates.
template <FieldVector V, class Apply>
std::pair<V, CgReport> cg_solve(Apply&& A, const V& b, const CgConfig& cfg, const std::type_identity_t<V>* x0 = nullptr,
                                const std::function<void(int, const std::type_identity_t<V>&)>& on_iter = {}) {
  cfg.validate();
  CgReport rep;
  V x = x0 ? *x0 : zeros_like(b);
  V r = b;
  if (x0) axpy(-1.0, A(x), r);
  double rr = inner(r, r);
  const double r0 = std::sqrt(rr);
  if (!std::isfinite(r0)) throw NumericalError("CG: right-hand side is not finite");
  rep.residual_history.push_back(r0);
  // A warm start is judged against ||b|| so an accurate x0 is not refined further.
  const double ref = x0 ? norm(b) : r0;
  if (r0 == 0.0 || r0 < cfg.tol * ref) {
    rep.converged = true;
    return {std::move(x), std::move(rep)};
  }
  V p = r;
  for (int k = 0; k < cfg.max_iters; ++k) {
    const V Ap = A(p);
    const double pAp = inner(p, Ap);
    if (!(pAp > 0.0)) throw NumericalError("CG breakdown: p^H A p <= 0 (operator not SPD)");
    const double alpha = rr / pAp;
    axpy(alpha, p, x);
    axpy(-alpha, Ap, r);
    const double rr_new = inner(r, r);
    const double rn = std::sqrt(rr_new);
    rep.iterations = k + 1;
    if (cfg.record_history) rep.residual_history.push_back(rn);
    if (on_iter) on_iter(k + 1, x);
    if (rn < cfg.tol * ref) {
      rep.converged = true;
      break;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    // p = r + beta p
    scale(p, beta);
    axpy(1.0, r, p);
  }
  return {std::move(x), std::move(rep)};
}

}  // namespace xfwi
