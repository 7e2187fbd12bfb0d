#include "xfwi/inversion.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

#include "xfwi/csv.hpp"
#include "xfwi/error.hpp"
#include "xfwi/parallel.hpp"

namespace xfwi {

namespace {

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double vnorm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

double half_norm_sq(const ShotGather& r) {
  double s = 0.0;
  for (double v : r.values()) s += v * v;
  return 0.5 * s;
}

/// Slice source for f (optional) plus q (optional).
Propagator::SliceSource combined_source(const SourceTerm* f, const Movie* q, const GridDims& dims, int nt) {
  const PointSource* ps = f ? std::get_if<PointSource>(f) : nullptr;
  const Movie* fm = f ? std::get_if<Movie>(f) : nullptr;
  std::size_t ks = 0;
  if (ps) {
    if (static_cast<int>(ps->wavelet.size()) != nt) throw ConfigError("wavelet length must equal nt");
    ks = dims.index(ps->node.iz, ps->node.ix);
  }
  return [=](int n, std::span<double> s) {
    if (ps) s[ks] += ps->wavelet[n];
    if (fm) {
      const auto v = fm->slice(n);
      for (std::size_t k = 0; k < s.size(); ++k) s[k] += v[k];
    }
    if (q) {
      const auto v = q->slice(n);
      for (std::size_t k = 0; k < s.size(); ++k) s[k] += v[k];
    }
  };
}

std::vector<std::size_t> receiver_index(const GridDims& dims, const std::vector<GridNode>& receivers) {
  std::vector<std::size_t> idx;
  idx.reserve(receivers.size());
  for (const auto& r : receivers) idx.push_back(dims.index(r.iz, r.ix));
  return idx;
}

struct ExtendedPass {
  MisfitBreakdown J;
  ShotGather synthetic;
  std::vector<double> grad;
};

/// One forward modeling of u = A^{-1}(f + q): samples Ru for the misfit and,
/// when asked, accumulates sum_n beta w^2 q^n * dA/dm u^n from a three-slice
/// window so u is never stored.
ExtendedPass extended_pass(const ShotContext& ctx, const SourceTerm* f, const Movie& q, const Annihilator& B,
                           double beta, const ShotGather& d, bool want_grad) {
  const Propagator& prop = *ctx.prop;
  const GridDims& dims = prop.dims();
  const MovieShape shape = prop.movie_shape();
  if (!(q.shape() == shape)) throw ConfigError("extended source has the wrong shape");
  if (d.nt() != shape.nt || d.nr() != static_cast<int>(ctx.receivers.size())) {
    throw ConfigError("observed data does not match the acquisition");
  }
  ExtendedPass out;
  out.synthetic = ctx.zero_gather();
  const auto idx = receiver_index(dims, ctx.receivers);
  const std::size_t ns = shape.slice_size();
  std::vector<double> u1(ns, 0.0), u2(ns, 0.0), dadm(ns, 0.0);
  if (want_grad) out.grad.assign(ns, 0.0);
  prop.forward_stream(combined_source(f, &q, dims, shape.nt), [&](int n, std::span<const double> u) {
    auto row = out.synthetic.step(n);
    for (std::size_t r = 0; r < idx.size(); ++r) row[r] = u[idx[r]];
    if (!want_grad) return;
    prop.scheme_dAdm_step(n, u, u1, u2, dadm);
    const auto qn = q.slice(n);
    for (std::size_t k = 0; k < ns; ++k) {
      const double w = B.weight(n, k);
      out.grad[k] += beta * w * w * qn[k] * dadm[k];
    }
    std::swap(u1, u2);
    std::copy(u.begin(), u.end(), u1.begin());
  });
  ShotGather res = out.synthetic;
  axpy(-1.0, d, res);
  out.J.data = half_norm_sq(res);
  out.J.penalty = 0.5 * B.penalty_norm_sq(q);
  out.J.beta = beta;
  out.J.total = out.J.data + beta * out.J.penalty;
  return out;
}

}  // namespace

Method parse_method(const std::string& s) {
  const std::string v = lower(s);
  if (v == "fwi") return Method::FWI;
  if (v == "wri") return Method::WRI;
  if (v == "esi") return Method::ESI;
  throw ConfigError("unknown method '" + s + "' (expected fwi, wri or esi)");
}

std::string to_string(Method m) {
  switch (m) {
    case Method::FWI: return "fwi";
    case Method::WRI: return "wri";
    case Method::ESI: return "esi";
  }
  return "?";
}

InnerSolver parse_inner_solver(const std::string& s) {
  const std::string v = lower(s);
  if (v == "cg") return InnerSolver::Cg;
  if (v == "data-space" || v == "dataspace" || v == "smw") return InnerSolver::DataSpace;
  if (v == "gauss-seidel" || v == "gs") return InnerSolver::GaussSeidel;
  if (v == "surrogate") return InnerSolver::Surrogate;
  if (v == "freq-reduced" || v == "frequency") return InnerSolver::FreqReduced;
  throw ConfigError("unknown inner solver '" + s + "'");
}

std::string to_string(InnerSolver s) {
  switch (s) {
    case InnerSolver::Cg: return "cg";
    case InnerSolver::DataSpace: return "data-space";
    case InnerSolver::GaussSeidel: return "gauss-seidel";
    case InnerSolver::Surrogate: return "surrogate";
    case InnerSolver::FreqReduced: return "freq-reduced";
  }
  return "?";
}

// ---------------------------------------------------------------------------

MisfitBreakdown misfit_fwi(const ShotContext& ctx, const SourceTerm& f, const ShotGather& d, ShotGather* synthetic) {
  ShotGather syn = synthetic_data(ctx, f);
  ShotGather res = syn;
  axpy(-1.0, d, res);
  MisfitBreakdown J;
  J.data = half_norm_sq(res);
  J.total = J.data;
  if (synthetic) *synthetic = std::move(syn);
  return J;
}

std::vector<double> gradient_fwi(const ShotContext& ctx, const SourceTerm& f, const ShotGather& d,
                                 WavefieldStore* store, MisfitBreakdown* misfit) {
  const Propagator& prop = *ctx.prop;
  const GridDims& dims = prop.dims();
  const MovieShape shape = prop.movie_shape();
  std::shared_ptr<WavefieldStore> own;
  if (!store) {
    own = WavefieldStore::in_memory();
    store = own.get();
  }
  StoredWavefield u = prop.forward(f, *store);
  const auto idx = receiver_index(dims, ctx.receivers);
  const std::size_t ns = shape.slice_size();

  ShotGather res = ctx.zero_gather();
  std::vector<double> buf(ns);
  for (int n = 0; n < shape.nt; ++n) {
    u.read_step(n, buf);
    auto row = res.step(n);
    const auto dn = d.step(n);
    for (std::size_t r = 0; r < idx.size(); ++r) row[r] = dn[r] - buf[idx[r]];
  }
  if (misfit) {
    *misfit = {};
    misfit->data = half_norm_sq(res);
    misfit->total = misfit->data;
  }

  // Backward sweep: lambda^n arrives in decreasing n; keep u^n, u^{n-1}, u^{n-2}.
  std::vector<double> grad(ns, 0.0), un(ns), un1(ns), un2(ns), dadm(ns);
  const std::vector<double> zero(ns, 0.0);
  auto read = [&](int n, std::vector<double>& out) {
    if (n >= 0) u.read_step(n, out);
    else std::fill(out.begin(), out.end(), 0.0);
  };
  int top = shape.nt;  // step held in un
  prop.adjoint_stream(
      [&](int n, std::span<double> s) {
        const auto rn = res.step(n);
        for (std::size_t r = 0; r < idx.size(); ++r) s[idx[r]] += rn[r];
      },
      [&](int n, std::span<const double> lam) {
        if (top == shape.nt) {
          read(n, un);
          read(n - 1, un1);
          read(n - 2, un2);
        } else {
          std::swap(un, un1);
          std::swap(un1, un2);
          read(n - 2, un2);
        }
        top = n;
        prop.scheme_dAdm_step(n, un, un1, un2, dadm);
        for (std::size_t k = 0; k < ns; ++k) grad[k] += lam[k] * dadm[k];
      });
  return grad;
}

MisfitBreakdown misfit_wri(const ShotContext& ctx, const SourceTerm& f, const ShotGather& d, double beta,
                           const Movie& q, ShotGather* synthetic) {
  auto p = extended_pass(ctx, &f, q, Annihilator::identity(ctx.shape()), beta, d, false);
  if (synthetic) *synthetic = std::move(p.synthetic);
  return p.J;
}

MisfitBreakdown misfit_esi(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                           const Movie& q, ShotGather* synthetic) {
  auto p = extended_pass(ctx, nullptr, q, B, beta, d, false);
  if (synthetic) *synthetic = std::move(p.synthetic);
  return p.J;
}

std::vector<double> gradient_wri(const ShotContext& ctx, const SourceTerm& f, const ShotGather& d, double beta,
                                 const Movie& q, MisfitBreakdown* misfit) {
  auto p = extended_pass(ctx, &f, q, Annihilator::identity(ctx.shape()), beta, d, true);
  if (misfit) *misfit = p.J;
  return std::move(p.grad);
}

std::vector<double> gradient_esi(const ShotContext& ctx, const Annihilator& B, double beta, const ShotGather& d,
                                 const Movie& q, MisfitBreakdown* misfit) {
  auto p = extended_pass(ctx, nullptr, q, B, beta, d, true);
  if (misfit) *misfit = p.J;
  return std::move(p.grad);
}

// ---------------------------------------------------------------------------

namespace {

CgReport recursion_report(const RecursionResult& r, const char* what) {
  if (r.diverged) {
    throw NumericalError(std::string(what) + " recursion diverged after " + std::to_string(r.iterations) +
                         " iterations (spectral radius >= 1; increase beta)");
  }
  CgReport rep;
  rep.iterations = r.iterations;
  rep.residual_history = r.history;
  rep.converged = true;
  return rep;
}

}  // namespace

InnerSolution solve_extended_source(Method method, const ShotContext& ctx, const Annihilator& B, double beta,
                                    const SourceTerm* f, const ShotGather& d, const InnerSolveConfig& cfg,
                                    const Movie* warm, const std::vector<double>* mask, double f_peak,
                                    WavefieldStore* store) {
  if (method == Method::FWI) throw ConfigError("FWI has no extended source");
  if (method == Method::WRI && !f) throw ConfigError("WRI needs the physical source");
  if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
  cfg.cg.validate();
  const bool wri = method == Method::WRI;
  const Annihilator W = wri ? Annihilator::identity(ctx.shape()) : B;
  if (mask && cfg.solver != InnerSolver::Cg) throw ConfigError("a source mask needs the cg inner solver");

  // WRI solves the ESI problem with identity weights on the residual data.
  auto residual_data = [&] {
    if (!wri) return d;
    ShotGather r = d;
    axpy(-1.0, synthetic_data(ctx, *f), r);
    return r;
  };

  InnerSolution sol;
  switch (cfg.solver) {
    case InnerSolver::Cg: {
      Reservation res;
      if (store) res = reserve_cg_workspace(*store, ctx.shape());
      auto op = wri ? wri_normal_operator(ctx, beta) : esi_normal_operator(ctx, B, beta);
      Movie rhs = wri ? wri_rhs(ctx, d, *f) : esi_rhs(ctx, d);
      if (mask) {
        op = masked_operator(op, *mask);
        apply_spatial_mask(rhs, *mask);
      }
      Movie x0;
      if (warm) {
        x0 = *warm;
        if (mask) apply_spatial_mask(x0, *mask);
      }
      auto [q, rep] = cg_solve(op.apply, rhs, cfg.cg, warm ? &x0 : nullptr);
      sol.q = std::move(q);
      sol.report = std::move(rep);
      break;
    }
    case InnerSolver::DataSpace: {
      auto r = wri ? data_space_solve_wri(ctx, beta, *f, d, cfg.cg) : data_space_solve_esi(ctx, B, beta, d, cfg.cg);
      sol.q = std::move(r.q);
      sol.report = std::move(r.report);
      break;
    }
    case InnerSolver::GaussSeidel: {
      if (beta <= 0.0) throw ConfigError("Gauss-Seidel needs beta > 0");
      auto r = gauss_seidel_solve(ctx, W, beta, residual_data(), cfg.recursion_iters);
      sol.report = recursion_report(r, "Gauss-Seidel");
      sol.q = std::move(r.q);
      break;
    }
    case InnerSolver::Surrogate: {
      if (beta <= 0.0) throw ConfigError("the surrogate recursion needs beta > 0");
      const auto est = estimate_spectral_radius(ctx, W, beta, cfg.power_iters);
      auto r = surrogate_solve(ctx, W, beta, surrogate_gamma(est), residual_data(), cfg.recursion_iters);
      sol.report = recursion_report(r, "surrogate");
      sol.q = std::move(r.q);
      break;
    }
    case InnerSolver::FreqReduced: {
      std::vector<double> freqs = cfg.freqs;
      if (freqs.empty()) {
        if (f_peak <= 0.0) throw ConfigError("freq-reduced solver needs frequencies or a peak frequency");
        freqs = default_frequencies(f_peak);
      }
      auto r = freq_reduced_solve(ctx, W, beta, residual_data(), freqs, cfg.cg);
      sol.q = std::move(r.q);
      sol.report = std::move(r.report);
      break;
    }
  }
  return sol;
}

double reference_beta(const ShotContext& ctx, const Annihilator& B, const ShotGather& d, double scale) {
  const double dn = norm(d);
  if (dn == 0.0) throw ConfigError("data is zero; cannot scale beta");
  const double shd = norm(ctx.Sh(d));
  double s = 0.0;
  for (double w : B.weights()) s += w * w;
  const double wmean = s / static_cast<double>(B.weights().size());
  return scale * shd * shd / (dn * dn) / wmean;
}

double update_beta(double data_misfit, double noise_target, double beta, double growth) {
  if (growth < 1.0) throw ConfigError("beta growth factor must be >= 1");
  return data_misfit < noise_target ? beta * growth : beta;
}

// ---------------------------------------------------------------------------

double Survey::data_norm_sq() const {
  double s = 0.0;
  for (const auto& g : observed)
    for (double v : g.values()) s += v * v;
  return s;
}

Survey simulate_survey(const ModelGrid& truth, const Acquisition& acq, const std::vector<double>& wavelet,
                       int threads) {
  Survey s;
  s.acq = acq;
  s.wavelet = wavelet;
  s.observed.resize(acq.num_shots());
  const auto prop = std::make_shared<const Propagator>(truth, acq.time);
  parallel_for(acq.num_shots(), threads, [&](int i) {
    ShotContext ctx{prop, acq.receivers, i};
    s.observed[i] = synthetic_data(ctx, s.source(i));
  });
  return s;
}

Evaluation evaluate(const Survey& survey, const ModelGrid& m, const EvalOptions& opts,
                    const std::vector<Movie>* warm) {
  const Acquisition& acq = survey.acq;
  const int ns = acq.num_shots();
  if (static_cast<int>(survey.observed.size()) != ns) throw ConfigError("one observed gather per shot is required");
  if (opts.method != Method::ESI && static_cast<int>(survey.wavelet.size()) != acq.time.nt) {
    throw ConfigError("FWI and WRI need a source wavelet of length nt");
  }
  const auto prop = std::make_shared<const Propagator>(m, acq.time);

  std::vector<MisfitBreakdown> J(ns);
  std::vector<std::vector<double>> grads(ns);
  Evaluation ev;
  ev.synthetic.resize(ns);
  ev.reports.resize(ns);
  if (opts.keep_q) ev.q.resize(ns);

  parallel_for(ns, opts.threads, [&](int s) {
    ShotContext ctx{prop, acq.receivers, s};
    const ShotGather& d = survey.observed[s];
    if (opts.method == Method::FWI) {
      const SourceTerm f = survey.source(s);
      if (opts.with_gradient) {
        grads[s] = gradient_fwi(ctx, f, d, opts.store.get(), &J[s]);
        ev.synthetic[s] = synthetic_data(ctx, f);
      } else {
        J[s] = misfit_fwi(ctx, f, d, &ev.synthetic[s]);
      }
      return;
    }
    const Annihilator B = opts.method == Method::WRI ? Annihilator::identity(ctx.shape())
                                                     : make_annihilator(opts.annihilator, acq, s);
    const SourceTerm f = opts.method == Method::WRI ? SourceTerm(survey.source(s)) : SourceTerm(Movie{});
    const SourceTerm* fp = opts.method == Method::WRI ? &f : nullptr;
    const Movie* w0 = warm && static_cast<int>(warm->size()) == ns && (*warm)[s].shape() == ctx.shape()
                          ? &(*warm)[s]
                          : nullptr;
    auto sol = solve_extended_source(opts.method, ctx, B, opts.beta, fp, d, opts.inner,
                                     opts.inner.warm_start ? w0 : nullptr, nullptr, acq.f_peak, opts.store.get());
    auto pass = extended_pass(ctx, fp, sol.q, B, opts.beta, d, opts.with_gradient);
    J[s] = pass.J;
    grads[s] = std::move(pass.grad);
    ev.synthetic[s] = std::move(pass.synthetic);
    ev.reports[s] = std::move(sol.report);
    if (opts.keep_q) ev.q[s] = std::move(sol.q);
  });

  ev.J.beta = opts.method == Method::FWI ? 0.0 : opts.beta;
  for (int s = 0; s < ns; ++s) ev.J += J[s];
  if (opts.with_gradient) {
    ev.gradient.assign(m.dims().size(), 0.0);
    for (int s = 0; s < ns; ++s)
      for (std::size_t k = 0; k < ev.gradient.size(); ++k) ev.gradient[k] += grads[s][k];
  }
  return ev;
}

// ---------------------------------------------------------------------------

Lbfgs::Lbfgs(int memory, bool scale_initial) : memory_(memory), scale_initial_(scale_initial) {
  if (memory < 1) throw ConfigError("L-BFGS memory must be >= 1");
}

std::vector<double> Lbfgs::direction(const std::vector<double>& g) const {
  std::vector<double> q = g;
  const int k = size();
  std::vector<double> a(k);
  for (int i = k - 1; i >= 0; --i) {
    a[i] = rho_[i] * dot(s_[i], q);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] -= a[i] * y_[i][j];
  }
  if (k > 0 && scale_initial_) {
    const double gamma = dot(s_.back(), y_.back()) / dot(y_.back(), y_.back());
    for (double& v : q) v *= gamma;
  }
  for (int i = 0; i < k; ++i) {
    const double b = rho_[i] * dot(y_[i], q);
    for (std::size_t j = 0; j < q.size(); ++j) q[j] += (a[i] - b) * s_[i][j];
  }
  for (double& v : q) v = -v;
  return q;
}

bool Lbfgs::update(const std::vector<double>& s, const std::vector<double>& y) {
  const double sy = dot(s, y);
  if (!(sy > 1e-300)) return false;
  if (size() == memory_) {
    s_.erase(s_.begin());
    y_.erase(y_.begin());
    rho_.erase(rho_.begin());
  }
  s_.push_back(s);
  y_.push_back(y);
  rho_.push_back(1.0 / sy);
  return true;
}

void Lbfgs::reset() {
  s_.clear();
  y_.clear();
  rho_.clear();
}

double model_rms_error(const ModelGrid& a, const ModelGrid& b) {
  if (!(a.dims() == b.dims())) throw ConfigError("models have different grids");
  const GridDims& d = a.dims();
  const auto va = a.velocity();
  const auto vb = b.velocity();
  double s = 0.0;
  std::size_t n = 0;
  for (int ix = d.nb; ix < d.nx - d.nb; ++ix)
    for (int iz = d.nb; iz < d.nz - d.nb; ++iz) {
      const double e = va[d.index(iz, ix)] - vb[d.index(iz, ix)];
      s += e * e;
      ++n;
    }
  return n ? std::sqrt(s / n) : 0.0;
}

namespace {

std::vector<double> update_mask(const InversionConfig& cfg, const GridDims& d) {
  std::vector<double> mask(d.size(), 1.0);
  const int water_nodes = cfg.water_depth > 0.0 ? static_cast<int>(std::ceil(cfg.water_depth / d.dz - 1e-9)) : 0;
  for (int ix = 0; ix < d.nx; ++ix)
    for (int iz = 0; iz < d.nz; ++iz) {
      if (cfg.mask_absorbing && d.in_absorbing_zone(iz, ix)) mask[d.index(iz, ix)] = 0.0;
      if (iz < d.nb + water_nodes) mask[d.index(iz, ix)] = 0.0;
    }
  return mask;
}

double automatic_beta(const InversionConfig& cfg, const ModelGrid& m0, const Survey& survey) {
  const Acquisition& acq = survey.acq;
  const auto prop = std::make_shared<const Propagator>(m0, acq.time);
  ShotContext ctx{prop, acq.receivers, 0};
  const Annihilator B = cfg.method == Method::ESI ? make_annihilator(cfg.annihilator, acq, 0)
                                                  : Annihilator::identity(ctx.shape());
  return reference_beta(ctx, B, survey.observed.at(0), 1e-3);
}

}  // namespace

InversionResult invert(const InversionConfig& cfg, const ModelGrid& m0, const Survey& survey,
                       const ModelGrid* truth) {
  if (cfg.n_outer < 0) throw ConfigError("n_outer must be >= 0");
  if (!(cfg.armijo_c1 > 0.0 && cfg.armijo_c1 < 1.0)) throw ConfigError("Armijo constant must be in (0, 1)");
  if (!(cfg.max_rel_update > 0.0)) throw ConfigError("max_rel_update must be positive");
  const GridDims& dims = m0.dims();
  const Acquisition& acq = survey.acq;

  // Velocity bounds; the upper one never exceeds the stability limit.
  const double v_cfl = cfl_limit() / (acq.time.dt * std::sqrt(1.0 / (dims.dx * dims.dx) + 1.0 / (dims.dz * dims.dz)));
  const double vmin = cfg.vmin > 0.0 ? cfg.vmin : 0.5 * m0.min_velocity();
  const double vmax = std::min(cfg.vmax > 0.0 ? cfg.vmax : 2.0 * m0.max_velocity(), 0.999 * v_cfl);
  if (!(vmin < vmax)) throw ConfigError("velocity bounds are empty");
  const double mlo = 1.0 / (vmax * vmax), mhi = 1.0 / (vmin * vmin);

  EvalOptions opts;
  opts.method = cfg.method;
  opts.annihilator = cfg.annihilator;
  opts.inner = cfg.inner;
  opts.with_gradient = true;
  opts.keep_q = cfg.inner.warm_start;
  opts.threads = cfg.threads;
  opts.beta = cfg.method == Method::FWI ? 0.0 : (cfg.beta0 >= 0.0 ? cfg.beta0 : automatic_beta(cfg, m0, survey));
  const double noise_target = cfg.noise_fraction * survey.data_norm_sq();
  const auto mask = update_mask(cfg, dims);

  auto masked_eval = [&](const std::vector<double>& m, const std::vector<Movie>* warm) {
    Evaluation e = evaluate(survey, m0.with_squared_slowness(m), opts, warm);
    for (std::size_t k = 0; k < mask.size(); ++k) {
      if (!std::isfinite(e.gradient[k])) throw NumericalError("non-finite gradient");
      e.gradient[k] *= mask[k];
    }
    if (!std::isfinite(e.J.total)) throw NumericalError("non-finite misfit");
    return e;
  };

  std::vector<double> m(m0.squared_slowness().begin(), m0.squared_slowness().end());
  InversionResult result{m0, {}, false, {}};
  Evaluation cur = masked_eval(m, nullptr);

  auto record = [&](int it, double alpha) {
    IterationRecord r;
    r.iter = it;
    r.J = cur.J;
    r.grad_norm = vnorm(cur.gradient);
    r.alpha = alpha;
    r.beta = opts.beta;
    const ModelGrid mg = m0.with_squared_slowness(m);
    if (truth) r.model_rms_error = model_rms_error(mg, *truth);
    if (cfg.snapshot_every > 0 && !cfg.out_dir.empty() && it % cfg.snapshot_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "model_iter_%03d", it);
      save_model(mg, cfg.out_dir / name);
      r.snapshot = name;
    }
    result.records.push_back(r);
  };
  record(0, 0.0);

  Lbfgs lbfgs(cfg.lbfgs_memory);
  for (int it = 1; it <= cfg.n_outer; ++it) {
    const auto& g = cur.gradient;
    std::vector<double> p = lbfgs.direction(g);
    if (!(dot(g, p) < 0.0)) {
      lbfgs.reset();
      p = lbfgs.direction(g);
    }
    double pmax = 0.0;
    for (double v : p) pmax = std::max(pmax, std::abs(v));
    if (pmax == 0.0) break;  // zero gradient: stationary
    const double mmax = *std::max_element(m.begin(), m.end());
    double alpha = std::min(1.0, cfg.max_rel_update * mmax / pmax);
    if (lbfgs.size() == 0) alpha = cfg.max_rel_update * mmax / pmax;

    bool accepted = false;
    std::vector<double> trial(m.size());
    Evaluation next;
    for (int k = 0; k <= cfg.max_backtracks; ++k, alpha *= 0.5) {
      double slope = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i) {
        trial[i] = std::clamp(m[i] + alpha * p[i], mlo, mhi);
        slope += g[i] * (trial[i] - m[i]);
      }
      if (!(slope < 0.0)) break;
      next = masked_eval(trial, opts.keep_q ? &cur.q : nullptr);
      if (next.J.total <= cur.J.total + cfg.armijo_c1 * slope) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      result.line_search_failed = true;
      std::fprintf(stderr, "line search failed at iteration %d\n", it);
      break;
    }
    std::vector<double> s(m.size()), y(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) {
      s[i] = trial[i] - m[i];
      y[i] = next.gradient[i] - g[i];
    }
    lbfgs.update(s, y);
    m = trial;
    cur = std::move(next);

    if (cfg.method != Method::FWI) {
      const double nb = update_beta(cur.J.data, noise_target, opts.beta, cfg.beta_growth);
      if (nb != opts.beta) {
        opts.beta = nb;
        cur = masked_eval(m, opts.keep_q ? &cur.q : nullptr);
        lbfgs.reset();
      }
    }
    record(it, alpha);
  }
  result.model = m0.with_squared_slowness(m);
  result.last_reports = cur.reports;
  return result;
}

void write_iteration_log(const std::vector<IterationRecord>& records, const std::filesystem::path& path) {
  CsvWriter csv(path, {"iter", "J_total", "J_e", "J_p", "beta", "grad_norm", "alpha", "model_rms_error_m_per_s"});
  for (const auto& r : records) {
    csv.row({double(r.iter), r.J.total, r.J.data, r.J.penalty, r.beta, r.grad_norm, r.alpha, r.model_rms_error});
  }
}

// ---------------------------------------------------------------------------

std::vector<LandscapeRow> misfit_landscape_scan(const ModelGrid& m_true, const Survey& survey, Method method,
                                                const std::vector<double>& betas, const std::vector<double>& eps,
                                                const EvalOptions& base) {
  std::vector<LandscapeRow> rows;
  EvalOptions opts = base;
  opts.method = method;
  opts.with_gradient = false;
  opts.keep_q = false;
  const std::vector<double> fwi_beta{0.0};
  const auto& bs = method == Method::FWI ? fwi_beta : betas;
  if (bs.empty()) throw ConfigError("landscape scan needs at least one beta");
  for (double e : eps) {
    const ModelGrid m = perturb_model(m_true, e);
    for (double b : bs) {
      opts.beta = b;
      rows.push_back({e, b, evaluate(survey, m, opts).J});
    }
  }
  return rows;
}

double unimodal_width(const std::vector<double>& eps, const std::vector<double>& J) {
  const int n = static_cast<int>(eps.size());
  if (n == 0 || J.size() != eps.size()) throw ConfigError("unimodal_width: size mismatch");
  for (int i = 1; i < n; ++i)
    if (!(eps[i] > eps[i - 1])) throw ConfigError("unimodal_width: eps must be increasing");
  int i = 0;
  for (int k = 1; k < n; ++k)
    if (std::abs(eps[k]) < std::abs(eps[i])) i = k;
  // Walk downhill to the local minimum.
  for (;;) {
    if (i + 1 < n && J[i + 1] < J[i]) ++i;
    else if (i > 0 && J[i - 1] < J[i]) --i;
    else break;
  }
  int lo = i, hi = i;
  while (hi + 1 < n && J[hi + 1] >= J[hi]) ++hi;
  while (lo > 0 && J[lo - 1] >= J[lo]) --lo;
  return eps[hi] - eps[lo];
}

}  // namespace xfwi
