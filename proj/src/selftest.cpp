#include "xfwi/selftest.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>

#include "xfwi/alt_solvers.hpp"
#include "xfwi/error.hpp"
#include "xfwi/inversion.hpp"

namespace xfwi {

namespace {

struct Tiny {
  ModelGrid model;
  ModelGrid truth;
  Acquisition acq;
  ShotContext ctx;
  Survey survey;
};

ModelGrid wavy_model(const GridDims& dims, double phase, double vmin, double vmax) {
  std::vector<double> v(dims.size());
  for (int ix = 0; ix < dims.nx; ++ix)
    for (int iz = 0; iz < dims.nz; ++iz) {
      const double s = 0.5 + 0.25 * std::sin(0.7 * iz + phase) + 0.25 * std::cos(0.5 * ix + 2 * phase);
      v[dims.index(iz, ix)] = vmin + (vmax - vmin) * s;
    }
  return ModelGrid::from_velocity(dims, v);
}

Tiny make_tiny(int n, int nt, int nb) {
  GridDims dims{n, n, 10.0, 10.0, nb};
  Acquisition acq;
  acq.dims = dims;
  acq.time = {nt, 0.002};
  acq.f_peak = 25.0;
  acq.sources = {{nb + 1, n / 2}};
  for (int ix = nb; ix < n - nb; ix += 2) acq.receivers.push_back({n - nb - 2, ix});
  ModelGrid model = wavy_model(dims, 0.3, 1500.0, 2000.0);
  ModelGrid truth = wavy_model(dims, 1.9, 1400.0, 2100.0);
  ShotContext ctx = make_shot_context(model, acq, 0);
  Survey survey = simulate_survey(truth, acq, ricker(acq.f_peak, nt, acq.time.dt));
  return {std::move(model), std::move(truth), std::move(acq), std::move(ctx), std::move(survey)};
}

Eigen::VectorXd as_eigen(std::span<const double> v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

class Recorder {
 public:
  Recorder(std::vector<SelftestCase>& out, std::string suite) : out_(out), suite_(std::move(suite)) {}
  void check(const std::string& name, double value, double tol) {
    out_.push_back({suite_, name, value, tol, std::isfinite(value) && value <= tol});
  }

 private:
  std::vector<SelftestCase>& out_;
  std::string suite_;
};

void dot_suite(Recorder& rec, bool broken) {
  const Tiny T = make_tiny(11, 60, 2);
  auto S = op_S(T.ctx.prop, T.ctx.receivers);
  if (broken) {
    auto adj = S.apply_adjoint;
    S.apply_adjoint = [adj](const ShotGather& d) {
      Movie m = adj(d);
      scale(m, 1.0 + 1e-3);
      return m;
    };
  }
  const auto B = make_annihilator(AnnihilatorKind::SpatialDistance, T.acq, 0);
  rec.check("propagator", dot_product_test(op_Ainv(T.ctx.prop), 1).rel_error, 1e-10);
  rec.check("R", dot_product_test(op_R(T.ctx.shape(), T.ctx.receivers), 2).rel_error, 1e-10);
  rec.check("S", dot_product_test(S, 3).rel_error, 1e-10);
  rec.check("esi normal", dot_product_test(esi_normal_operator(T.ctx, B, 0.5), 4).rel_error, 1e-10);
  rec.check("wri normal", dot_product_test(wri_normal_operator(T.ctx, 0.5), 5).rel_error, 1e-10);
}

double fd_rel(const Tiny& T, const EvalOptions& o) {
  const auto ev = evaluate(T.survey, T.model, o);
  const auto mv = T.model.squared_slowness();
  const double mmax = *std::max_element(mv.begin(), mv.end());
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> dm(mv.size());
  for (double& v : dm) v = mmax * u(rng);
  double gd = 0.0;
  for (std::size_t k = 0; k < dm.size(); ++k) gd += ev.gradient[k] * dm[k];
  EvalOptions oo = o;
  oo.with_gradient = false;
  double best = std::numeric_limits<double>::infinity();
  for (double h : {1e-3, 1e-4, 1e-5}) {
    std::vector<double> mp(mv.begin(), mv.end()), mm(mv.begin(), mv.end());
    for (std::size_t k = 0; k < dm.size(); ++k) {
      mp[k] += h * dm[k];
      mm[k] -= h * dm[k];
    }
    const double jp = evaluate(T.survey, T.model.with_squared_slowness(mp), oo).J.total;
    const double jm = evaluate(T.survey, T.model.with_squared_slowness(mm), oo).J.total;
    best = std::min(best, std::abs((jp - jm) / (2 * h) - gd) / std::abs(gd));
  }
  return best;
}

void gradient_suite(Recorder& rec) {
  const Tiny T = make_tiny(9, 50, 2);
  EvalOptions o;
  o.inner.cg.tol = 1e-8;
  o.inner.cg.max_iters = 2000;
  o.method = Method::FWI;
  rec.check("fwi", fd_rel(T, o), 1e-4);
  const Annihilator I = Annihilator::identity(T.ctx.shape());
  o.method = Method::WRI;
  o.beta = 0.05 * estimate_spectral_radius(T.ctx, I, 1.0, 100).mu;
  rec.check("wri", fd_rel(T, o), 1e-3);
  const Annihilator B = make_annihilator(AnnihilatorKind::SpatialDistance, T.acq, 0);
  o.method = Method::ESI;
  o.beta = 0.05 * estimate_spectral_radius(T.ctx, B, 1.0, 100).mu;
  rec.check("esi", fd_rel(T, o), 1e-3);
}

Eigen::MatrixXd dense_S(const ShotContext& ctx) {
  Movie e(ctx.shape());
  const auto n = static_cast<Eigen::Index>(e.values().size());
  const auto rows = static_cast<Eigen::Index>(ctx.zero_gather().values().size());
  Eigen::MatrixXd M(rows, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e.values()[j] = 1.0;
    M.col(j) = as_eigen(ctx.S(e).values());
    e.values()[j] = 0.0;
  }
  return M;
}

Eigen::VectorXd weights_sq(const Annihilator& B) {
  const MovieShape sh = B.shape();
  Eigen::VectorXd w(static_cast<Eigen::Index>(sh.size()));
  for (int n = 0; n < sh.nt; ++n)
    for (std::size_t k = 0; k < sh.slice_size(); ++k) {
      const double v = B.weight(n, k);
      w(static_cast<Eigen::Index>(n * sh.slice_size() + k)) = v * v;
    }
  return w;
}

Eigen::VectorXd dense_q(const Eigen::MatrixXd& S, const Eigen::VectorXd& w, double beta, const Eigen::VectorXd& d) {
  Eigen::MatrixXd N = S.transpose() * S;
  N.diagonal() += beta * w;
  return N.ldlt().solve(S.transpose() * d);
}

double rel(const Eigen::VectorXd& a, const Eigen::VectorXd& b) { return (a - b).norm() / b.norm(); }

void dense_suite(Recorder& rec) {
  const Tiny T = make_tiny(7, 24, 1);
  const Eigen::MatrixXd S = dense_S(T.ctx);
  const auto B = make_annihilator(AnnihilatorKind::SpatialDistance, T.acq, 0);
  const Eigen::VectorXd w = weights_sq(B);
  const double beta = 1.0;
  const auto op = esi_normal_operator(T.ctx, B, beta);
  Movie e(T.ctx.shape());
  const auto n = static_cast<Eigen::Index>(e.values().size());
  Eigen::MatrixXd N(n, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    e.values()[j] = 1.0;
    N.col(j) = as_eigen(op.apply(e).values());
    e.values()[j] = 0.0;
  }
  rec.check("symmetry", (N - N.transpose()).norm() / N.norm(), 1e-10);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (N + N.transpose()), Eigen::EigenvaluesOnly);
  rec.check("psd", std::max(0.0, -eig.eigenvalues().minCoeff() / eig.eigenvalues().maxCoeff()), 1e-10);
  const ShotGather& d = T.survey.observed[0];
  auto [q, rep] = cg_solve(op.apply, esi_rhs(T.ctx, d), CgConfig{5000, 1e-10, false});
  rec.check("cg vs direct", rel(as_eigen(q.values()), dense_q(S, w, beta, as_eigen(d.values()))), 1e-6);
}

void smw_suite(Recorder& rec) {
  const Tiny T = make_tiny(7, 24, 1);
  const Eigen::MatrixXd S = dense_S(T.ctx);
  const auto B = make_annihilator(AnnihilatorKind::SpatialDistance, T.acq, 0);
  const Eigen::VectorXd w = weights_sq(B);
  const ShotGather& d = T.survey.observed[0];
  for (double beta : {1e-2, 1.0, 1e2}) {
    const auto r = data_space_solve_esi(T.ctx, B, beta, d, CgConfig{5000, 1e-13, false});
    char name[48];
    std::snprintf(name, sizeof name, "data space vs direct, beta %g", beta);
    rec.check(name, rel(as_eigen(r.q.values()), dense_q(S, w, beta, as_eigen(d.values()))), 1e-6);
  }
}

}  // namespace

std::vector<std::string> selftest_suites() { return {"dot", "gradient", "dense", "smw"}; }

std::vector<SelftestCase> run_selftest(const SelftestOptions& opts) {
  if (opts.suites.empty()) throw ConfigError("no selftest suite selected");
  const auto known = selftest_suites();
  for (const auto& s : opts.suites) {
    if (std::find(known.begin(), known.end(), s) == known.end()) throw ConfigError("unknown selftest suite '" + s + "'");
  }
  std::vector<SelftestCase> out;
  for (const auto& s : opts.suites) {
    Recorder rec(out, s);
    if (s == "dot") dot_suite(rec, opts.break_adjoint);
    else if (s == "gradient") gradient_suite(rec);
    else if (s == "dense") dense_suite(rec);
    else if (s == "smw") smw_suite(rec);
  }
  return out;
}

}  // namespace xfwi
