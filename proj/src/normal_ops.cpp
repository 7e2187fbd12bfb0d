#include "xfwi/normal_ops.hpp"

#include <fstream>

#include "xfwi/error.hpp"

namespace xfwi {

void write_cg_report_csv(const CgReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  out << "iter,residual_norm\n";
  for (std::size_t k = 0; k < report.residual_history.size(); ++k) {
    out << k << "," << report.residual_history[k] << "\n";
  }
}

ShotContext make_shot_context(const ModelGrid& model, const Acquisition& acq, int shot) {
  ShotContext ctx;
  ctx.prop = std::make_shared<const Propagator>(model, acq.time);
  ctx.receivers = acq.receivers;
  ctx.shot_index = shot;
  return ctx;
}

LinearMap<Movie, Movie> esi_normal_operator(const ShotContext& ctx, const Annihilator& B, double beta) {
  if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
  if (!(B.shape() == ctx.shape())) throw ConfigError("annihilator shape does not match the wavefield");
  LinearMap<Movie, Movie> op;
  op.name = "ShS+bBhB";
  op.apply = [ctx, B, beta](const Movie& p) {
    Movie out = ctx.Sh(ctx.S(p));
    if (beta != 0.0) B.accumulate_sq(beta, p, out);
    return out;
  };
  op.apply_adjoint = op.apply;
  const MovieShape shape = ctx.shape();
  op.domain_zero = [shape] { return Movie(shape); };
  op.range_zero = op.domain_zero;
  op.self_adjoint = true;
  return op;
}

LinearMap<Movie, Movie> wri_normal_operator(const ShotContext& ctx, double beta) {
  auto op = esi_normal_operator(ctx, Annihilator::identity(ctx.shape()), beta);
  op.name = "ShS+bI";
  return op;
}

void apply_spatial_mask(Movie& q, std::span<const double> mask) {
  if (mask.size() != q.slice_size()) throw ConfigError("mask size does not match grid");
  for (int n = 0; n < q.nt(); ++n) {
    auto s = q.slice(n);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] *= mask[k];
  }
}

std::vector<double> node_mask(const GridDims& dims, std::span<const GridNode> nodes) {
  std::vector<double> mask(dims.size(), 0.0);
  for (const auto& n : nodes) {
    if (n.iz < 0 || n.iz >= dims.nz || n.ix < 0 || n.ix >= dims.nx) throw ConfigError("mask node off-grid");
    mask[dims.index(n.iz, n.ix)] = 1.0;
  }
  return mask;
}

LinearMap<Movie, Movie> masked_operator(const LinearMap<Movie, Movie>& op, std::vector<double> mask) {
  LinearMap<Movie, Movie> out = op;
  out.name = "M" + op.name + "M";
  auto wrap = [mask](const std::function<Movie(const Movie&)>& f) {
    return [f, mask](const Movie& p) {
      Movie mp = p;
      apply_spatial_mask(mp, mask);
      Movie r = f(mp);
      apply_spatial_mask(r, mask);
      return r;
    };
  };
  out.apply = wrap(op.apply);
  out.apply_adjoint = wrap(op.apply_adjoint);
  return out;
}

Movie esi_rhs(const ShotContext& ctx, const ShotGather& d) { return ctx.Sh(d); }

ShotGather synthetic_data(const ShotContext& ctx, const SourceTerm& f) {
  if (const auto* m = std::get_if<Movie>(&f)) return ctx.S(*m);
  const auto& ps = std::get<PointSource>(f);
  ShotGather d = ctx.zero_gather();
  const GridDims& dims = ctx.prop->dims();
  std::vector<std::size_t> idx;
  for (const auto& r : ctx.receivers) idx.push_back(dims.index(r.iz, r.ix));
  if (static_cast<int>(ps.wavelet.size()) != ctx.prop->time().nt) throw ConfigError("wavelet length must equal nt");
  const std::size_t ks = dims.index(ps.node.iz, ps.node.ix);
  ctx.prop->forward_stream([&](int n, std::span<double> s) { s[ks] += ps.wavelet[n]; },
                           [&](int n, std::span<const double> u) {
                             auto row = d.step(n);
                             for (std::size_t r = 0; r < idx.size(); ++r) row[r] = u[idx[r]];
                           });
  return d;
}

Movie wri_rhs(const ShotContext& ctx, const ShotGather& d, const SourceTerm& f) {
  ShotGather res = d;
  axpy(-1.0, synthetic_data(ctx, f), res);
  return ctx.Sh(res);
}

Reservation reserve_cg_workspace(WavefieldStore& store, MovieShape shape) {
  return store.reserve(4 * shape.size() * sizeof(double));
}

}  // namespace xfwi
