#pragma once

#include <memory>
#include <vector>

#include "xfwi/cg.hpp"
#include "xfwi/linops.hpp"
#include "xfwi/wavefield_store.hpp"

namespace xfwi {

/// What one shot's normal equations need: a propagator for the current model
/// and the receiver nodes.
struct ShotContext {
  PropagatorPtr prop;
  std::vector<GridNode> receivers;
  int shot_index = 0;

  MovieShape shape() const { return prop->movie_shape(); }
  double dt() const { return prop->time().dt; }
  ShotGather zero_gather() const {
    return ShotGather(shot_index, prop->time().nt, static_cast<int>(receivers.size()));
  }
  ShotGather S(const Movie& q) const { return apply_S(*prop, q, receivers, shot_index); }
  Movie Sh(const ShotGather& d) const { return apply_Sh(*prop, d, receivers); }
};

ShotContext make_shot_context(const ModelGrid& model, const Acquisition& acq, int shot = 0);

/// p -> S^H S p + beta B^H B p
LinearMap<Movie, Movie> esi_normal_operator(const ShotContext& ctx, const Annihilator& B, double beta);
/// p -> S^H S p + beta p
LinearMap<Movie, Movie> wri_normal_operator(const ShotContext& ctx, double beta);
/// M op M for a 0/1 spatial mask M applied at every time step.
LinearMap<Movie, Movie> masked_operator(const LinearMap<Movie, Movie>& op, std::vector<double> mask);
void apply_spatial_mask(Movie& q, std::span<const double> mask);
/// 1 at the given nodes, 0 elsewhere.
std::vector<double> node_mask(const GridDims& dims, std::span<const GridNode> nodes);

/// b = S^H d
Movie esi_rhs(const ShotContext& ctx, const ShotGather& d);
/// b = S^H (d - S f)
Movie wri_rhs(const ShotContext& ctx, const ShotGather& d, const SourceTerm& f);
/// S f for a point or distributed source.
ShotGather synthetic_data(const ShotContext& ctx, const SourceTerm& f);

/// The four CG work vectors (x, r, p, Ap) reserved against the store budget
/// before any modeling starts.
Reservation reserve_cg_workspace(WavefieldStore& store, MovieShape shape);

}  // namespace xfwi
