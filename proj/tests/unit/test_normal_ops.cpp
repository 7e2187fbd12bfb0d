#include <gtest/gtest.h>

#include "support.hpp"
#include "xfwi/error.hpp"
#include "xfwi/normal_ops.hpp"

using namespace xfwi;
using namespace xfwi::testing;

namespace {

ShotGather random_gather(const ShotContext& ctx, std::uint64_t seed) {
  ShotGather d = ctx.zero_gather();
  std::mt19937_64 rng(seed);
  fill_random(d, rng);
  return d;
}

Movie random_movie(MovieShape shape, std::uint64_t seed) {
  Movie m(shape);
  std::mt19937_64 rng(seed);
  fill_random(m, rng);
  return m;
}

}  // namespace

TEST(NormalOps, DotProductTestsAllVariants) {
  auto p = make_tiny(11, 60, 2, 31);
  const auto Bd = make_annihilator(AnnihilatorKind::SpatialDistance, p.acq, 0);
  const auto Bt = make_annihilator(AnnihilatorKind::TimeWeight, p.acq, 0);
  for (double beta : {0.0, 1e-2, 1.0, 1e2}) {
    EXPECT_LE(dot_product_test(esi_normal_operator(p.ctx, Bd, beta), 1).rel_error, 1e-10);
    EXPECT_LE(dot_product_test(esi_normal_operator(p.ctx, Bt, beta), 2).rel_error, 1e-10);
    EXPECT_LE(dot_product_test(wri_normal_operator(p.ctx, beta), 3).rel_error, 1e-10);
  }
  const auto masked = masked_operator(wri_normal_operator(p.ctx, 0.0), node_mask(p.acq.dims, p.acq.sources));
  EXPECT_LE(dot_product_test(masked, 4).rel_error, 1e-10);
}

TEST(NormalOps, BetaZeroIsShS) {
  auto p = make_tiny(9, 30, 1, 32);
  const auto B = make_annihilator(AnnihilatorKind::SpatialDistance, p.acq, 0);
  const Movie x = random_movie(p.ctx.shape(), 5);
  const Movie a = esi_normal_operator(p.ctx, B, 0.0).apply(x);
  const Movie b = p.ctx.Sh(p.ctx.S(x));
  EXPECT_EQ(relative_difference(a, b), 0.0);
  EXPECT_EQ(max_abs(esi_normal_operator(p.ctx, B, 3.0).apply(Movie(p.ctx.shape()))), 0.0);
  EXPECT_THROW(esi_normal_operator(p.ctx, B, -1.0), ConfigError);
}

TEST(NormalOps, WriEqualsEsiWithIdentity) {
  auto p = make_tiny(9, 30, 1, 33);
  const Movie x = random_movie(p.ctx.shape(), 6);
  const auto esi = esi_normal_operator(p.ctx, Annihilator::identity(p.ctx.shape()), 1.0);
  EXPECT_EQ(relative_difference(wri_normal_operator(p.ctx, 1.0).apply(x), esi.apply(x)), 0.0);
}

TEST(NormalOps, DenseSymmetricPsdAndCgMatchesDirectSolve) {
  auto p = make_tiny(7, 24, 1, 34);
  const auto B = make_annihilator(AnnihilatorKind::SpatialDistance, p.acq, 0);
  const ShotGather d = random_gather(p.ctx, 7);
  for (double beta : {1e-2, 1.0}) {
    for (bool esi : {true, false}) {
      const auto op = esi ? esi_normal_operator(p.ctx, B, beta) : wri_normal_operator(p.ctx, beta);
      const Eigen::MatrixXd M = materialize(op, p.ctx.shape());
      EXPECT_LE((M - M.transpose()).norm() / M.norm(), 1e-10);
      const Eigen::MatrixXd Ms = 0.5 * (M + M.transpose());
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(Ms, Eigen::EigenvaluesOnly);
      EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);

      const Movie b = esi_rhs(p.ctx, d);
      const Eigen::VectorXd ref = Ms.ldlt().solve(to_eigen(b.values()));
      auto [x, rep] = cg_solve(op.apply, b, CgConfig{5000, 1e-10, true});
      EXPECT_TRUE(rep.converged);
      EXPECT_LE(rel_err(to_eigen(x.values()), ref), 1e-6) << "beta=" << beta << " esi=" << esi;
    }
  }
}

TEST(NormalOps, LargeBetaActsAsScaledIdentityOnHighIndexEigenvectors) {
  auto p = make_tiny(7, 20, 1, 35);
  const double beta = 1e4;
  const Eigen::MatrixXd M = materialize(wri_normal_operator(p.ctx, beta), p.ctx.shape());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (M + M.transpose()));
  // ascending order: the lowest half spans (numerically) the null space of S
  const auto n = M.rows();
  for (Eigen::Index i = 0; i < n / 2; ++i) {
    const Eigen::VectorXd v = eig.eigenvectors().col(i);
    const double rq = v.dot(M * v) / v.dot(v);
    EXPECT_NEAR(rq / beta, 1.0, 1e-8);
  }
  EXPECT_GE(eig.eigenvalues().minCoeff(), beta * (1 - 1e-10));
}

TEST(NormalOps, RightHandSides) {
  auto p = make_tiny(11, 40, 2, 36);
  EXPECT_EQ(max_abs(esi_rhs(p.ctx, p.ctx.zero_gather())), 0.0);
  const ShotGather d = random_gather(p.ctx, 8);
  const Movie b = esi_rhs(p.ctx, d);
  const Movie q = random_movie(p.ctx.shape(), 9);
  EXPECT_LE(std::abs(inner(b, q) - inner(d, p.ctx.S(q))) / (norm(b) * norm(q)), 1e-10);

  const PointSource f{p.acq.sources[0], ricker(25.0, 40, p.acq.time.dt)};
  const ShotGather df = synthetic_data(p.ctx, f);
  const Movie zero_rhs = wri_rhs(p.ctx, df, f);
  EXPECT_LE(max_abs(zero_rhs), 1e-12 * max_abs(esi_rhs(p.ctx, df)));
  const SourceTerm none = Movie(p.ctx.shape());
  EXPECT_EQ(relative_difference(wri_rhs(p.ctx, d, none), esi_rhs(p.ctx, d)), 0.0);
  const Movie w = wri_rhs(p.ctx, d, f);
  ShotGather res = d;
  axpy(-1.0, df, res);
  EXPECT_LE(std::abs(inner(w, q) - inner(res, p.ctx.S(q))) / (norm(w) * norm(q)), 1e-10);
}

TEST(NormalOps, WaveletEstimationOnSourceNodeRecoversRicker) {
  const GridDims dims{25, 25, 10.0, 10.0, 5};
  const auto model = ModelGrid::constant_velocity(dims, 1500.0);
  Acquisition acq;
  acq.dims = dims;
  acq.time = {150, 0.002};
  acq.sources = {{12, 12}};
  acq.receivers = {{12, 12}, {8, 12}, {16, 12}, {12, 8}, {12, 16}};
  const auto ctx = make_shot_context(model, acq, 0);
  const auto wavelet = ricker(15.0, 150, 0.002);
  const ShotGather d = synthetic_data(ctx, PointSource{acq.sources[0], wavelet});
  const auto mask = node_mask(dims, acq.sources);
  const auto op = masked_operator(esi_normal_operator(ctx, Annihilator::identity(ctx.shape()), 0.0), mask);
  Movie b = esi_rhs(ctx, d);
  apply_spatial_mask(b, mask);
  auto [q, rep] = cg_solve(op.apply, b, CgConfig{50, 1e-10, true});
  std::vector<double> est(150);
  for (int n = 0; n < 150; ++n) est[n] = q.at(n, 12, 12);
  double num = 0.0, den = 0.0;
  for (int n = 0; n < 150; ++n) {
    num += (est[n] - wavelet[n]) * (est[n] - wavelet[n]);
    den += wavelet[n] * wavelet[n];
  }
  EXPECT_LE(std::sqrt(num / den), 1e-3);
}

TEST(NormalOps, WorkspaceReservationFailsFast) {
  auto store = WavefieldStore::in_memory(1000);
  EXPECT_THROW(reserve_cg_workspace(*store, {10, 10, 10}), BudgetExceeded);
  auto big = WavefieldStore::in_memory(4 * 1000 * sizeof(double));
  auto r = reserve_cg_workspace(*big, {10, 10, 10});
  EXPECT_EQ(big->bytes_in_use(), 4 * 1000 * sizeof(double));
}
