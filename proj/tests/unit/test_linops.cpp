#include <gtest/gtest.h>

#include <numbers>

#include "support.hpp"
#include "xfwi/error.hpp"
#include "xfwi/linops.hpp"

using namespace xfwi;
using xfwi::testing::make_tiny;

TEST(OpS, DotProductTest) {
  auto p = make_tiny(11, 60, 2, 21);
  const auto S = op_S(p.ctx.prop, p.acq.receivers);
  for (std::uint64_t seed : {1, 2, 3, 4}) EXPECT_LE(dot_product_test(S, seed).rel_error, 1e-10);
}

TEST(OpS, ComposedOperatorsPassDotTest) {
  auto p = make_tiny(11, 60, 2, 22);
  const auto R = op_R(p.ctx.shape(), p.acq.receivers);
  const auto Ainv = op_Ainv(p.ctx.prop);
  EXPECT_LE(dot_product_test(R, 5).rel_error, 1e-12);
  EXPECT_LE(dot_product_test(Ainv, 6).rel_error, 1e-10);
  const auto RA = compose(R, Ainv);
  EXPECT_LE(dot_product_test(RA, 7).rel_error, 1e-10);
  // RA and S are the same map
  std::mt19937_64 rng(8);
  Movie q(p.ctx.shape());
  fill_random(q, rng);
  EXPECT_LE(relative_difference(RA.apply(q), op_S(p.ctx.prop, p.acq.receivers).apply(q)), 1e-14);
  const auto F = op_dtft(p.ctx.shape(), {5.0, 12.5, 30.0}, p.acq.time.dt);
  const auto FAinv = compose(F, Ainv);
  EXPECT_LE(dot_product_test(FAinv, 9).rel_error, 1e-10);
}

TEST(OpS, ZeroAndPhysicalSource) {
  auto p = make_tiny(11, 60, 2, 23);
  const auto S = op_S(p.ctx.prop, p.acq.receivers);
  EXPECT_EQ(max_abs(S.apply(Movie(p.ctx.shape()))), 0.0);
  const PointSource src{p.acq.sources[0], ricker(25.0, 60, p.acq.time.dt)};
  Movie f(p.ctx.shape());
  for (int n = 0; n < 60; ++n) f.at(n, src.node.iz, src.node.ix) = src.wavelet[n];
  const ShotGather d = S.apply(f);
  const ShotGather ref = sample_R(p.ctx.prop->forward(src), p.acq.receivers);
  EXPECT_LE(relative_difference(d, ref), 1e-14);
  EXPECT_GT(norm(d), 0.0);
}

TEST(Annihilator, IdentityDistanceAndInverse) {
  const GridDims dims{9, 11, 1.0, 1.0, 0};
  const MovieShape shape{4, 9, 11};
  std::mt19937_64 rng(1);
  Movie q(shape);
  fill_random(q, rng);
  const auto I = Annihilator::identity(shape);
  EXPECT_EQ(relative_difference(I.apply_sq(q), q), 0.0);

  const GridNode src{4, 5};
  const auto B = Annihilator::spatial_distance(dims, 4, src);
  EXPECT_DOUBLE_EQ(B.weights()[dims.index(4, 5)], std::sqrt(2.0));
  EXPECT_DOUBLE_EQ(B.weights()[dims.index(4, 7)], 2.0);  // 2 m away
  const Movie bq = B.apply_sq(q);
  EXPECT_DOUBLE_EQ(bq.at(2, 4, 7), 4.0 * q.at(2, 4, 7));
  for (double w : B.weights()) EXPECT_GE(w, B.floor());
  EXPECT_LE(relative_difference(B.apply_sq_inv(bq), q), 1e-14);

  const auto T = Annihilator::time_weight(shape, 0.5);
  EXPECT_DOUBLE_EQ(T.weights()[0], 0.5);
  EXPECT_DOUBLE_EQ(T.weights()[3], 1.5);
  EXPECT_LE(relative_difference(T.apply_sq_inv(T.apply_sq(q)), q), 1e-14);
  EXPECT_NEAR(T.penalty_norm_sq(q), inner(q, T.apply_sq(q)), 1e-12 * T.penalty_norm_sq(q));
}

TEST(Annihilator, IsSelfAdjointPositiveDiagonal) {
  const GridDims dims{7, 7, 10.0, 10.0, 1};
  const auto B = Annihilator::spatial_distance(dims, 5, {3, 3});
  LinearMap<Movie, Movie> op;
  op.apply = [&](const Movie& q) { return B.apply_sq(q); };
  op.apply_adjoint = op.apply;
  op.domain_zero = [] { return Movie({5, 7, 7}); };
  op.range_zero = op.domain_zero;
  EXPECT_LE(dot_product_test(op, 3).rel_error, 1e-14);
  EXPECT_THROW(Annihilator::spatial_distance(dims, 5, {3, 3}, 0.0), ConfigError);
}

TEST(Dtft, CosineOracleWithLeakageBound) {
  const int nt = 300;
  const double dt = 0.004;
  for (double f1 : {10.0, 13.37, 41.0}) {
    Movie u({nt, 1, 1});
    for (int n = 0; n < nt; ++n) u.at(n, 0, 0) = std::cos(2.0 * std::numbers::pi * f1 * n * dt);
    const FreqField F = dtft(u, {f1}, dt);
    const double th = 2.0 * std::numbers::pi * f1 * dt;
    const double bound = 0.5 / std::abs(std::sin(th)) + 1e-9 * nt;
    EXPECT_LE(std::abs(F.at_freq(0)[0] - std::complex<double>(nt / 2.0, 0.0)), bound) << f1;
  }
}

TEST(Dtft, OnTheFlyAccumulationMatchesBatch) {
  std::mt19937_64 rng(2);
  Movie u({20, 3, 4});
  fill_random(u, rng);
  const std::vector<double> freqs{1.0, 7.5, 20.0};
  DtftAccumulator acc(freqs, 0.01, 3, 4);
  for (int n = u.nt() - 1; n >= 0; --n) acc.add(n, u.slice(n));  // order does not matter
  EXPECT_LE(relative_difference(acc.result(), dtft(u, freqs, 0.01)), 1e-14);
}

TEST(Dtft, ZeroInZeroOut) {
  EXPECT_EQ(max_abs(dtft(Movie({10, 2, 2}), {3.0}, 0.01)), 0.0);
  FreqField z({3.0, 4.0}, 2, 2);
  EXPECT_EQ(max_abs(idtft(z, 10, 0.01)), 0.0);
}

TEST(Dtft, AdjointPairWithNtScaling) {
  const MovieShape shape{40, 3, 2};
  const auto F = op_dtft(shape, {2.0, 9.0, 17.5, 31.0}, 0.005);
  for (std::uint64_t seed : {1, 2, 3}) EXPECT_LE(dot_product_test(F, seed).rel_error, 1e-12);
}

TEST(Dtft, ForwardOfInverseIsHalfOnBinFrequencies) {
  const int nt = 64;
  const double dt = 0.01;  // bins every 1/(nt dt) Hz
  const double df = 1.0 / (nt * dt);
  const std::vector<double> freqs{3 * df, 5 * df, 11 * df, 30 * df};
  FreqField V(freqs, 2, 3);
  std::mt19937_64 rng(4);
  fill_random(V, rng);
  const FreqField back = dtft(idtft(V, nt, dt), freqs, dt);
  FreqField half = V;
  scale(half, 0.5);
  EXPECT_LE(relative_difference(back, half), 1e-12);
}

TEST(Dtft, FullBandRoundTripIsExact) {
  const int nt = 24;
  const double dt = 0.01;
  std::vector<double> freqs;
  for (int k = 0; k < nt; ++k) freqs.push_back(k / (nt * dt));
  validate_frequencies(freqs, dt);
  std::mt19937_64 rng(5);
  Movie u({nt, 2, 2});
  fill_random(u, rng);
  EXPECT_LE(relative_difference(idtft(dtft(u, freqs, dt), nt, dt), u), 1e-12);
}

TEST(Dtft, FrequencyValidation) {
  EXPECT_THROW(validate_frequencies({}, 0.01), ConfigError);
  EXPECT_THROW(validate_frequencies({1.0, 1.0}, 0.01), ConfigError);
  EXPECT_THROW(validate_frequencies({-1.0}, 0.01), ConfigError);
  EXPECT_THROW(validate_frequencies({100.0}, 0.01), ConfigError);
  const auto d = default_frequencies(10.0);
  ASSERT_EQ(d.size(), 5u);
  EXPECT_DOUBLE_EQ(d.front(), 5.0);
  EXPECT_DOUBLE_EQ(d.back(), 20.0);
}

TEST(Dtft, GatherTransformAndExport) {
  ShotGather d(0, 50, 3);
  std::mt19937_64 rng(6);
  fill_random(d, rng);
  const std::vector<double> freqs{4.0, 8.0};
  const FreqField F = dtft(d, freqs, 0.01);
  EXPECT_EQ(F.nz(), 3);
  EXPECT_EQ(F.nx(), 1);
  const ShotGather back = idtft_gather(F, 50, 0.01);
  EXPECT_EQ(back.nr(), 3);

  const GridDims dims{3, 2, 5.0, 5.0, 0};
  FreqField G(freqs, 3, 2);
  fill_random(G, rng);
  const auto dir = xfwi::testing::scratch_dir("freq");
  save_freq_field(G, dims, dir / "q2hz");
  const auto raw = read_f32(bin_path(dir / "q2hz"));
  ASSERT_EQ(raw.size(), 2 * G.values().size());
  EXPECT_NEAR(raw[2], G.values()[1].real(), 1e-6);
  EXPECT_NEAR(raw[3], G.values()[1].imag(), 1e-6);
  const auto amp = amplitude_at(G, 7.0);
  EXPECT_DOUBLE_EQ(amp[0], std::abs(G.at_freq(1)[0]));
}
