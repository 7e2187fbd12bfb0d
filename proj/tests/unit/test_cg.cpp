#include <gtest/gtest.h>

#include "support.hpp"
#include "xfwi/cg.hpp"
#include "xfwi/error.hpp"

using namespace xfwi;

namespace {

Eigen::MatrixXd random_spd(int n, std::uint64_t seed, double shift) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::MatrixXd X(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) X(i, j) = g(rng);
  return X.transpose() * X / n + shift * Eigen::MatrixXd::Identity(n, n);
}

auto dense_apply(const Eigen::MatrixXd& A) {
  return [&A](const DenseVector& x) {
    Eigen::VectorXd y = A * Eigen::Map<const Eigen::VectorXd>(x.data.data(), A.cols());
    return DenseVector(std::vector<double>(y.data(), y.data() + y.size()));
  };
}

DenseVector random_vec(int n, std::uint64_t seed) {
  DenseVector v(n);
  std::mt19937_64 rng(seed);
  fill_random(v, rng);
  return v;
}

}  // namespace

TEST(Cg, IdentitySolvesInOneIteration) {
  const DenseVector b = random_vec(17, 1);
  CgConfig cfg{5, 1e-12, true};
  auto [x, rep] = cg_solve([](const DenseVector& v) { return v; }, b, cfg);
  EXPECT_EQ(rep.iterations, 1);
  EXPECT_TRUE(rep.converged);
  EXPECT_LE(relative_difference(x, b), 1e-15);
}

TEST(Cg, MatchesDenseCholeskyOracle) {
  for (std::uint64_t seed : {1, 2, 3}) {
    const Eigen::MatrixXd A = random_spd(20, seed, 0.5);
    const DenseVector b = random_vec(20, seed + 10);
    const Eigen::VectorXd ref = A.llt().solve(xfwi::testing::to_eigen(b.values()));
    auto [x, rep] = cg_solve(dense_apply(A), b, CgConfig{20, 1e-13, true});
    EXPECT_LE(rep.iterations, 20);
    EXPECT_LE(xfwi::testing::rel_err(xfwi::testing::to_eigen(x.values()), ref), 1e-8);
  }
}

TEST(Cg, ANormErrorIsMonotone) {
  const Eigen::MatrixXd A = random_spd(30, 4, 0.1);
  const DenseVector b = random_vec(30, 5);
  const Eigen::VectorXd xs = A.llt().solve(xfwi::testing::to_eigen(b.values()));
  std::vector<double> errs{std::sqrt(xs.dot(A * xs))};
  cg_solve(dense_apply(A), b, CgConfig{30, 1e-14, true}, nullptr, [&](int, const DenseVector& x) {
    const Eigen::VectorXd e = xfwi::testing::to_eigen(x.values()) - xs;
    errs.push_back(std::sqrt(e.dot(A * e)));
  });
  for (std::size_t k = 1; k < errs.size(); ++k) EXPECT_LE(errs[k], errs[k - 1] * (1 + 1e-12)) << k;
}

TEST(Cg, CallbackCountsUpdatesFromOne) {
  const Eigen::MatrixXd A = random_spd(20, 8, 0.5);
  std::vector<int> seen;
  auto [x, rep] = cg_solve(dense_apply(A), random_vec(20, 9), CgConfig{6, 1e-14, true}, nullptr,
                           [&](int k, const DenseVector&) { seen.push_back(k); });
  ASSERT_EQ(seen.size(), static_cast<std::size_t>(rep.iterations));
  for (std::size_t i = 0; i < seen.size(); ++i) EXPECT_EQ(seen[i], static_cast<int>(i) + 1);
}

TEST(Cg, ReportInvariantsAndInputsUntouched) {
  const Eigen::MatrixXd A = random_spd(12, 6, 1.0);
  const DenseVector b = random_vec(12, 7);
  const DenseVector b_copy = b;
  auto [x, rep] = cg_solve(dense_apply(A), b, CgConfig{4, 1e-3, true});
  EXPECT_EQ(rep.residual_history.size(), static_cast<std::size_t>(rep.iterations) + 1);
  EXPECT_DOUBLE_EQ(rep.residual_history[0], norm(b));
  EXPECT_EQ(b.data, b_copy.data);
  EXPECT_FALSE(rep.converged);  // 4 iterations are not enough for 1e-3 here
  EXPECT_EQ(rep.iterations, 4);
}

TEST(Cg, ZeroRightHandSide) {
  auto [x, rep] = cg_solve([](const DenseVector& v) { return v; }, DenseVector(5), CgConfig{});
  EXPECT_EQ(max_abs(x), 0.0);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_TRUE(rep.converged);
}

TEST(Cg, BreakdownOnIndefiniteOperator) {
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(3, 3);
  A(1, 1) = -1.0;
  DenseVector b(std::vector<double>{0.0, 1.0, 0.0});
  EXPECT_THROW(cg_solve(dense_apply(A), b, CgConfig{}), NumericalError);
}

TEST(Cg, ConfigValidation) {
  EXPECT_THROW((CgConfig{0, 1e-3, true}.validate()), ConfigError);
  EXPECT_THROW((CgConfig{5, 0.0, true}.validate()), ConfigError);
  EXPECT_THROW((CgConfig{5, 1.0, true}.validate()), ConfigError);
}

TEST(Cg, WarmStartAtSolutionStopsImmediately) {
  const Eigen::MatrixXd A = random_spd(8, 9, 1.0);
  const DenseVector b = random_vec(8, 10);
  const Eigen::VectorXd xs = A.llt().solve(xfwi::testing::to_eigen(b.values()));
  DenseVector x0(std::vector<double>(xs.data(), xs.data() + xs.size()));
  auto [x, rep] = cg_solve(dense_apply(A), b, CgConfig{5, 1e-3, true}, &x0);
  EXPECT_EQ(rep.iterations, 0);
  EXPECT_LE(xfwi::testing::rel_err(xfwi::testing::to_eigen(x.values()), xs), 1e-10);
}
