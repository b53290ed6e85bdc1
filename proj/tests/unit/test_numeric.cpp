/*
 * Copyright 2026 The vdpt Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <Eigen/QR>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <numbers>

#include "oracles.hpp"
#include "vdpt/numeric.hpp"
#include "vdpt/params.hpp"
#include "vdpt/stats.hpp"

namespace vdpt {
namespace {

TEST(Cholesky, IdentityCase) {
  const auto r = cholesky_logdet_solve(Matrix::Identity(2, 2), Matrix::Identity(2, 2));
  EXPECT_TRUE(r.solution.isApprox(Matrix::Identity(2, 2)));
  EXPECT_EQ(r.logdet, 0.0);
}

TEST(Cholesky, DiagonalCase) {
  Matrix a = Matrix::Zero(2, 2);
  a(0, 0) = 2.0;
  a(1, 1) = 8.0;
  const auto r = cholesky_logdet_solve(a, Vector::Ones(2));
  EXPECT_DOUBLE_EQ(r.solution(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(r.solution(1, 0), 0.125);
  EXPECT_NEAR(r.logdet, std::log(16.0), 1e-14);
}

TEST(Cholesky, RandomSpdAgainstElimination) {
  SeededRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = oracle::random_spd(5, rng, 0.5);
    const Matrix b = oracle::random_matrix(5, 3, rng);
    const auto r = cholesky_logdet_solve(a, b);
    const Matrix ref = oracle::gauss_solve(a, b);
    EXPECT_LT((r.solution - ref).cwiseAbs().maxCoeff(), 1e-8 * std::max(1.0, ref.cwiseAbs().maxCoeff()));
    EXPECT_LE((a * r.solution - b).cwiseAbs().maxCoeff(), 1e-8 * b.cwiseAbs().maxCoeff());
    EXPECT_NEAR(r.logdet, oracle::gauss_logdet(a), 1e-9);
  }
}

TEST(Cholesky, Errors) {
  Matrix indefinite = Matrix::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  try {
    cholesky_logdet_solve(indefinite, Vector::Ones(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotPositiveDefinite);
  }
  Matrix asym = Matrix::Identity(2, 2);
  asym(0, 1) = 0.5;
  try {
    cholesky_logdet_solve(asym, Vector::Ones(2));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNotSymmetric);
  }
}

TEST(ConjugateGradient, IdentityConvergesInOneIteration) {
  SeededRng rng(2);
  const Vector b = oracle::random_vector(7, rng);
  const CgResult r = conjugate_gradient([](const Vector& v) { return v; }, b, 1e-10, 50);
  EXPECT_TRUE(r.converged);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_LT((r.x - b).norm(), 1e-14);
}

TEST(ConjugateGradient, DiagonalMatchesDirectSolve) {
  Vector d(10);
  for (Index i = 0; i < 10; ++i) d(i) = static_cast<double>(i + 1);
  const Matrix a = d.asDiagonal();
  const Vector b = Vector::Ones(10);
  const CgResult r = conjugate_gradient([&](const Vector& v) { return Vector(a * v); }, b, 1e-12, 100);
  const auto direct = cholesky_logdet_solve(a, b);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.x - direct.solution.col(0)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(ConjugateGradient, DampedSingularOperator) {
  SeededRng rng(3);
  const Matrix g = oracle::random_matrix(20, 5, rng);
  Matrix a = g * g.transpose();  // rank 5
  a.diagonal().array() += 0.01;
  const Vector b = oracle::random_vector(20, rng);
  const double tol = 1e-9;
  const CgResult r = conjugate_gradient([&](const Vector& v) { return Vector(a * v); }, b, tol, 500);
  EXPECT_TRUE(r.converged);
  EXPECT_LE((a * r.x - b).norm(), tol * b.norm());
  EXPECT_LT((r.x - oracle::gauss_solve(a, b).col(0)).norm(), 1e-6 * r.x.norm());
}

TEST(ConjugateGradient, FlagsNonConvergence) {
  SeededRng rng(4);
  const Matrix a = oracle::random_spd(30, rng, 0.01);
  const Vector b = oracle::random_vector(30, rng);
  const CgResult r = conjugate_gradient([&](const Vector& v) { return Vector(a * v); }, b, 1e-14, 2);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 2);
  EXPECT_NEAR(r.residual_norm, (a * r.x - b).norm(), 1e-12);
}

TEST(ConjugateGradient, SolvesMildlyIndefiniteSystem) {
  // Spectrum {-0.05, ..., 3}: symmetric, nonsingular, not positive definite.
  SeededRng rng(6);
  const Index n = 40;
  const Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(n, n, rng)).householderQ();
  Vector eig(n);
  for (Index i = 0; i < n; ++i) eig(i) = i < 3 ? -0.05 + 0.01 * static_cast<double>(i) : 0.1 + 0.075 * static_cast<double>(i);
  const Matrix a = q * eig.asDiagonal() * q.transpose();
  const Vector b = oracle::random_vector(n, rng);
  const CgResult r = conjugate_gradient([&](const Vector& v) { return Vector(a * v); }, b, 1e-10, 500);
  EXPECT_TRUE(r.converged);
  const Vector ref = oracle::gauss_solve(a, b).col(0);
  EXPECT_LT((r.x - ref).norm() / ref.norm(), 1e-8);
}

TEST(ConjugateGradient, AgreesWithCholeskyUpTo200) {
  SeededRng rng(5);
  for (Index n : {10, 50, 200}) {
    Matrix a = oracle::random_spd(n, rng, static_cast<double>(n));
    const Vector b = oracle::random_vector(n, rng);
    const CgResult r = conjugate_gradient([&](const Vector& v) { return Vector(a * v); }, b, 1e-12, 2000);
    const auto direct = cholesky_logdet_solve(a, b);
    EXPECT_LT((r.x - direct.solution.col(0)).cwiseAbs().maxCoeff(), 1e-6) << n;
  }
}

TEST(Lanczos, FullRunRecoversDenseExtremes) {
  SeededRng rng(11);
  const Index n = 60;
  Matrix a = oracle::random_matrix(n, n, rng);
  a = Matrix(0.5 * (a + a.transpose()));
  const Eigen::VectorXd dense = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Eigen::MatrixXd(a)).eigenvalues();
  SeededRng start(1);
  const SpectrumEstimate est = lanczos_extremes([&](const Vector& v) { return Vector(a * v); }, n, 60, start);
  EXPECT_NEAR(est.smallest, dense(0), 1e-8);
  EXPECT_NEAR(est.largest, dense(n - 1), 1e-8);
}

TEST(Lanczos, IsolatedNegativeEigenvalueFoundEarly) {
  SeededRng rng(12);
  const Index n = 200;
  const Matrix q = Eigen::HouseholderQR<Matrix>(oracle::random_matrix(n, n, rng)).householderQ();
  Vector eig(n);
  for (Index i = 0; i < n; ++i) eig(i) = i == 0 ? -0.4 : 0.1 + 0.015 * static_cast<double>(i);
  const Matrix a = q * eig.asDiagonal() * q.transpose();
  SeededRng start(2);
  const SpectrumEstimate est = lanczos_extremes([&](const Vector& v) { return Vector(a * v); }, n, 40, start);
  EXPECT_EQ(est.steps, 40);
  EXPECT_GE(est.smallest, -0.4 - 1e-10);  // Ritz values never leave the spectrum
  EXPECT_NEAR(est.smallest, -0.4, 1e-6);
  EXPECT_LE(est.largest, eig(n - 1) + 1e-10);
}

TEST(Lanczos, StopsOnInvariantSubspace) {
  SeededRng start(3);
  const SpectrumEstimate est = lanczos_extremes([](const Vector& v) { return Vector(2.5 * v); }, 30, 10, start);
  EXPECT_EQ(est.steps, 1);
  EXPECT_DOUBLE_EQ(est.smallest, 2.5);
  EXPECT_DOUBLE_EQ(est.largest, 2.5);
}

TEST(Correlation, AffineAndReversed) {
  Vector x(6);
  x << 0.3, 1.2, -0.7, 4.0, 2.2, 0.0;
  const Vector y = 2.0 * x.array() + 1.0;
  EXPECT_NEAR(*pearson(x, y), 1.0, 1e-15);
  EXPECT_NEAR(*spearman(x, y), 1.0, 1e-15);
  Vector sorted = x;
  std::sort(sorted.data(), sorted.data() + sorted.size());
  const Vector rev = sorted.reverse();
  EXPECT_NEAR(*spearman(sorted, rev), -1.0, 1e-15);
}

TEST(Correlation, SpearmanHandCase) {
  Vector x(4), y(4);
  x << 1, 2, 3, 4;
  y << 1, 3, 2, 4;
  EXPECT_NEAR(*spearman(x, y), 0.8, 1e-15);
}

TEST(Correlation, ZeroVarianceIsUndefined) {
  const Vector x = Vector::Ones(5);
  Vector y(5);
  y << 1, 2, 3, 4, 5;
  EXPECT_FALSE(pearson(x, y).has_value());
  EXPECT_FALSE(spearman(x, y).has_value());
}

TEST(Correlation, PearsonInvariantUnderPositiveAffineMaps) {
  SeededRng rng(6);
  const Vector x = oracle::random_vector(50, rng);
  const Vector y = x + oracle::random_vector(50, rng);
  const double base = *pearson(x, y);
  EXPECT_NEAR(*pearson(Vector(3.5 * x.array() - 2.0), y), base, 1e-12);
  EXPECT_NEAR(*pearson(x, Vector(0.01 * y.array() + 7.0)), base, 1e-12);
}

TEST(Correlation, TiesGetAverageRanks) {
  Vector x(5);
  x << 3, 1, 3, 2, 3;
  const Vector r = fractional_ranks(x);
  EXPECT_EQ(r(1), 1.0);
  EXPECT_EQ(r(3), 2.0);
  EXPECT_EQ(r(0), 4.0);
  EXPECT_EQ(r(2), 4.0);
  EXPECT_EQ(r(4), 4.0);
}

TEST(Kde, StandardNormalDensityAtZero) {
  SeededRng rng(7);
  const Vector sample = oracle::random_vector(10000, rng);
  const Vector at = Vector::Zero(1);
  EXPECT_NEAR(gaussian_kde(as_span(sample), as_span(at))(0), 1.0 / std::sqrt(2.0 * std::numbers::pi), 0.05);
}

TEST(Kde, SymmetryAndIntegral) {
  std::vector<double> sample{-2.0, -0.5, 0.5, 2.0, -1.0, 1.0};
  const Vector grid = linspace(-20.0, 20.0, 4001);
  const Vector dens = gaussian_kde(sample, as_span(grid));
  for (Index i = 0; i < grid.size(); ++i) {
    EXPECT_GE(dens(i), 0.0);
    EXPECT_NEAR(dens(i), dens(grid.size() - 1 - i), 1e-12);
  }
  const double integral = dens.sum() * (grid(1) - grid(0));
  EXPECT_GE(integral, 0.99);
  EXPECT_LE(integral, 1.01);
  std::vector<double> two{-1.0, 1.0};
  const std::vector<double> pts{-1.0, 1.0};
  const Vector d2 = gaussian_kde(two, pts);
  EXPECT_DOUBLE_EQ(d2(0), d2(1));
}

TEST(Kde, ConstantSampleIsDegenerate) {
  std::vector<double> sample{2.0, 2.0, 2.0};
  const std::vector<double> pts{2.0};
  try {
    gaussian_kde(sample, pts);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateInput);
  }
}

TEST(Rng, ReproducibleAndSplitIndependent) {
  SeededRng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
  SeededRng c(42);
  const SeededRng s1 = c.split(1), s2 = c.split(2);
  SeededRng t1 = s1, t2 = s2;
  EXPECT_NE(t1.next_u64(), t2.next_u64());
  SeededRng d(42);
  EXPECT_EQ(d.next_u64(), SeededRng(42).next_u64());  // split did not advance the parent
  const auto idx = SeededRng(9).sample_without_replacement(100, 30);
  std::vector<Index> sorted(idx.begin(), idx.end());
  std::sort(sorted.begin(), sorted.end());
  EXPECT_EQ(std::unique(sorted.begin(), sorted.end()), sorted.end());
  EXPECT_EQ(idx, SeededRng(9).sample_without_replacement(100, 30));
}

TEST(Rng, UniformAndNormalMoments) {
  SeededRng rng(11);
  double s = 0.0, s2 = 0.0, u = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    s += z;
    s2 += z * z;
    u += rng.uniform();
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
  EXPECT_NEAR(u / n, 0.5, 0.005);
}

TEST(Quantile, Type7Interpolation) {
  EXPECT_DOUBLE_EQ(quantile({1.0, 2.0, 3.0, 4.0}, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(quantile({4.0, 1.0, 3.0, 2.0}, 0.25), 1.75);
  EXPECT_DOUBLE_EQ(quantile({5.0}, 0.9), 5.0);
}

TEST(Stats, KolmogorovAgreesWithDualSeries) {
  for (double lambda : {0.3, 0.5, 0.8, 1.0, 1.36, 1.63, 2.0, 3.0}) {
    EXPECT_NEAR(stats::kolmogorov_sf(lambda), 1.0 - oracle::kolmogorov_cdf_dual(lambda), 1e-9) << lambda;
  }
  EXPECT_EQ(stats::kolmogorov_sf(0.0), 1.0);
}

TEST(Stats, ChiSquareAgreesWithQuadrature) {
  for (double x : {0.1, 1.0, 3.84, 6.63, 10.0, 20.0}) {
    // P(chi2_1 > x) = 2 * int_{sqrt x}^{inf} phi(z) dz
    const double tail = 2.0 * boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
                                  [](double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); },
                                  std::sqrt(x), std::numeric_limits<double>::infinity(), 15, 1e-14);
    EXPECT_NEAR(stats::chi2_sf(x, 1.0), tail, 1e-10) << x;
  }
}

TEST(Stats, PairedTTestHandCase) {
  const std::vector<double> a{1.0, 2.0, 3.0, 4.0};
  const std::vector<double> b{0.5, 2.5, 2.0, 3.0};
  // d = (0.5, -0.5, 1, 1): mean 0.5, sd = sqrt(0.5), t = 0.5 / (sqrt(0.5)/2)
  const stats::TTest t = stats::paired_t_test(a, b);
  EXPECT_NEAR(t.t, 0.5 / (std::sqrt(0.5) / 2.0), 1e-12);
  EXPECT_EQ(t.dof, 3.0);
  EXPECT_GT(t.p, 0.05);
  EXPECT_LT(t.p, 1.0);
}

TEST(SgdNesterov, ZeroGradientLeavesParameters) {
  ParamLayout layout;
  layout.add("w", 2, 1);
  Vector theta(2);
  theta << 1.0, -2.0;
  Vector v = Vector::Zero(2);
  sgd_nesterov_step(theta, Vector::Zero(2), v, {0.1, 0.0, 0.9}, layout);
  EXPECT_EQ(theta(0), 1.0);
  EXPECT_EQ(theta(1), -2.0);
}

TEST(SgdNesterov, ScalarHandArithmetic) {
  ParamLayout layout;
  layout.add("w", 1, 1);
  Vector theta = Vector::Ones(1);
  Vector v = Vector::Zero(1);
  sgd_nesterov_step(theta, Vector::Ones(1), v, {0.1, 0.0, 0.5}, layout);
  EXPECT_DOUBLE_EQ(v(0), 1.0);
  EXPECT_DOUBLE_EQ(theta(0), 0.85);
}

TEST(SgdNesterov, ZeroMomentumIsVanillaSgdWithDecayMask) {
  ParamLayout layout;
  layout.add("w", 1, 1, true);
  layout.add("rho", 1, 1, false);
  Vector theta(2);
  theta << 2.0, 2.0;
  Vector v = Vector::Zero(2);
  const Vector g = Vector::Constant(2, 0.5);
  for (int step = 0; step < 2; ++step) sgd_nesterov_step(theta, g, v, {0.1, 0.1, 0.0}, layout);
  double w = 2.0, rho = 2.0;
  for (int step = 0; step < 2; ++step) {
    w -= 0.1 * (0.5 + 0.1 * w);
    rho -= 0.1 * 0.5;
  }
  EXPECT_DOUBLE_EQ(theta(0), w);
  EXPECT_DOUBLE_EQ(theta(1), rho);
}

TEST(SgdNesterov, NonFiniteGradientNamesBlockAndSkipsUpdate) {
  ParamLayout layout;
  layout.add("layer0.weight", 2, 1);
  layout.add("layer0.bias", 1, 1);
  Vector theta = Vector::Ones(3);
  Vector v = Vector::Zero(3);
  Vector g = Vector::Zero(3);
  g(2) = std::numeric_limits<double>::quiet_NaN();
  try {
    sgd_nesterov_step(theta, g, v, {0.1, 0.0, 0.0}, layout);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kNonFiniteGradient);
    EXPECT_NE(std::string(e.what()).find("layer0.bias"), std::string::npos);
  }
  EXPECT_EQ(theta, Vector::Ones(3));
}

}  // namespace
}  // namespace vdpt
