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

#include "logistic_oracle.hpp"
#include "oracles.hpp"
#include "vdpt/influence.hpp"

namespace vdpt {
namespace {

// J(theta) = 1/2 theta^T A theta; instance gradients are the inputs themselves.
struct QuadraticModel {
  Matrix a;
  Vector theta;
  Matrix tx;
  Labels ty;
  const Vector& parameters() const { return theta; }
  Vector objective_gradient(const Vector& t) const { return a * t; }
  Vector instance_gradient(const Vector& x, int) const { return x; }
  Vector per_sample_dot(const Matrix& x, const Labels&, const Vector& dir) const { return x * dir; }
  const Matrix& train_x() const { return tx; }
  const Labels& train_y() const { return ty; }
  std::string tag() const { return "quadratic"; }
};
static_assert(InfluenceModel<QuadraticModel>);
static_assert(InfluenceModel<MlpObjective>);
static_assert(InfluenceModel<VdpObjective>);

QuadraticModel quadratic(Index n, std::uint64_t seed) {
  SeededRng rng(seed);
  QuadraticModel q;
  q.a = oracle::random_spd(n, rng, 0.5);
  q.theta = oracle::random_vector(n, rng);
  q.tx = oracle::random_matrix(4, n, rng);
  q.ty = Labels::Zero(4);
  return q;
}

// Hessians of untrained networks are indefinite, so the damped operator is only
// guaranteed to be SPD near a regularized optimum. Every network fixture is
// therefore trained first.
MlpParams trained_mlp(const std::vector<int>& widths, const Matrix& x, const Labels& y,
                      std::uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden.assign(widths.begin() + 1, widths.end() - 1);
  cfg.epochs = 400;
  cfg.batch_size = 0;
  cfg.lr = 0.1;
  cfg.momentum = 0.9;
  cfg.weight_decay = 0.01;
  cfg.pos_weight = 2.0;
  cfg.seed = seed;
  return train_mlp(x, y, cfg).params;
}

MlpObjective small_mlp_objective(const std::vector<int>& widths, Index n, std::uint64_t seed,
                                 Index hessian_limit = 0) {
  SeededRng rng(seed);
  const Matrix x = oracle::random_matrix(n, widths.front(), rng);
  Labels y(n);
  for (Index i = 0; i < n; ++i) y(i) = x(i, 0) + 0.5 * rng.normal() > 0 ? 1 : 0;
  return MlpObjective(trained_mlp(widths, x, y, seed), 2.0, 0.01, x, y,
                      hessian_rows(n, hessian_limit, seed));
}

TEST(Hvp, QuadraticIsExact) {
  const QuadraticModel q = quadratic(8, 1);
  SeededRng rng(2);
  const Vector v = oracle::random_vector(8, rng);
  EXPECT_LT((hvp(q, v) - q.a * v).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_EQ(hvp(q, Vector(Vector::Zero(8))), Vector::Zero(8));
}

TEST(Hvp, SymmetricOnMlp) {
  const MlpObjective m = small_mlp_objective({5, 6, 1}, 60, 3);
  SeededRng rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector u = oracle::random_vector(m.parameters().size(), rng);
    const Vector v = oracle::random_vector(m.parameters().size(), rng);
    EXPECT_NEAR(v.dot(hvp(m, u)), u.dot(hvp(m, v)), 1e-5);
  }
}

TEST(Hvp, RejectsNonFiniteDirection) {
  const QuadraticModel q = quadratic(3, 5);
  Vector v = Vector::Ones(3);
  v(1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(hvp(q, v), Error);
}

TEST(InverseHvp, QuadraticMatchesDirectSolve) {
  const QuadraticModel q = quadratic(10, 6);
  SeededRng rng(7);
  const Vector b = oracle::random_vector(10, rng);
  InfluenceConfig cfg;
  cfg.cg_tol = 1e-10;
  const CgResult r = inverse_hvp(q, b, cfg);
  Matrix damped = q.a;
  damped.diagonal().array() += cfg.damping;
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.x - oracle::gauss_solve(damped, b).col(0)).cwiseAbs().maxCoeff(), 1e-8);
  EXPECT_EQ(inverse_hvp(q, Vector(Vector::Zero(10)), cfg).x, Vector::Zero(10));
}

TEST(InverseHvp, TinyNetMatchesExplicitDampedHessian) {
  const MlpObjective m = small_mlp_objective({4, 4, 1}, 80, 8);  // 25 parameters
  const Index p = m.parameters().size();
  ASSERT_LE(p, 30);
  // Explicit Hessian from second differences of the objective value, written
  // out by hand for one hidden layer: theta = [W0 (row-major), b0, W1, b1].
  // The ReLU pattern is frozen at the trained point, as for the operator.
  const Index in = 4, hid = 4;
  auto unpack = [&](const Vector& t, Matrix& w0, Vector& b0, Vector& w1, double& b1) {
    w0.resize(hid, in);
    for (Index r = 0; r < hid; ++r) {
      for (Index c = 0; c < in; ++c) w0(r, c) = t(r * in + c);
    }
    b0 = t.segment(hid * in, hid);
    w1 = t.segment(hid * in + hid, hid);
    b1 = t(hid * in + 2 * hid);
  };
  const Vector t0 = m.parameters();
  const Index n = m.train_x().rows();
  Matrix mask(n, hid);
  {
    Matrix w0;
    Vector b0, w1;
    double b1;
    unpack(t0, w0, b0, w1, b1);
    for (Index i = 0; i < n; ++i) {
      const Vector z = w0 * m.train_x().row(i).transpose() + b0;
      for (Index k = 0; k < hid; ++k) mask(i, k) = z(k) > 0.0 ? 1.0 : 0.0;
    }
  }
  auto objective = [&](const Vector& t) {
    Matrix w0;
    Vector b0, w1;
    double b1;
    unpack(t, w0, b0, w1, b1);
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      const Vector z = w0 * m.train_x().row(i).transpose() + b0;
      const double logit = w1.dot(z.cwiseProduct(mask.row(i).transpose())) + b1;
      const double pr = 1.0 / (1.0 + std::exp(-logit));
      acc += m.train_y()(i) == 1 ? -2.0 * std::log(pr) : -std::log(1.0 - pr);
    }
    // Weight decay covers the weight matrices only.
    return acc / static_cast<double>(n) +
           0.005 * (t.head(hid * in).squaredNorm() + t.segment(hid * in + hid, hid).squaredNorm());
  };
  const double h = 1e-4;
  Matrix hess(p, p);
  for (Index i = 0; i < p; ++i) {
    for (Index j = 0; j < p; ++j) {
      Vector tpp = t0, tpm = t0, tmp = t0, tmm = t0;
      tpp(i) += h; tpp(j) += h;
      tpm(i) += h; tpm(j) -= h;
      tmp(i) -= h; tmp(j) += h;
      tmm(i) -= h; tmm(j) -= h;
      hess(i, j) = (objective(tpp) - objective(tpm) - objective(tmp) + objective(tmm)) / (4 * h * h);
    }
  }
  hess = 0.5 * (hess + hess.transpose()).eval();
  InfluenceConfig cfg;
  cfg.cg_tol = 1e-10;
  hess.diagonal().array() += cfg.damping;
  SeededRng rng(9);
  const Vector b = oracle::random_vector(p, rng);
  const Vector ref = oracle::gauss_solve(hess, b).col(0);
  const CgResult r = inverse_hvp(m, b, cfg);
  EXPECT_LT((r.x - ref).norm() / ref.norm(), 1e-4);
}

TEST(InverseHvp, RoundTripOnDesktopNet) {
  const MlpObjective m = small_mlp_objective({12, 32, 32, 16, 1}, 300, 10, 200);
  SeededRng rng(11);
  InfluenceConfig cfg;
  cfg.cg_tol = 1e-9;
  cfg.cg_max_iter = 3000;
  const Vector v = oracle::random_vector(m.parameters().size(), rng);
  const Vector hv = hvp(m, v) + cfg.damping * v;
  const CgResult r = inverse_hvp(m, hv, cfg);
  EXPECT_LE((r.x - v).norm() / v.norm(), 1e-3);
}

TEST(PerInstanceGrad, LogisticNeuronAndOptimum) {
  MlpParams p({3, 1});
  p.theta << 0.5, -0.2, 0.1, 0.0;
  const MlpObjective m(p, 1.0, 0.0, Matrix::Ones(2, 3), Labels::Ones(2));
  Vector x(3);
  x << 1.0, -1.0, 2.0;
  const double prob = mlp_predict(p, x);
  Vector expected(4);
  expected << (prob - 1.0) * x, prob - 1.0;
  EXPECT_LT((per_instance_grad(m, x, 1) - expected).cwiseAbs().maxCoeff(), 1e-14);
  // A confidently correct instance has (almost) no gradient.
  MlpParams sharp({1, 1});
  sharp.theta << 50.0, 0.0;
  const MlpObjective ms(sharp, 1.0, 0.0, Matrix::Ones(1, 1), Labels::Ones(1));
  EXPECT_LT(per_instance_grad(ms, Vector(Vector::Ones(1)), 1).norm(), 1e-12);
}

TEST(PerInstanceGrad, VdpFiniteDifference) {
  SeededRng rng(12);
  VdpParams p = init_vdp({12, 5, 5, 2}, -3.0, rng);
  const Matrix tx = oracle::random_matrix(10, 12, rng);
  const VdpObjective m(p, {1e-3, 0.01, 1.0}, 0.001, tx, Labels::Zero(10));
  const Vector x = oracle::random_vector(12, rng);
  const Vector g = per_instance_grad(m, x, 1);
  VdpParams q = p;
  const Vector fd = oracle::fd_gradient(
      [&](const Vector& t) {
        q.theta = t;
        return vdp_instance_gradient(q, x, 1, {1e-3, 0.0, 1.0}).loss;
      },
      p.theta, 1e-4);
  EXPECT_LT(oracle::max_rel_error(g, fd), 1e-4);
}

TEST(InfluenceUpLoss, SelfInfluenceNegativeAndZeroGradient) {
  const MlpObjective m = small_mlp_objective({5, 4, 1}, 50, 13);
  SeededRng rng(14);
  for (int trial = 0; trial < 5; ++trial) {
    const Vector x = oracle::random_vector(5, rng);
    EXPECT_LT(influence_up_loss(m, x, 1, x, 1, {}), 0.0);
  }
  const QuadraticModel q = quadratic(6, 15);
  EXPECT_EQ(influence_up_loss(q, Vector(Vector::Zero(6)), 0, Vector(Vector::Ones(6)), 0, {}), 0.0);
}

TEST(InfluenceUpLoss, BilinearInTestGradient) {
  const QuadraticModel q = quadratic(6, 16);
  SeededRng rng(17);
  const Vector z = oracle::random_vector(6, rng);
  const Vector zt = oracle::random_vector(6, rng);
  InfluenceConfig cfg;
  cfg.cg_tol = 1e-13;
  const double base = influence_up_loss(q, z, 0, zt, 0, cfg);
  EXPECT_NEAR(influence_up_loss(q, z, 0, Vector(3.0 * zt), 0, cfg), 3.0 * base, 1e-10 * std::abs(base));
}

TEST(InfluenceUpLoss, TracksLeaveOneOutRetraining) {
  SeededRng rng(18);
  oracle::Logistic lr;
  lr.x = oracle::random_matrix(100, 3, rng);
  lr.y.resize(100);
  for (Index i = 0; i < 100; ++i) {
    lr.y(i) = rng.bernoulli(oracle::Logistic::sigmoid(1.5 * lr.x(i, 0) - lr.x(i, 1))) ? 1 : 0;
  }
  const Vector theta = lr.fit();
  MlpParams p({3, 1});
  p.theta = theta;
  const MlpObjective m(p, lr.pos_weight, lr.l2, lr.x, lr.y);
  const Vector xt = oracle::random_vector(3, rng);
  const int yt = 1;
  InfluenceConfig cfg;
  cfg.cg_tol = 1e-10;
  const Vector predicted = influence_up_loss_many(m, lr.x, lr.y, xt, yt, cfg);
  Vector pred20(20), actual(20);
  const double base = lr.loss(theta, xt, yt);
  for (Index r = 0; r < 20; ++r) {
    std::vector<bool> skip(100, false);
    skip[static_cast<std::size_t>(r)] = true;
    actual(r) = lr.loss(lr.fit(skip), xt, yt) - base;
    pred20(r) = -predicted(r) / 100.0;  // removal = up-weighting by -1/n
  }
  EXPECT_GE(*pearson(pred20, actual), 0.9);
}

TEST(FiLocal, DeadFeatureIsZero) {
  // A feature the model ignores: zero fan-out weights, and a column that
  // carries no information in training (standardized constant, so zero).
  // Zero fan-out alone is not enough: grad_W[:, j] L = delta * x_j still
  // depends on x_j, so the mixed derivative picks up s_test on those weights.
  SeededRng rng(19);
  Matrix x = oracle::random_matrix(80, 4, rng);
  x.col(2).setZero();
  Labels y(80);
  for (Index i = 0; i < 80; ++i) y(i) = x(i, 0) > 0 ? 1 : 0;
  MlpParams p = trained_mlp({4, 6, 1}, x, y, 19);
  p.weight(0).col(2).setZero();
  const MlpObjective m(p, 2.0, 0.01, x, y);
  InfluenceConfig cfg;
  cfg.cg_tol = 1e-10;
  const InfluenceReport r = fi_local(m, Vector(x.row(3).transpose()), 1, {"a", "b", "c", "d"}, cfg);
  EXPECT_LT(std::abs(r.values(2)), 1e-8);
  EXPECT_GT(r.values.cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_TRUE(r.cg_converged);
}

TEST(FiLocal, LogisticToyMatchesExplicitOracle) {
  SeededRng rng(20);
  oracle::Logistic lr;
  lr.pos_weight = 3.0;
  lr.x = oracle::random_matrix(300, 2, rng);
  lr.y.resize(300);
  for (Index i = 0; i < 300; ++i) {
    lr.y(i) = rng.bernoulli(oracle::Logistic::sigmoid(2.0 * lr.x(i, 0) - 1.0 * lr.x(i, 1) - 1.0)) ? 1 : 0;
  }
  const Vector theta = lr.fit();
  MlpParams p({2, 1});
  p.theta = theta;
  const MlpObjective m(p, lr.pos_weight, lr.l2, lr.x, lr.y);
  InfluenceConfig cfg;
  cfg.subsample = 120;
  cfg.subsample_seed = 4;
  cfg.cg_tol = 1e-10;
  const Vector xt = oracle::random_vector(2, rng);
  const InfluenceReport r = fi_local(m, xt, 1, {"a", "b"}, cfg);
  const std::vector<Index> rows = SeededRng(4).sample_without_replacement(300, 120);
  const Vector ref = lr.fi_local(theta, xt, 1, cfg.damping, rows);
  EXPECT_LT((r.values - ref).cwiseAbs().maxCoeff() / ref.cwiseAbs().maxCoeff(), 1e-4);
  EXPECT_TRUE(r.cg_converged);
}

TEST(FiLocal, DeterministicAndOrderInvariant) {
  SeededRng rng(21);
  const Matrix x = oracle::random_matrix(60, 5, rng);
  Labels y(60);
  for (Index i = 0; i < 60; ++i) y(i) = x(i, 1) - x(i, 3) > 0.5;
  const MlpParams p = trained_mlp({5, 6, 1}, x, y, 21);
  const std::vector<std::string> names{"a", "b", "c", "d", "e"};
  InfluenceConfig cfg;
  cfg.cg_tol = 1e-10;
  const Vector xt = x.row(0).transpose();
  const MlpObjective m(p, 1.0, 0.01, x, y);
  const InfluenceReport a = fi_local(m, xt, 0, names, cfg);
  const InfluenceReport b = fi_local(m, xt, 0, names, cfg);
  EXPECT_EQ(a.values, b.values);
  EXPECT_EQ(a.to_json(), b.to_json());
  // Full-set aggregation over a row permutation of the training data.
  std::vector<Index> perm(60);
  std::iota(perm.begin(), perm.end(), Index{0});
  std::reverse(perm.begin(), perm.end());
  Matrix xp(60, 5);
  Labels yp(60);
  for (Index i = 0; i < 60; ++i) {
    xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
    yp(i) = y(perm[static_cast<std::size_t>(i)]);
  }
  const MlpObjective mp(p, 1.0, 0.01, xp, yp);
  const InfluenceReport c = fi_local(mp, xt, 0, names, cfg);
  EXPECT_LT((a.values - c.values).cwiseAbs().maxCoeff(), 1e-8 * a.values.cwiseAbs().maxCoeff());
  InfluenceConfig empty = cfg;
  empty.subsample = 0;
  try {
    fi_local(m, xt, 0, names, empty);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEmptySubsample);
  }
}

TEST(FiLocal, VdpReportHasOneValuePerFeature) {
  SeededRng rng(22);
  VdpParams p = init_vdp({4, 5, 2}, -4.0, rng);
  const Matrix x = oracle::random_matrix(50, 4, rng);
  Labels y(50);
  for (Index i = 0; i < 50; ++i) y(i) = x(i, 1) > 0;
  const VdpObjective m(p, {1e-3, 0.02, 1.0}, 0.001, x, y);
  InfluenceConfig cfg;
  cfg.subsample = 20;
  const InfluenceReport r = fi_local(m, Vector(x.row(0).transpose()), 1, {"a", "b", "c", "d"}, cfg);
  EXPECT_EQ(r.values.size(), 4);
  EXPECT_TRUE(r.values.allFinite());
  EXPECT_EQ(r.model_tag, "vdp");
}

TEST(Explainer, PrecomputedMixedDerivativeMatchesFiLocal) {
  SeededRng rng(23);
  const Matrix x = oracle::random_matrix(60, 5, rng);
  Labels y(60);
  for (Index i = 0; i < 60; ++i) y(i) = x(i, 1) - x(i, 3) > 0.5;
  const std::vector<std::string> names{"a", "b", "c", "d", "e"};
  InfluenceConfig cfg;
  cfg.cg_tol = 1e-11;
  cfg.subsample = 40;
  cfg.subsample_seed = 6;
  const MlpObjective m(trained_mlp({5, 6, 1}, x, y, 23), 1.0, 0.01, x, y);
  const Explainer<MlpObjective> e(m, names, cfg);
  for (Index row : {0, 7, 31}) {
    const Vector xt = x.row(row).transpose();
    for (int label : {0, 1}) {
      const InfluenceReport ref = fi_local(m, xt, label, names, cfg);
      const InfluenceReport got = e.explain(xt, label, "t");
      EXPECT_LT((got.values - ref.values).cwiseAbs().maxCoeff(), 1e-7 * ref.values.cwiseAbs().maxCoeff());
      EXPECT_EQ(got.cg_iterations, ref.cg_iterations);
      EXPECT_EQ(got.instance_id, "t");
    }
  }

  VdpParams p = init_vdp({5, 4, 2}, -4.0, rng);
  const VdpObjective v(p, {1e-2, 0.02, 1.5}, 0.001, x, y);
  InfluenceConfig vcfg = cfg;
  vcfg.curvature_probe_steps = 20;  // untrained, so the shift is needed
  const Explainer<VdpObjective> ve(v, names, vcfg);
  const Vector xt = x.row(2).transpose();
  const InfluenceReport ref = fi_local(v, xt, 1, names, vcfg);
  const InfluenceReport got = ve.explain(xt, 1);
  EXPECT_EQ(got.curvature_shift, ref.curvature_shift);
  EXPECT_LT((got.values - ref.values).cwiseAbs().maxCoeff(), 1e-6 * ref.values.cwiseAbs().maxCoeff());
}

TEST(CurvatureShift, MatchesDenseSpectrumOracle) {
  // Untrained nets have clearly indefinite Hessians.
  SeededRng rng(24);
  const Matrix x = oracle::random_matrix(80, 4, rng);
  Labels y(80);
  for (Index i = 0; i < 80; ++i) y(i) = x(i, 0) > 0 ? 1 : 0;
  MlpParams p({4, 4, 1});
  p.theta = oracle::random_vector(p.layout().size(), rng);
  const MlpObjective m(p, 2.0, 0.01, x, y);
  const Index n = m.parameters().size();
  Matrix h(n, n);
  for (Index k = 0; k < n; ++k) h.col(k) = hvp(m, Vector(Vector::Unit(n, k)));
  h = Matrix(0.5 * (h + h.transpose()));
  const double lmin = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(Eigen::MatrixXd(h)).eigenvalues()(0);
  ASSERT_LT(lmin, -1e-3);

  InfluenceConfig cfg;
  EXPECT_EQ(curvature_shift(m, cfg), 0.0);  // probe off by default
  cfg.curvature_probe_steps = static_cast<int>(n);
  const double shift = curvature_shift(m, cfg);
  EXPECT_NEAR(shift, -1.25 * lmin, 1e-6);

  // The shifted operator is positive definite, so CG converges on it.
  cfg.cg_tol = 1e-10;
  const InfluenceReport r = fi_local(m, Vector(x.row(0).transpose()), 1, {"a", "b", "c", "d"}, cfg);
  EXPECT_TRUE(r.cg_converged);
  EXPECT_EQ(r.curvature_shift, shift);
  EXPECT_EQ(InfluenceReport::from_json(r.to_json()).curvature_shift, shift);

  // A convex model never gets a shift.
  oracle::Logistic lr;
  lr.x = x;
  lr.y = y;
  MlpParams lp({4, 1});
  lp.theta = lr.fit();
  const MlpObjective convex(lp, 1.0, lr.l2, x, y);
  cfg.curvature_probe_steps = 5;
  EXPECT_EQ(curvature_shift(convex, cfg), 0.0);
}

TEST(ValidateExplanations, IdentityExplanations) {
  SeededRng rng(23);
  const Matrix x = oracle::random_matrix(60, 3, rng);
  const ExplanationValidation v = validate_explanations(x, x, {"a", "b", "c"}, 500, rng);
  EXPECT_EQ(v.pairs_used, 500);
  for (const auto& f : v.features) {
    EXPECT_NEAR(*f.abs_pearson, 1.0, 1e-12);
    EXPECT_TRUE(f.significant);
  }
}

TEST(ValidateExplanations, NoiseMatchesPermutationNull) {
  SeededRng rng(24);
  const Matrix x = oracle::random_matrix(200, 4, rng);
  const Matrix fi = oracle::random_matrix(200, 4, rng);
  SeededRng pair_rng(5);
  const ExplanationValidation v = validate_explanations(x, fi, {"a", "b", "c", "d"}, 500, pair_rng);
  for (const auto& f : v.features) {
    EXPECT_FALSE(f.significant) << f.feature;
    EXPECT_GT(f.p_pearson, 0.01);
  }
  // Null oracle: |r| under random re-pairing of FI differences.
  SeededRng perm_rng(6);
  std::vector<double> null_r;
  for (int rep = 0; rep < 200; ++rep) {
    Vector dx(500), dfi(500);
    for (Index t = 0; t < 500; ++t) {
      const auto a = static_cast<Index>(perm_rng.uniform_index(200));
      const auto b = static_cast<Index>(perm_rng.uniform_index(200));
      const auto c = static_cast<Index>(perm_rng.uniform_index(200));
      const auto d = static_cast<Index>(perm_rng.uniform_index(200));
      dx(t) = x(a, 0) - x(b, 0);
      dfi(t) = fi(c, 0) - fi(d, 0);
    }
    null_r.push_back(std::abs(*pearson(dx, dfi)));
  }
  const double q99 = quantile(null_r, 0.99);
  for (const auto& f : v.features) EXPECT_LT(*f.abs_pearson, q99 * 1.5) << f.feature;
}

TEST(ValidateExplanations, CapsPairsWithWarning) {
  SeededRng rng(25);
  const Matrix x = oracle::random_matrix(10, 2, rng);
  const ExplanationValidation v = validate_explanations(x, x, {"a", "b"}, 500, rng);
  EXPECT_EQ(v.pairs_used, 45);
  EXPECT_TRUE(v.warning.has_value());
}

TEST(ValidateExplanations, ConstantFeatureIsReportedNotFatal) {
  SeededRng rng(26);
  Matrix x = oracle::random_matrix(30, 2, rng);
  x.col(1).setConstant(1.0);
  const ExplanationValidation v = validate_explanations(x, x, {"a", "b"}, 100, rng);
  EXPECT_TRUE(v.features[0].abs_pearson.has_value());
  EXPECT_FALSE(v.features[1].abs_pearson.has_value());
  EXPECT_FALSE(v.features[1].significant);
}

TEST(ExplanationProfile, IdenticalAlternatingAndTally) {
  Vector row(5);
  row << 0.1, -3.0, 2.0, 0.5, -1.0;
  Matrix same = row.transpose().replicate(7, 1);
  const ExplanationProfile p = explanation_profile(same, {"a", "b", "c", "d", "e"});
  EXPECT_EQ(p.top_counts, (std::vector<int>{0, 7, 7, 0, 7}));

  Matrix alt(4, 2);
  alt << 1, 2, -1, 2, 1, 2, -1, 2;
  const ExplanationProfile q = explanation_profile(alt, {"a", "b"});
  EXPECT_EQ(q.sentiment[0], 0.0);
  EXPECT_EQ(q.sentiment[1], 1.0);

  SeededRng rng(27);
  const Matrix r = oracle::random_matrix(40, 6, rng);
  const ExplanationProfile t = explanation_profile(r, {"a", "b", "c", "d", "e", "f"});
  for (Index j = 0; j < 6; ++j) {
    int pos = 0, neg = 0, top = 0;
    for (Index i = 0; i < 40; ++i) {
      pos += r(i, j) > 0;
      neg += r(i, j) < 0;
      int larger = 0;
      for (Index k = 0; k < 6; ++k) larger += std::abs(r(i, k)) > std::abs(r(i, j));
      top += larger < 3;
    }
    EXPECT_DOUBLE_EQ(t.sentiment[static_cast<std::size_t>(j)], (pos - neg) / 40.0);
    EXPECT_EQ(t.top_counts[static_cast<std::size_t>(j)], top);
  }
}

}  // namespace
}  // namespace vdpt
