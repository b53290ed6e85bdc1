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

// Dense linear algebra, seeded randomness and small statistical primitives
// shared by every other module.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include "vdpt/error.hpp"

namespace vdpt {

using Index = Eigen::Index;

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

// ---------------------------------------------------------------------------
// SeededRng
//
// splitmix64 stream with the distribution algorithms fixed here, so streams do
// not depend on the standard library's distribution implementations.
// ---------------------------------------------------------------------------
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed = 0) : seed_(seed), state_(mix(seed)) {}

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n) by rejection (no modulo bias).
  std::uint64_t uniform_index(std::uint64_t n) {
    if (n <= 1) return 0;
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  // Box-Muller; the second variate is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * M_PI * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Independent child stream keyed by `stream`; does not advance this stream.
  SeededRng split(std::uint64_t stream) const {
    return SeededRng(mix(seed_ ^ mix(stream + 0x632BE59BD9B4E019ULL)));
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::swap(values[i - 1], values[uniform_index(i)]);
    }
  }

  // k distinct indices from [0, n), in draw order.
  std::vector<Index> sample_without_replacement(Index n, Index k);

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// ---------------------------------------------------------------------------
// Linear solves
// ---------------------------------------------------------------------------

template <typename Scalar>
struct CholeskySolve {
  MatrixX<Scalar> solution;
  Scalar logdet;
};

// Solves A X = B for symmetric positive definite A and returns log|A| from the
// same factorization. Throws kNotPositiveDefinite if a pivot is not positive.
template <typename DerivedA, typename DerivedB>
CholeskySolve<typename DerivedA::Scalar> cholesky_logdet_solve(
    const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.rows() != a.cols() || a.rows() != b.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "cholesky_logdet_solve: shape mismatch");
  }
  const Scalar scale = std::max<Scalar>(Scalar(1), a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > Scalar(1e-8) * scale) {
    throw Error(ErrorCode::kNotSymmetric, "cholesky_logdet_solve: matrix not symmetric");
  }
  const Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt(a);
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorCode::kNotPositiveDefinite,
                "cholesky_logdet_solve: non-positive pivot; increase jitter");
  }
  const auto diag = llt.matrixLLT().diagonal();
  if ((diag.array() <= Scalar(0)).any() || !diag.allFinite()) {
    throw Error(ErrorCode::kNotPositiveDefinite,
                "cholesky_logdet_solve: non-positive pivot; increase jitter");
  }
  return {llt.solve(b), Scalar(2) * diag.array().log().sum()};
}

struct CgResult {
  Vector x;
  int iterations = 0;
  double residual_norm = 0.0;  // ||A x - b||_2 of the returned iterate
  bool converged = false;
};

// Conjugate gradient for an operator that is SPD (callers add damping).
// Never throws on non-convergence: the best iterate is returned with
// converged == false. A direction of negative curvature does not stop the
// iteration: for a symmetric nonsingular operator the recurrence stays well
// defined (it is the Lanczos Galerkin solution), and a damped Hessian away
// from an exact optimum can have a few slightly negative eigenvalues. Only an
// exactly zero or non-finite curvature ends the run.
template <typename LinearOperator>
CgResult conjugate_gradient(LinearOperator&& apply_a, const Vector& b, double tol,
                            int max_iter) {
  CgResult out;
  out.x = Vector::Zero(b.size());
  const double b_norm = b.norm();
  if (b_norm == 0.0) {
    out.converged = true;
    return out;
  }
  Vector r = b;
  Vector p = r;
  double rs = r.squaredNorm();
  Vector best = out.x;
  double best_res = std::sqrt(rs);
  for (int it = 1; it <= max_iter; ++it) {
    const Vector ap = apply_a(static_cast<const Vector&>(p));
    const double denom = p.dot(ap);
    if (denom == 0.0 || !std::isfinite(denom)) break;
    const double alpha = rs / denom;
    out.x += alpha * p;
    r -= alpha * ap;
    const double rs_new = r.squaredNorm();
    out.iterations = it;
    const double res = std::sqrt(rs_new);
    if (res < best_res) {
      best_res = res;
      best = out.x;
    }
    if (res <= tol * b_norm) {
      // Recompute the true residual; the recurrence drifts on long runs.
      const double true_res = (apply_a(static_cast<const Vector&>(out.x)) - b).norm();
      if (true_res <= tol * b_norm) {
        out.residual_norm = true_res;
        out.converged = true;
        return out;
      }
      r = b - apply_a(static_cast<const Vector&>(out.x));
      p = r;
      rs = r.squaredNorm();
      continue;
    }
    p = r + (rs_new / rs) * p;
    rs = rs_new;
  }
  out.x = best;
  out.residual_norm = (apply_a(static_cast<const Vector&>(out.x)) - b).norm();
  out.converged = out.residual_norm <= tol * b_norm;
  return out;
}

struct SpectrumEstimate {
  double smallest = 0.0;
  double largest = 0.0;
  int steps = 0;  // Lanczos steps actually taken (fewer on an invariant subspace)
};

// Extreme Ritz values of a symmetric operator on R^n after at most `steps`
// Lanczos iterations with full reorthogonalization, started from a normal
// vector drawn from `rng`. Ritz values lie inside the spectrum, so `smallest`
// bounds the true minimum eigenvalue from above and converges to it quickly
// when that eigenvalue is isolated.
template <typename LinearOperator>
SpectrumEstimate lanczos_extremes(LinearOperator&& apply_a, Index n, int steps, SeededRng& rng) {
  if (n < 1 || steps < 1) throw Error(ErrorCode::kInvalidArgument, "lanczos: empty problem");
  const int k = static_cast<int>(std::min<Index>(steps, n));
  Matrix basis(n, k);
  Vector q(n);
  for (Index i = 0; i < n; ++i) q(i) = rng.normal();
  q.normalize();
  std::vector<double> alpha, beta;
  for (int j = 0; j < k; ++j) {
    basis.col(j) = q;
    Vector w = apply_a(static_cast<const Vector&>(q));
    if (!w.allFinite()) throw Error(ErrorCode::kNonFiniteGradient, "lanczos: operator result is not finite");
    alpha.push_back(q.dot(w));
    // Two passes of classical Gram-Schmidt keep the basis orthogonal to
    // working precision.
    for (int pass = 0; pass < 2; ++pass) {
      w -= basis.leftCols(j + 1) * (basis.leftCols(j + 1).transpose() * w);
    }
    const double b = w.norm();
    if (j + 1 == k || b <= 1e-12 * std::max(1.0, std::abs(alpha.back()))) break;
    beta.push_back(b);
    q = w / b;
  }
  const Index m = static_cast<Index>(alpha.size());
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(m, m);
  for (Index i = 0; i < m; ++i) {
    t(i, i) = alpha[static_cast<std::size_t>(i)];
    if (i + 1 < m) t(i, i + 1) = t(i + 1, i) = beta[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd ritz = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(t, Eigen::EigenvaluesOnly).eigenvalues();
  return {ritz(0), ritz(m - 1), static_cast<int>(m)};
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

// Pearson correlation; std::nullopt when either argument has zero variance.
template <typename DerivedX, typename DerivedY>
std::optional<double> pearson(const Eigen::MatrixBase<DerivedX>& x,
                              const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw Error(ErrorCode::kShapeMismatch, "pearson: need equal lengths >= 3");
  }
  const auto xa = x.template cast<double>().array();
  const auto ya = y.template cast<double>().array();
  const Eigen::ArrayXd dx = xa - xa.mean();
  const Eigen::ArrayXd dy = ya - ya.mean();
  const double sxx = dx.square().sum();
  const double syy = dy.square().sum();
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  const double r = (dx * dy).sum() / std::sqrt(sxx * syy);
  return std::clamp(r, -1.0, 1.0);
}

// 1-based ranks with ties receiving the average of the ranks they span.
template <typename Derived>
Vector fractional_ranks(const Eigen::MatrixBase<Derived>& x) {
  const Index n = x.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return x(a) < x(b); });
  Vector ranks(n);
  Index i = 0;
  while (i < n) {
    Index j = i;
    while (j + 1 < n && x(order[j + 1]) == x(order[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Index k = i; k <= j; ++k) ranks(order[k]) = avg;
    i = j + 1;
  }
  return ranks;
}

template <typename DerivedX, typename DerivedY>
std::optional<double> spearman(const Eigen::MatrixBase<DerivedX>& x,
                               const Eigen::MatrixBase<DerivedY>& y) {
  if (x.size() != y.size() || x.size() < 3) {
    throw Error(ErrorCode::kShapeMismatch, "spearman: need equal lengths >= 3");
  }
  return pearson(fractional_ranks(x), fractional_ranks(y));
}

// ---------------------------------------------------------------------------
// Kernel density estimate
// ---------------------------------------------------------------------------

// Silverman's rule 1.06 * sd * n^(-1/5), sd with ddof = 1.
double silverman_bandwidth(std::span<const double> sample);

// Gaussian KDE at each evaluation point. Throws kDegenerateInput for samples
// with fewer than two points or no spread.
Vector gaussian_kde(std::span<const double> sample, std::span<const double> eval_points);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

// Evenly spaced grid of `count` points over [lo, hi].
Vector linspace(double lo, double hi, Index count);

// Sample quantile with linear interpolation between order statistics (type 7).
double quantile(std::vector<double> values, double q);

}  // namespace vdpt
