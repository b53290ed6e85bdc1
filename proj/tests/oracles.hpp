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

// Independent reference computations shared by the unit and acceptance
// suites. Nothing here calls into the library's numerical kernels.

#pragma once

#include <cmath>
#include <functional>
#include <numbers>
#include <vector>

#include "vdpt/numeric.hpp"

namespace vdpt::oracle {

// Gauss-Jordan elimination with partial pivoting on a dense copy.
inline Matrix gauss_solve(Matrix a, Matrix b) {
  const Index n = a.rows();
  for (Index col = 0; col < n; ++col) {
    Index pivot = col;
    for (Index r = col + 1; r < n; ++r) {
      if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
    }
    a.row(col).swap(a.row(pivot));
    b.row(col).swap(b.row(pivot));
    for (Index r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a(r, col) / a(col, col);
      a.row(r) -= f * a.row(col);
      b.row(r) -= f * b.row(col);
    }
  }
  for (Index r = 0; r < n; ++r) b.row(r) /= a(r, r);
  return b;
}

// Log-determinant by elimination (for SPD inputs the pivots are positive).
inline double gauss_logdet(Matrix a) {
  const Index n = a.rows();
  double acc = 0.0;
  for (Index col = 0; col < n; ++col) {
    for (Index r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      a.row(r) -= f * a.row(col);
    }
    acc += std::log(a(col, col));
  }
  return acc;
}

inline Matrix random_spd(Index n, SeededRng& rng, double ridge = 1.0) {
  Matrix g(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) g(i, j) = rng.normal();
  }
  Matrix a = g * g.transpose();
  a.diagonal().array() += ridge;
  return a;
}

// Central finite-difference gradient of f at theta.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& theta,
                          double h) {
  Vector g(theta.size());
  Vector t = theta;
  for (Index i = 0; i < theta.size(); ++i) {
    const double orig = t(i);
    t(i) = orig + h;
    const double up = f(t);
    t(i) = orig - h;
    const double down = f(t);
    t(i) = orig;
    g(i) = (up - down) / (2.0 * h);
  }
  return g;
}

// max_i |a_i - b_i| / max(1, |b_i|)
inline double max_rel_error(const Vector& a, const Vector& b) {
  double worst = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a(i) - b(i)) / std::max(1.0, std::abs(b(i))));
  }
  return worst;
}

inline Vector random_vector(Index n, SeededRng& rng) {
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

inline Matrix random_matrix(Index r, Index c, SeededRng& rng) {
  Matrix m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) m(i, j) = rng.normal();
  }
  return m;
}

// Kolmogorov CDF through the dual theta series
// sqrt(2 pi)/lambda * sum exp(-(2k-1)^2 pi^2 / (8 lambda^2)).
inline double kolmogorov_cdf_dual(double lambda) {
  double acc = 0.0;
  for (int k = 1; k < 200; ++k) {
    const double m = 2.0 * k - 1.0;
    acc += std::exp(-m * m * std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
  }
  return std::sqrt(2.0 * std::numbers::pi) / lambda * acc;
}

}  // namespace vdpt::oracle
