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

// Reference distributions for the hypothesis tests used by the drift,
// evaluation and influence modules.

#pragma once

#include <span>

namespace vdpt::stats {

// Upper tail of the asymptotic Kolmogorov distribution,
// Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2), truncated once a
// term drops below 1e-10.
double kolmogorov_sf(double lambda);

// Upper tail of chi-square with `dof` degrees of freedom (regularized upper
// incomplete gamma).
double chi2_sf(double x, double dof);

// Two-sided p-value of Student's t with `dof` degrees of freedom.
double student_t_two_sided(double t, double dof);

double normal_cdf(double x);

struct TTest {
  double t = 0.0;
  double p = 1.0;
  double dof = 0.0;
};

// Paired two-sided t-test on a[i] - b[i].
TTest paired_t_test(std::span<const double> a, std::span<const double> b);

// Two-sided p-value for a correlation coefficient r over n pairs, via
// t = r sqrt((n - 2) / (1 - r^2)).
double correlation_p_value(double r, double n);

}  // namespace vdpt::stats
