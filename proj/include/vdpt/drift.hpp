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

// Dataset-shift statistics between a reference (training) cohort and a
// current cohort: a Bonferroni-corrected battery of per-feature tests, a
// label-prevalence test and, given a stochastic model, a shift test on the
// distribution of its confidence scores.

#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "vdpt/cohort.hpp"
#include "vdpt/uncertainty.hpp"
#include "vdpt/vdp.hpp"

namespace vdpt {

struct KsResult {
  double statistic = 0.0;  // sup |ECDF_a - ECDF_b|
  double p = 1.0;          // asymptotic Kolmogorov tail
};

// Needs at least 5 values per sample (kTooFewSamples); NaNs are rejected.
KsResult ks_2sample(std::span<const double> a, std::span<const double> b);

struct Chi2Result {
  double statistic = 0.0;
  double p = 1.0;
  std::vector<double> observed_proportions;
  std::vector<double> expected_proportions;
};

// One-way goodness of fit of `observed` counts against `expected`
// proportions, dof = categories - 1. Throws kTooFewSamples for fewer than 5
// observations, kInvalidArgument when the proportions do not sum to 1 and
// kZeroExpected when a category has zero expected mass.
Chi2Result chi2_label_test(std::span<const double> observed, std::span<const double> expected);

struct FeatureDrift {
  std::string feature;
  std::string test;   // "ks" for continuous features, "chi2" for binary ones
  double statistic = 0.0;
  double p = 1.0;
  double alpha_corrected = 0.0;
  bool flagged = false;
  Index n_reference = 0;  // observed (non-missing) values
  Index n_current = 0;
};

struct KdeCurve {
  std::string feature;
  Vector grid;
  Vector reference;
  Vector current;
};

struct DriftReport {
  double alpha = 0.01;
  Index n_reference = 0;
  Index n_current = 0;
  std::vector<FeatureDrift> features;
  std::vector<std::string> skipped;  // too few observed values to test
  Chi2Result label;
  bool label_flagged = false;
  std::optional<KsResult> confidence;
  bool confidence_flagged = false;
  std::vector<KdeCurve> kde;

  std::vector<std::string> flagged_features() const;
  nlohmann::json to_json() const;
};

// Stochastic model used for the confidence-shift test. `features` maps a raw
// cohort to the model's input matrix (imputation, standardization); when it
// is empty the cohort matrix is used as is and must be fully observed.
struct ConfidenceModel {
  VdpParams params;
  VarianceCdf cdf;
  std::function<Matrix(const Cohort&)> features;
};

Vector confidence_scores(const ConfidenceModel& model, const Cohort& cohort);

struct DriftOptions {
  double alpha = 0.01;      // family-wise level of the feature battery
  Index kde_points = 128;   // grid size of the curves for flagged features
};

// Feature names must match as sets (kSchemaMismatch); the current cohort is
// aligned to the reference column order. Both cohorts need at least 5 rows
// (kTooFewSamples).
DriftReport drift_report(const Cohort& reference, const Cohort& current,
                         const ConfidenceModel* model = nullptr,
                         const DriftOptions& options = {});

}  // namespace vdpt
