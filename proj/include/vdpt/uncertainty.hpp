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

// Confidence score from predictive variance: one minus the empirical CDF of
// the training-set variances, so 1 means "more certain than every training
// prediction" and 0 "less certain than all of them".

#pragma once

#include <vector>

#include "json.hpp"
#include "vdpt/vdp.hpp"

namespace vdpt {

class VarianceCdf {
 public:
  VarianceCdf() = default;
  // Sorts `values`; needs at least 10 finite, non-negative entries.
  explicit VarianceCdf(std::vector<double> values);

  const std::vector<double>& values() const { return values_; }
  Index size() const { return static_cast<Index>(values_.size()); }
  bool empty() const { return values_.empty(); }

  // Order statistic i (0-based) sits at plotting position (i + 1) / (n + 1);
  // between order statistics the CDF is linear, ties resolve to the highest
  // rank, and outside the observed range it is 0 or 1.
  double cdf(double variance) const;
  double confidence(double variance) const { return 1.0 - cdf(variance); }

  nlohmann::json to_json() const;
  static VarianceCdf from_json(const nlohmann::json& j);

 private:
  std::vector<double> values_;
};

// One predictive variance per row of the (standardized) training matrix.
VarianceCdf fit_variance_cdf(const VdpParams& params, const Matrix& train_x);
VarianceCdf fit_variance_cdf(const VdpParams& params, const Cohort& train);

}  // namespace vdpt
