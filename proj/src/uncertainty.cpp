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

#include "vdpt/uncertainty.hpp"

#include <algorithm>
#include <cmath>

namespace vdpt {

VarianceCdf::VarianceCdf(std::vector<double> values) : values_(std::move(values)) {
  if (values_.size() < 10) {
    throw Error(ErrorCode::kTooFewSamples,
                "variance cdf: need at least 10 values, got " + std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "variance cdf: values must be finite and >= 0");
    }
  }
  std::sort(values_.begin(), values_.end());
}

double VarianceCdf::cdf(double variance) const {
  if (values_.empty()) throw Error(ErrorCode::kNotFitted, "variance cdf: not fitted");
  const auto n = static_cast<double>(values_.size());
  if (variance < values_.front()) return 0.0;
  if (variance > values_.back()) return 1.0;
  // Last order statistic <= variance.
  const auto upper = std::upper_bound(values_.begin(), values_.end(), variance);
  const auto k = static_cast<std::size_t>(upper - values_.begin()) - 1;
  const double at_k = static_cast<double>(k + 1) / (n + 1.0);
  if (upper == values_.end()) return at_k;
  const double lo = values_[k];
  const double hi = *upper;
  return at_k + (variance - lo) / (hi - lo) / (n + 1.0);
}

nlohmann::json VarianceCdf::to_json() const { return {{"sorted_variances", values_}}; }

VarianceCdf VarianceCdf::from_json(const nlohmann::json& j) {
  return VarianceCdf(j.at("sorted_variances").get<std::vector<double>>());
}

VarianceCdf fit_variance_cdf(const VdpParams& params, const Matrix& train_x) {
  if (params.empty()) throw Error(ErrorCode::kNotTrained, "fit_variance_cdf: model not trained");
  const VdpBatchPrediction pred = predict_vdp(params, train_x);
  return VarianceCdf(std::vector<double>(pred.variance.data(),
                                         pred.variance.data() + pred.variance.size()));
}

VarianceCdf fit_variance_cdf(const VdpParams& params, const Cohort& train) {
  if (train.has_missing()) {
    throw Error(ErrorCode::kInvalidArgument, "fit_variance_cdf: impute the cohort first");
  }
  return fit_variance_cdf(params, train.x);
}

}  // namespace vdpt
