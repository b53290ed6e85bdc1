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

#include "vdpt/numeric.hpp"

#include <unordered_set>

namespace vdpt {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotPositiveDefinite: return "NotPositiveDefinite";
    case ErrorCode::kNotSymmetric: return "NotSymmetric";
    case ErrorCode::kDegenerateInput: return "DegenerateInput";
    case ErrorCode::kShapeMismatch: return "ShapeMismatch";
    case ErrorCode::kParseError: return "ParseError";
    case ErrorCode::kMissingLabel: return "MissingLabel";
    case ErrorCode::kInvalidLabel: return "InvalidLabel";
    case ErrorCode::kInvalidSpec: return "InvalidSpec";
    case ErrorCode::kAllMissingFeature: return "AllMissingFeature";
    case ErrorCode::kTooFewMinority: return "TooFewMinority";
    case ErrorCode::kNotFitted: return "NotFitted";
    case ErrorCode::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorCode::kNotTrained: return "NotTrained";
    case ErrorCode::kEmptySubsample: return "EmptySubsample";
    case ErrorCode::kTooFewSamples: return "TooFewSamples";
    case ErrorCode::kZeroExpected: return "ZeroExpected";
    case ErrorCode::kSchemaMismatch: return "SchemaMismatch";
    case ErrorCode::kSingleClass: return "SingleClass";
    case ErrorCode::kTooFewPerClass: return "TooFewPerClass";
    case ErrorCode::kIoError: return "IoError";
    case ErrorCode::kInvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

std::vector<Index> SeededRng::sample_without_replacement(Index n, Index k) {
  if (k > n || k < 0) {
    throw Error(ErrorCode::kInvalidArgument, "sample_without_replacement: k > n");
  }
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(k));
  if (2 * k >= n) {
    std::vector<Index> all(static_cast<std::size_t>(n));
    std::iota(all.begin(), all.end(), Index{0});
    // Partial Fisher-Yates.
    for (Index i = 0; i < k; ++i) {
      const auto j = i + static_cast<Index>(uniform_index(static_cast<std::uint64_t>(n - i)));
      std::swap(all[static_cast<std::size_t>(i)], all[static_cast<std::size_t>(j)]);
      out.push_back(all[static_cast<std::size_t>(i)]);
    }
    return out;
  }
  std::unordered_set<Index> seen;
  while (static_cast<Index>(out.size()) < k) {
    const auto candidate = static_cast<Index>(uniform_index(static_cast<std::uint64_t>(n)));
    if (seen.insert(candidate).second) out.push_back(candidate);
  }
  return out;
}

double silverman_bandwidth(std::span<const double> sample) {
  const auto n = static_cast<double>(sample.size());
  if (sample.size() < 2) {
    throw Error(ErrorCode::kDegenerateInput, "gaussian_kde: need at least two points");
  }
  const double mean = std::accumulate(sample.begin(), sample.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : sample) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1.0));
  if (!(sd > 0.0)) {
    throw Error(ErrorCode::kDegenerateInput, "gaussian_kde: constant sample");
  }
  return 1.06 * sd * std::pow(n, -0.2);
}

Vector gaussian_kde(std::span<const double> sample, std::span<const double> eval_points) {
  const double h = silverman_bandwidth(sample);
  const double norm = 1.0 / (static_cast<double>(sample.size()) * h * std::sqrt(2.0 * M_PI));
  Vector out(static_cast<Index>(eval_points.size()));
  for (std::size_t i = 0; i < eval_points.size(); ++i) {
    double acc = 0.0;
    for (double s : sample) {
      const double u = (eval_points[i] - s) / h;
      acc += std::exp(-0.5 * u * u);
    }
    out(static_cast<Index>(i)) = acc * norm;
  }
  return out;
}

Vector linspace(double lo, double hi, Index count) {
  return Vector::LinSpaced(count, lo, hi);
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) {
    throw Error(ErrorCode::kDegenerateInput, "quantile: empty sample");
  }
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace vdpt
