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

#include "vdpt/drift.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "vdpt/numeric.hpp"
#include "vdpt/stats.hpp"

namespace vdpt {

KsResult ks_2sample(std::span<const double> a, std::span<const double> b) {
  if (a.size() < 5 || b.size() < 5) {
    throw Error(ErrorCode::kTooFewSamples, "ks_2sample: need at least 5 values per sample");
  }
  std::vector<double> sa(a.begin(), a.end());
  std::vector<double> sb(b.begin(), b.end());
  auto finite = [](double v) { return std::isfinite(v); };
  if (!std::all_of(sa.begin(), sa.end(), finite) || !std::all_of(sb.begin(), sb.end(), finite)) {
    throw Error(ErrorCode::kDegenerateInput, "ks_2sample: non-finite value");
  }
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  const auto na = static_cast<double>(sa.size());
  const auto nb = static_cast<double>(sb.size());
  // Merge walk: after consuming every copy of the next pooled value, both
  // ECDFs are exact at that value.
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < sa.size() && j < sb.size()) {
    const double v = std::min(sa[i], sb[j]);
    while (i < sa.size() && sa[i] == v) ++i;
    while (j < sb.size() && sb[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsResult out;
  out.statistic = d;
  const double n_eff = na * nb / (na + nb);
  out.p = stats::kolmogorov_sf(std::sqrt(n_eff) * d);
  return out;
}

Chi2Result chi2_label_test(std::span<const double> observed, std::span<const double> expected) {
  if (observed.size() != expected.size() || observed.size() < 2) {
    throw Error(ErrorCode::kShapeMismatch, "chi2_label_test: need matching category counts");
  }
  double total = 0.0, mass = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    if (observed[k] < 0.0 || expected[k] < 0.0) {
      throw Error(ErrorCode::kInvalidArgument, "chi2_label_test: negative count or proportion");
    }
    total += observed[k];
    mass += expected[k];
  }
  if (total < 5.0) throw Error(ErrorCode::kTooFewSamples, "chi2_label_test: fewer than 5 observations");
  if (std::abs(mass - 1.0) > 1e-9) {
    throw Error(ErrorCode::kInvalidArgument, "chi2_label_test: expected proportions must sum to 1");
  }
  Chi2Result out;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    if (expected[k] == 0.0) {
      throw Error(ErrorCode::kZeroExpected,
                  "chi2_label_test: category " + std::to_string(k) + " has zero expected count");
    }
    const double e = expected[k] * total;
    out.statistic += (observed[k] - e) * (observed[k] - e) / e;
    out.observed_proportions.push_back(observed[k] / total);
    out.expected_proportions.push_back(expected[k]);
  }
  out.p = stats::chi2_sf(out.statistic, static_cast<double>(observed.size() - 1));
  return out;
}

Vector confidence_scores(const ConfidenceModel& model, const Cohort& cohort) {
  Matrix x;
  if (model.features) {
    x = model.features(cohort);
  } else {
    if (cohort.has_missing()) {
      throw Error(ErrorCode::kInvalidArgument, "confidence_scores: cohort has missing values");
    }
    x = cohort.x;
  }
  if (model.cdf.empty()) throw Error(ErrorCode::kNotFitted, "confidence_scores: no variance CDF");
  const VdpBatchPrediction pred = predict_vdp(model.params, x);
  Vector out(pred.variance.size());
  for (Index i = 0; i < out.size(); ++i) out(i) = model.cdf.confidence(pred.variance(i));
  return out;
}

namespace {

std::vector<double> observed_values(const Cohort& c, Index col) {
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(c.rows()));
  for (Index i = 0; i < c.rows(); ++i) {
    if (!c.missing(i, col) && std::isfinite(c.x(i, col))) v.push_back(c.x(i, col));
  }
  return v;
}

bool is_binary(const std::vector<double>& a, const std::vector<double>& b) {
  auto binary = [](double v) { return v == 0.0 || v == 1.0; };
  return std::all_of(a.begin(), a.end(), binary) && std::all_of(b.begin(), b.end(), binary);
}

double ones(const std::vector<double>& v) {
  return static_cast<double>(std::count(v.begin(), v.end(), 1.0));
}

// One-way test of the current 0/1 counts against the reference proportions.
// A category the reference never shows but the current cohort does is a
// certain shift; when neither shows it there is nothing to test.
FeatureDrift binary_drift(const std::string& name, const std::vector<double>& ref,
                          const std::vector<double>& cur) {
  FeatureDrift f;
  f.feature = name;
  f.test = "chi2";
  const double q1 = ones(ref) / static_cast<double>(ref.size());
  const double c1 = ones(cur);
  const std::vector<double> observed{static_cast<double>(cur.size()) - c1, c1};
  const std::vector<double> expected{1.0 - q1, q1};
  if (q1 == 0.0 || q1 == 1.0) {
    const bool differs = q1 == 0.0 ? c1 > 0.0 : c1 < static_cast<double>(cur.size());
    f.statistic = differs ? std::numeric_limits<double>::infinity() : 0.0;
    f.p = differs ? 0.0 : 1.0;
    return f;
  }
  const Chi2Result r = chi2_label_test(observed, expected);
  f.statistic = r.statistic;
  f.p = r.p;
  return f;
}

}  // namespace

std::vector<std::string> DriftReport::flagged_features() const {
  std::vector<std::string> out;
  for (const auto& f : features) {
    if (f.flagged) out.push_back(f.feature);
  }
  return out;
}

DriftReport drift_report(const Cohort& reference, const Cohort& current,
                         const ConfidenceModel* model, const DriftOptions& options) {
  if (!(options.alpha > 0.0 && options.alpha < 1.0) || options.kde_points < 2) {
    throw Error(ErrorCode::kInvalidArgument, "drift_report: alpha in (0, 1), kde_points >= 2");
  }
  const std::set<std::string> ref_names(reference.feature_names.begin(), reference.feature_names.end());
  const std::set<std::string> cur_names(current.feature_names.begin(), current.feature_names.end());
  if (ref_names != cur_names || ref_names.size() != reference.feature_names.size()) {
    throw Error(ErrorCode::kSchemaMismatch, "drift_report: cohorts have different features");
  }
  if (reference.rows() < 5 || current.rows() < 5) {
    throw Error(ErrorCode::kTooFewSamples, "drift_report: each cohort needs at least 5 rows");
  }
  const Cohort aligned = current.select(reference.feature_names);

  DriftReport report;
  report.alpha = options.alpha;
  report.n_reference = reference.rows();
  report.n_current = current.rows();

  std::vector<std::vector<double>> ref_values, cur_values;
  for (Index j = 0; j < reference.cols(); ++j) {
    const std::string& name = reference.feature_names[static_cast<std::size_t>(j)];
    std::vector<double> a = observed_values(reference, j);
    std::vector<double> b = observed_values(aligned, j);
    if (a.size() < 5 || b.size() < 5) {
      report.skipped.push_back(name);
      continue;
    }
    FeatureDrift f;
    if (is_binary(a, b)) {
      f = binary_drift(name, a, b);
    } else {
      const KsResult ks = ks_2sample(a, b);
      f.feature = name;
      f.test = "ks";
      f.statistic = ks.statistic;
      f.p = ks.p;
    }
    f.n_reference = static_cast<Index>(a.size());
    f.n_current = static_cast<Index>(b.size());
    report.features.push_back(f);
    ref_values.push_back(std::move(a));
    cur_values.push_back(std::move(b));
  }

  const double alpha_m = options.alpha / static_cast<double>(std::max<std::size_t>(1, report.features.size()));
  for (std::size_t k = 0; k < report.features.size(); ++k) {
    FeatureDrift& f = report.features[k];
    f.alpha_corrected = alpha_m;
    f.flagged = f.p < alpha_m;
    if (!f.flagged || f.test != "ks") continue;
    const auto& a = ref_values[k];
    const auto& b = cur_values[k];
    const auto [lo_a, hi_a] = std::minmax_element(a.begin(), a.end());
    const auto [lo_b, hi_b] = std::minmax_element(b.begin(), b.end());
    const double lo = std::min(*lo_a, *lo_b), hi = std::max(*hi_a, *hi_b);
    try {
      KdeCurve curve;
      curve.feature = f.feature;
      curve.grid = linspace(lo, hi, options.kde_points);
      curve.reference = gaussian_kde(a, as_span(curve.grid));
      curve.current = gaussian_kde(b, as_span(curve.grid));
      report.kde.push_back(std::move(curve));
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kDegenerateInput) throw;  // a constant sample has no density
    }
  }

  const double ref_pos = static_cast<double>(reference.positives()) / static_cast<double>(reference.rows());
  const std::vector<double> observed{static_cast<double>(current.negatives()),
                                     static_cast<double>(current.positives())};
  const std::vector<double> expected{1.0 - ref_pos, ref_pos};
  report.label = chi2_label_test(observed, expected);
  report.label_flagged = report.label.p < options.alpha;

  if (model != nullptr) {
    const Vector ca = confidence_scores(*model, reference);
    const Vector cb = confidence_scores(*model, aligned);
    report.confidence = ks_2sample(as_span(ca), as_span(cb));
    report.confidence_flagged = report.confidence->p < options.alpha;
  }
  return report;
}

namespace {

// JSON has no infinity; an unbounded statistic is written as null.
nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

nlohmann::json DriftReport::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.drift/1";
  j["alpha"] = alpha;
  j["n_reference"] = n_reference;
  j["n_current"] = n_current;
  j["features"] = nlohmann::json::array();
  for (const auto& f : features) {
    j["features"].push_back({{"feature", f.feature},
                             {"test", f.test},
                             {"statistic", finite_or_null(f.statistic)},
                             {"p", f.p},
                             {"alpha_corrected", f.alpha_corrected},
                             {"flagged", f.flagged},
                             {"n_reference", f.n_reference},
                             {"n_current", f.n_current}});
  }
  j["skipped"] = skipped;
  j["label"] = {{"statistic", label.statistic},
                {"p", label.p},
                {"observed_proportions", label.observed_proportions},
                {"expected_proportions", label.expected_proportions},
                {"flagged", label_flagged}};
  if (confidence) {
    j["confidence"] = {{"statistic", confidence->statistic},
                       {"p", confidence->p},
                       {"flagged", confidence_flagged}};
  } else {
    j["confidence"] = nullptr;
  }
  j["kde"] = nlohmann::json::array();
  for (const auto& k : kde) {
    j["kde"].push_back({{"feature", k.feature},
                        {"grid", vec_json(k.grid)},
                        {"reference", vec_json(k.reference)},
                        {"current", vec_json(k.current)}});
  }
  return j;
}

}  // namespace vdpt
