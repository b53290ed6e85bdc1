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

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "oracles.hpp"
#include "vdpt/drift.hpp"

namespace vdpt {
namespace {

// sup |ECDF_a - ECDF_b| by brute force over every pooled value.
double ecdf_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double d = 0.0;
  std::vector<double> pooled = a;
  pooled.insert(pooled.end(), b.begin(), b.end());
  for (double t : pooled) {
    double fa = 0.0, fb = 0.0;
    for (double v : a) fa += v <= t;
    for (double v : b) fb += v <= t;
    d = std::max(d, std::abs(fa / static_cast<double>(a.size()) - fb / static_cast<double>(b.size())));
  }
  return d;
}

double chi2_tail_by_quadrature(double x, int dof) {
  const double k = 0.5 * dof;
  auto density = [k](double t) {
    return std::exp((k - 1.0) * std::log(t) - 0.5 * t - k * std::log(2.0) - std::lgamma(k));
  };
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      density, x, std::numeric_limits<double>::infinity(), 15, 1e-13);
}

TEST(Ks2Sample, IdenticalAndDisjoint) {
  const std::vector<double> a{0.3, 1.2, 2.2, 5.0, 7.5, 9.0};
  const KsResult same = ks_2sample(a, a);
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_EQ(same.p, 1.0);
  const std::vector<double> b{10.0, 11.0, 12.0, 13.0, 14.0};
  EXPECT_EQ(ks_2sample(a, b).statistic, 1.0);
}

TEST(Ks2Sample, HandCaseAndMinimumSize) {
  // Interleaved samples: the ECDFs differ by one step everywhere.
  const std::vector<double> a{1, 2, 3, 4, 5};
  const std::vector<double> b{1.5, 2.5, 3.5, 4.5, 5.5};
  EXPECT_NEAR(ks_2sample(a, b).statistic, 0.2, 1e-15);
  EXPECT_NEAR(ecdf_distance({1, 2, 3}, {1.5, 2.5, 3.5}), 1.0 / 3.0, 1e-15);
  try {
    ks_2sample(std::vector<double>{1, 2, 3}, std::vector<double>{1.5, 2.5, 3.5});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewSamples);
  }
}

TEST(Ks2Sample, MatchesExhaustiveEcdfWithTies) {
  SeededRng rng(1);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> a, b;
    const auto na = 5 + rng.uniform_index(30);
    const auto nb = 5 + rng.uniform_index(30);
    for (std::size_t i = 0; i < na; ++i) a.push_back(std::round(rng.normal() * 3.0));
    for (std::size_t i = 0; i < nb; ++i) b.push_back(std::round(rng.normal() * 3.0 + 1.0));
    EXPECT_NEAR(ks_2sample(a, b).statistic, ecdf_distance(a, b), 1e-15);
  }
}

TEST(Ks2Sample, InvariantUnderMonotoneTransform) {
  SeededRng rng(2);
  std::vector<double> a, b, ta, tb;
  for (int i = 0; i < 40; ++i) a.push_back(rng.normal());
  for (int i = 0; i < 55; ++i) b.push_back(rng.normal() + 0.4);
  for (double v : a) ta.push_back(std::exp(2.0 * v) + 3.0);
  for (double v : b) tb.push_back(std::exp(2.0 * v) + 3.0);
  EXPECT_EQ(ks_2sample(a, b).statistic, ks_2sample(ta, tb).statistic);
}

TEST(DriftPValues, TwentyCannedCasesMatchIndependentOracles) {
  // Ten KS cases on seeded samples against the brute-force ECDF distance and
  // the dual-series Kolmogorov CDF; ten chi-square cases against direct
  // quadrature of the density.
  struct KsCase { std::size_t n; std::size_t m; double shift; };
  const KsCase ks_cases[] = {{500, 500, 0.1}, {200, 300, 0.2},  {50, 50, 0.5},   {120, 80, 0.3},
                             {30, 40, 0.8},   {1000, 700, 0.05}, {400, 100, 0.25}, {60, 90, 0.4},
                             {20, 25, 1.0},   {2000, 2000, 0.03}};
  SeededRng rng(20);
  for (const auto& c : ks_cases) {
    std::vector<double> a, b;
    for (std::size_t i = 0; i < c.n; ++i) a.push_back(rng.normal());
    for (std::size_t i = 0; i < c.m; ++i) b.push_back(rng.normal() + c.shift);
    const double d = ecdf_distance(a, b);
    const double n = static_cast<double>(c.n), m = static_cast<double>(c.m);
    const double lambda = std::sqrt(n * m / (n + m)) * d;
    const KsResult r = ks_2sample(a, b);
    EXPECT_NEAR(r.p, 1.0 - oracle::kolmogorov_cdf_dual(lambda), 1e-3) << c.n << " " << c.m;
  }
  struct ChiCase { std::vector<double> observed; std::vector<double> expected; };
  const ChiCase chi_cases[] = {
      {{90, 10}, {0.9, 0.1}},   {{85, 15}, {0.9, 0.1}},     {{50, 50}, {0.9, 0.1}},
      {{4, 17}, {0.92, 0.08}},  {{480, 20}, {0.95, 0.05}},  {{30, 10}, {0.5, 0.5}},
      {{12, 8}, {0.7, 0.3}},    {{900, 120}, {0.9, 0.1}},   {{20, 30, 50}, {0.2, 0.3, 0.5}},
      {{10, 40, 50}, {0.3, 0.3, 0.4}}};
  for (const auto& c : chi_cases) {
    const Chi2Result r = chi2_label_test(c.observed, c.expected);
    const int dof = static_cast<int>(c.observed.size()) - 1;
    const double ref = r.statistic == 0.0 ? 1.0 : chi2_tail_by_quadrature(r.statistic, dof);
    EXPECT_NEAR(r.p, ref, 1e-3) << r.statistic;
  }
}

TEST(Chi2LabelTest, ExactProportionsAndHandCase) {
  const Chi2Result exact = chi2_label_test(std::vector<double>{90, 10}, std::vector<double>{0.9, 0.1});
  EXPECT_EQ(exact.statistic, 0.0);
  EXPECT_EQ(exact.p, 1.0);
  const Chi2Result hand = chi2_label_test(std::vector<double>{50, 50}, std::vector<double>{0.9, 0.1});
  EXPECT_NEAR(hand.statistic, 1600.0 / 90.0 + 1600.0 / 10.0, 1e-12);
  EXPECT_NEAR(hand.statistic, 177.78, 5e-3);
  EXPECT_NEAR(hand.observed_proportions[1], 0.5, 1e-15);
}

TEST(Chi2LabelTest, SmallHighPrevalenceCohortIsFlagged) {
  // 21 outcomes, about 80% positive, against 8% training prevalence.
  const Chi2Result r = chi2_label_test(std::vector<double>{4, 17}, std::vector<double>{0.92, 0.08});
  EXPECT_LT(r.p, 0.01);
}

TEST(Chi2LabelTest, Errors) {
  auto code = [](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::kInvalidArgument;  // sentinel: did not throw
  };
  EXPECT_EQ(code([] { chi2_label_test(std::vector<double>{5, 5}, std::vector<double>{1.0, 0.0}); }),
            ErrorCode::kZeroExpected);
  EXPECT_EQ(code([] { chi2_label_test(std::vector<double>{2, 2}, std::vector<double>{0.5, 0.5}); }),
            ErrorCode::kTooFewSamples);
  EXPECT_THROW(chi2_label_test(std::vector<double>{5, 5}, std::vector<double>{0.5, 0.6}), Error);
}

Cohort synthetic(Index n, std::uint64_t seed, const ShiftSpec& shift = {}, double missing = 0.0) {
  SeededRng rng(seed);
  return generate_synthetic_cohort(n, 0.1, shift, missing, rng);
}

TEST(DriftReport, BootstrapResampleRarelyFlags) {
  const Cohort ref = synthetic(500, 3);
  SeededRng rng(4);
  int reps_with_flags = 0;
  Index tests = 0;
  const int reps = 40;
  for (int rep = 0; rep < reps; ++rep) {
    std::vector<Index> rows;
    for (Index i = 0; i < ref.rows(); ++i) rows.push_back(static_cast<Index>(rng.uniform_index(500)));
    const DriftReport r = drift_report(ref, ref.subset(rows));
    reps_with_flags += !r.flagged_features().empty();
    tests = static_cast<Index>(r.features.size());
  }
  EXPECT_EQ(tests, 12);
  // Family-wise rate alpha = 0.01; 40 reps give an expected 0.4 false alarms
  // (fewer, since a bootstrap copy is closer than an independent sample).
  EXPECT_LE(reps_with_flags, 2);
}

TEST(DriftReport, LactateShiftIsTheOnlyFlag) {
  const Cohort ref = synthetic(2000, 5);
  ShiftSpec shift;
  shift.mean_shift["lactate"] = 1.0;
  const Cohort cur = synthetic(500, 6, shift);
  const DriftReport r = drift_report(ref, cur);
  EXPECT_EQ(r.flagged_features(), std::vector<std::string>{"lactate"});
  ASSERT_EQ(r.kde.size(), 1u);
  EXPECT_EQ(r.kde[0].feature, "lactate");
  EXPECT_EQ(r.kde[0].grid.size(), 128);
  for (const auto& f : r.features) {
    EXPECT_NEAR(f.alpha_corrected, 0.01 / 12.0, 1e-15);
    EXPECT_EQ(f.flagged, f.p < f.alpha_corrected);
    EXPECT_GE(f.statistic, 0.0);
    if (f.test == "ks") {
      EXPECT_LE(f.statistic, 1.0);
    }
  }
}

TEST(DriftReport, BinaryFeatureUsesChiSquare) {
  const Cohort ref = synthetic(1000, 7);
  ShiftSpec shift;
  shift.mean_shift["mech_vent"] = -1.5;  // far more ventilated patients
  const DriftReport r = drift_report(ref, synthetic(400, 8, shift));
  for (const auto& f : r.features) {
    EXPECT_EQ(f.test, f.feature == "mech_vent" ? "chi2" : "ks");
  }
  EXPECT_EQ(r.flagged_features(), std::vector<std::string>{"mech_vent"});
}

TEST(DriftReport, LabelShiftAndMissingValues) {
  const Cohort ref = synthetic(1000, 9, {}, 0.2);
  SeededRng rng(10);
  const Cohort cur = generate_synthetic_cohort(100, 0.6, {}, 0.2, rng);
  const DriftReport r = drift_report(ref, cur);
  EXPECT_TRUE(r.label_flagged);
  EXPECT_LT(r.label.p, 0.01);
  for (const auto& f : r.features) EXPECT_LT(f.n_current, 100 + 1);
  EXPECT_FALSE(r.confidence.has_value());
}

TEST(DriftReport, SchemaAndSizeErrors) {
  const Cohort ref = synthetic(50, 11);
  try {
    drift_report(ref, ref.subset(std::vector<Index>{}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kTooFewSamples);
  }
  std::vector<std::string> fewer(ref.feature_names.begin(), ref.feature_names.end() - 1);
  try {
    drift_report(ref, ref.select(fewer));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSchemaMismatch);
  }
  // Column order does not matter.
  std::vector<std::string> reversed(ref.feature_names.rbegin(), ref.feature_names.rend());
  const DriftReport r = drift_report(ref, ref.select(reversed));
  EXPECT_TRUE(r.flagged_features().empty());
  EXPECT_EQ(r.features.front().feature, ref.feature_names.front());
}

TEST(DriftReport, ConfidenceShiftTest) {
  const Cohort ref = synthetic(300, 12);
  const StandardizationStats stats = fit_standardization(ref);
  SeededRng rng(13);
  ConfidenceModel model;
  model.params = init_vdp({12, 6, 2}, -3.0, rng);
  model.features = [stats](const Cohort& c) { return standardize_apply(c, stats).x; };
  model.cdf = fit_variance_cdf(model.params, model.features(ref));
  const DriftReport same = drift_report(ref, ref, &model);
  ASSERT_TRUE(same.confidence.has_value());
  EXPECT_EQ(same.confidence->statistic, 0.0);
  EXPECT_FALSE(same.confidence_flagged);
  // Far-out inputs inflate the predictive variance, so confidence drops.
  ShiftSpec shift;
  for (const auto& name : ref.feature_names) {
    if (name != "mech_vent") shift.mean_shift[name] = 3.0;
  }
  const DriftReport moved = drift_report(ref, synthetic(300, 14, shift), &model);
  EXPECT_TRUE(moved.confidence_flagged);
  const Vector conf = confidence_scores(model, ref);
  EXPECT_TRUE((conf.array() >= 0.0 && conf.array() <= 1.0).all());
}

TEST(DriftReport, JsonShape) {
  ShiftSpec shift;
  shift.mean_shift["albumin"] = -1.0;
  const DriftReport r = drift_report(synthetic(800, 15), synthetic(300, 16, shift));
  const nlohmann::json j = r.to_json();
  EXPECT_EQ(j["format"], "vdpt.drift/1");
  EXPECT_EQ(j["features"].size(), 12u);
  EXPECT_TRUE(j["confidence"].is_null());
  EXPECT_EQ(j["kde"].size(), r.kde.size());
  EXPECT_EQ(j["label"]["expected_proportions"].size(), 2u);
}

}  // namespace
}  // namespace vdpt
