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

// Dataset ingestion and preprocessing: CSV I/O, the synthetic ICU cohort
// generator, chained-equation imputation, feature selection, class
// rebalancing and standardization.

#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vdpt/numeric.hpp"

namespace vdpt {

using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Labels = Eigen::VectorXi;

inline constexpr const char* kLabelColumn = "outcome";

struct StandardizationStats {
  Vector mean;
  Vector std;  // 1.0 sentinel for constant features
};

// Feature matrix with a parallel missingness mask and binary labels
// (1 = mortality). Missing cells hold NaN in `x`.
struct Cohort {
  std::vector<std::string> feature_names;
  Matrix x;
  BoolMatrix missing;
  Labels y;
  std::optional<StandardizationStats> standardization;

  Index rows() const { return x.rows(); }
  Index cols() const { return x.cols(); }
  Index positives() const { return y.sum(); }
  Index negatives() const { return rows() - positives(); }
  bool has_missing() const { return missing.any(); }

  // Throws kSchemaMismatch for unknown names.
  Index feature_index(const std::string& name) const;

  Cohort subset(std::span<const Index> row_indices) const;
  // Same rows, columns reordered/selected by name.
  Cohort select(const std::vector<std::string>& names) const;

  // Builds a fully observed cohort.
  static Cohort from_dense(std::vector<std::string> names, Matrix x, Labels y);
};

// Row-wise concatenation; schemas must match.
Cohort concat(const Cohort& a, const Cohort& b);

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

// Header row of feature names plus `label_column`; empty cells are missing.
// Throws kParseError (with row/column), kMissingLabel or kInvalidLabel.
Cohort read_csv(std::istream& in, const std::string& label_column = kLabelColumn);
Cohort load_csv(const std::filesystem::path& path,
                const std::string& label_column = kLabelColumn);

// Shortest round-trip decimal formatting, so write -> load is exact.
void write_csv(std::ostream& out, const Cohort& cohort);
void save_csv(const std::filesystem::path& path, const Cohort& cohort);

// ---------------------------------------------------------------------------
// Synthetic cohort generator
// ---------------------------------------------------------------------------

// Ground truth for the generator. The shipped values live in
// config/synthetic_truth.json and are compiled in as default_truth().
struct GeneratorTruth {
  struct Feature {
    std::string name;
    std::string kind;  // normal | lognormal | binary | gcs
    double location = 0.0;
    double scale = 1.0;
    double rate = 0.5;                // binary
    std::vector<double> thresholds;   // gcs ordinal cut points on the latent
    std::optional<double> min, max;   // optional clipping
  };
  std::vector<Feature> features;
  double gcs_loading = 0.8;
  std::map<std::string, double> log_odds;  // feature name or "gcs_sum"
  std::vector<std::string> always_observed;

  static GeneratorTruth from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::vector<std::string> feature_names() const;
};

const GeneratorTruth& default_truth();

// Per-feature mean shifts, in standard deviations of the feature's latent
// normal, plus an optional prevalence override.
struct ShiftSpec {
  std::map<std::string, double> mean_shift;
  std::optional<double> prevalence;
};

Cohort generate_synthetic_cohort(Index n, double prevalence, const ShiftSpec& shift,
                                 double missing_rate, SeededRng& rng,
                                 const GeneratorTruth& truth = default_truth());

// Ground-truth log-odds (without intercept) for fully observed rows.
Vector ground_truth_log_odds(const Cohort& cohort, const GeneratorTruth& truth = default_truth());

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

// Single-imputation chained equations: mean-fill, then `rounds` passes of
// OLS regression of each feature on all others, visiting features in
// descending training missingness.
struct ImputationModel {
  std::vector<std::string> feature_names;
  Vector means;
  std::vector<Index> visit_order;
  std::vector<Vector> coefficients;  // per feature: [intercept, others in column order]
  int rounds = 10;

  nlohmann::json to_json() const;
  static ImputationModel from_json(const nlohmann::json& j);
};

struct ImputationFit {
  ImputationModel model;
  Cohort imputed;
};

ImputationFit fit_imputer(const Cohort& cohort, int rounds = 10);
Cohort impute_chained(const Cohort& cohort, int rounds = 10);
Cohort apply_imputer(const ImputationModel& model, const Cohort& cohort);

// ---------------------------------------------------------------------------
// Feature selection
// ---------------------------------------------------------------------------

struct FeatureReport {
  struct CorrelationDrop {
    std::string dropped;
    std::string kept;
    double r = 0.0;
  };
  std::vector<CorrelationDrop> dropped_by_correlation;
  std::vector<std::pair<std::string, double>> dropped_by_missingness;
  std::vector<std::pair<std::string, double>> mi_ranking;  // nats, descending
  std::vector<std::string> selected;

  nlohmann::json to_json() const;
};

// Correlation prune -> missingness filter -> mutual-information top-k.
// Ties are broken by feature name so the selected set does not depend on
// column order.
FeatureReport select_features(const Cohort& cohort, double corr_threshold = 0.9,
                              double missing_threshold = 0.5, int top_k = 20);

// Plug-in mutual information (nats) between a feature binned into
// `bins` equal-frequency bins and the binary label; missing rows skipped.
double mutual_information(const Cohort& cohort, Index feature, int bins = 10);

// ---------------------------------------------------------------------------
// Class imbalance
// ---------------------------------------------------------------------------

struct Imbalance {
  enum class Kind { kPosWeight, kUndersample, kSmote };
  Kind kind = Kind::kPosWeight;
  int smote_k = 5;

  static Imbalance pos_weight() { return {Kind::kPosWeight, 5}; }
  static Imbalance undersample() { return {Kind::kUndersample, 5}; }
  static Imbalance smote(int k) { return {Kind::kSmote, k}; }

  std::string name() const;
  static Imbalance parse(const std::string& text);  // "pos_weight", "undersample", "smote:5"
};

struct RebalanceResult {
  Cohort cohort;
  double pos_weight = 1.0;
};

RebalanceResult rebalance(const Cohort& cohort, const Imbalance& strategy, SeededRng& rng);

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

// Population (ddof = 0) statistics over observed cells.
StandardizationStats fit_standardization(const Cohort& cohort);

// Fits on `cohort` and returns it standardized with the stats attached.
Cohort standardize_fit(const Cohort& cohort);

// Applies stored stats only; throws kNotFitted when `stats` is empty.
Cohort standardize_apply(const Cohort& cohort, const std::optional<StandardizationStats>& stats);

nlohmann::json to_json(const StandardizationStats& stats);
StandardizationStats standardization_from_json(const nlohmann::json& j);

}  // namespace vdpt
