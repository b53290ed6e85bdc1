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

// Classification metrics, stratified k-fold cross-validation of the full
// pipeline and seeded random hyperparameter search ranked by LR+.

#pragma once

#include <array>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "vdpt/pipeline.hpp"
#include "vdpt/stats.hpp"

namespace vdpt {

struct MetricSet {
  double threshold = 0.5;
  Index tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0;    // 0 when nothing is predicted positive
  double sensitivity = 0.0;  // 0 when there are no positives
  double specificity = 0.0;  // 0 when there are no negatives
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double lr_plus = 0.0;  // +infinity when specificity is 1 and sensitivity > 0
  std::optional<double> roc_auc;  // absent for single-class labels
  std::optional<double> prc_auc;

  // Value by column name ("roc_auc", "lr_plus", ...); nullopt when absent.
  std::optional<double> get(const std::string& name) const;
  static const std::vector<std::string>& names();

  nlohmann::json to_json() const;
};

// Mann-Whitney form: P(score_pos > score_neg) with ties counted 1/2.
// Throws kSingleClass when either class is absent.
double roc_auc(const Vector& scores, const Labels& labels);

// Step-wise area under precision-recall: sum over distinct thresholds of
// (recall_k - recall_{k-1}) * precision_k. Throws kSingleClass.
double prc_auc(const Vector& scores, const Labels& labels);

// Scores must lie in [0,1] (kInvalidArgument).
MetricSet metrics(const Vector& scores, const Labels& labels, double threshold = 0.5);

// Test-fold index sets of a stratified k-fold split; positives and negatives
// are shuffled separately and dealt round-robin. Throws kTooFewPerClass when
// either class has fewer than k members.
std::vector<std::vector<Index>> stratified_kfold(const Labels& labels, int k, std::uint64_t seed);

struct MetricSummary {
  double mean = 0.0;
  double std_error = 0.0;  // sample sd / sqrt(count)
  int count = 0;
};

struct CvResult {
  ModelConfig config;
  int k = 0;
  std::vector<MetricSet> folds;
  // Standardization fitted inside each training fold, kept for auditing.
  std::vector<StandardizationStats> fold_standardization;
  std::map<std::string, MetricSummary> summary;
  double seconds = 0.0;

  nlohmann::json to_json() const;
};

// Every fold refits the whole pipeline on its training rows only. Fold f
// trains with seed split(seed, f).
CvResult cross_validate(const Cohort& cohort, const ModelConfig& config, int k, std::uint64_t seed);

// Paired two-sided t-test of one metric across matching folds.
stats::TTest paired_metric_test(const CvResult& a, const CvResult& b, const std::string& metric);

struct SearchSpace {
  std::array<std::pair<int, int>, 3> widths{{{16, 256}, {16, 256}, {16, 128}}};
  std::pair<double, double> lr{1e-3, 1e-1};            // log-uniform
  std::pair<double, double> weight_decay{1e-4, 1e-1};  // log-uniform
  std::pair<double, double> momentum{0.0, 0.9};
  std::pair<int, int> epochs{10, 150};
  std::vector<int> batch_sizes{0, 256, 1000};  // 0 = full batch
  std::vector<Imbalance> imbalance{Imbalance::pos_weight(), Imbalance::undersample(),
                                   Imbalance::smote(5)};

  void validate() const;
  ModelConfig sample(const ModelConfig& base, SeededRng& rng) const;

  nlohmann::json to_json() const;
  static SearchSpace from_json(const nlohmann::json& j);
};

struct LeaderboardEntry {
  int trial = 0;
  ModelConfig config;
  bool failed = false;
  std::string error;
  double lr_plus = 0.0;  // mean over folds; infinite if any fold is
  double sensitivity = 0.0;
  std::optional<double> roc_auc;
  std::optional<CvResult> cv;
};

// Ranking: tiers first, then LR+ descending, then trial index.
//   3: infinite LR+ with sensitivity >= 0.5
//   2: finite LR+ with sensitivity >= 0.5
//   1: infinite LR+ with sensitivity < 0.5
//   0: finite LR+ with sensitivity < 0.5
//  -1: failed
int rank_tier(const LeaderboardEntry& e);
bool ranks_before(const LeaderboardEntry& a, const LeaderboardEntry& b);

struct SearchResult {
  std::vector<LeaderboardEntry> leaderboard;  // ranked
  std::optional<ModelConfig> best;            // absent if every trial failed

  nlohmann::json to_json() const;
};

// Trial t samples its configuration from split(seed, t); all trials share
// the fold assignment of `seed`.
SearchResult random_search(const Cohort& cohort, const ModelConfig& base, const SearchSpace& space,
                           int budget, int k, std::uint64_t seed);

}  // namespace vdpt
