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

#include "vdpt/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

namespace vdpt {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void check_scores(const Vector& scores, const Labels& labels) {
  if (scores.size() != labels.size() || scores.size() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "metrics: scores and labels must be non-empty and aligned");
  }
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) != 0 && labels(i) != 1) throw Error(ErrorCode::kInvalidLabel, "metrics: labels must be 0/1");
  }
}

void require_both_classes(const Labels& labels, const char* what) {
  const Index pos = labels.sum();
  if (pos == 0 || pos == labels.size()) {
    throw Error(ErrorCode::kSingleClass, std::string(what) + ": both classes required");
  }
}

// Indices sorted by descending score; stable, so ties keep input order.
std::vector<Index> descending(const Vector& scores) {
  std::vector<Index> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return scores(a) > scores(b); });
  return order;
}

}  // namespace

double roc_auc(const Vector& scores, const Labels& labels) {
  check_scores(scores, labels);
  require_both_classes(labels, "roc_auc");
  // Midranks make every tied pair contribute exactly one half.
  const Vector ranks = fractional_ranks(scores);
  double rank_sum = 0.0;
  for (Index i = 0; i < labels.size(); ++i) {
    if (labels(i) == 1) rank_sum += ranks(i);
  }
  const auto pos = static_cast<double>(labels.sum());
  const double neg = static_cast<double>(labels.size()) - pos;
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double prc_auc(const Vector& scores, const Labels& labels) {
  check_scores(scores, labels);
  require_both_classes(labels, "prc_auc");
  const std::vector<Index> order = descending(scores);
  const auto pos = static_cast<double>(labels.sum());
  double tp = 0.0, fp = 0.0, prev_recall = 0.0, area = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores(order[i]);
    for (; i < order.size() && scores(order[i]) == s; ++i) (labels(order[i]) == 1 ? tp : fp) += 1.0;
    const double recall = tp / pos;
    area += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return area;
}

MetricSet metrics(const Vector& scores, const Labels& labels, double threshold) {
  check_scores(scores, labels);
  if (!((scores.array() >= 0.0) && (scores.array() <= 1.0)).all()) {
    throw Error(ErrorCode::kInvalidArgument, "metrics: scores must lie in [0, 1]");
  }
  MetricSet m;
  m.threshold = threshold;
  for (Index i = 0; i < labels.size(); ++i) {
    const bool predicted = scores(i) >= threshold;
    if (labels(i) == 1) {
      ++(predicted ? m.tp : m.fn);
    } else {
      ++(predicted ? m.fp : m.tn);
    }
  }
  auto ratio = [](Index a, Index b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
  m.precision = ratio(m.tp, m.tp + m.fp);
  m.sensitivity = ratio(m.tp, m.tp + m.fn);
  m.specificity = ratio(m.tn, m.tn + m.fp);
  m.accuracy = ratio(m.tp + m.tn, labels.size());
  m.balanced_accuracy = (m.sensitivity + m.specificity) / 2.0;
  if (m.specificity < 1.0) {
    m.lr_plus = m.sensitivity / (1.0 - m.specificity);
  } else {
    m.lr_plus = m.sensitivity > 0.0 ? kInf : 0.0;
  }
  const Index pos = labels.sum();
  if (pos > 0 && pos < labels.size()) {
    m.roc_auc = roc_auc(scores, labels);
    m.prc_auc = prc_auc(scores, labels);
  }
  return m;
}

const std::vector<std::string>& MetricSet::names() {
  static const std::vector<std::string> n{"precision", "sensitivity",       "specificity", "roc_auc",
                                          "prc_auc",   "balanced_accuracy", "lr_plus",     "accuracy"};
  return n;
}

std::optional<double> MetricSet::get(const std::string& name) const {
  if (name == "precision") return precision;
  if (name == "sensitivity") return sensitivity;
  if (name == "specificity") return specificity;
  if (name == "roc_auc") return roc_auc;
  if (name == "prc_auc") return prc_auc;
  if (name == "balanced_accuracy") return balanced_accuracy;
  if (name == "lr_plus") return lr_plus;
  if (name == "accuracy") return accuracy;
  throw Error(ErrorCode::kInvalidArgument, "unknown metric '" + name + "'");
}

namespace {

// JSON cannot carry infinity; an unbounded LR+ is written as null together
// with an explicit flag.
void put_lr_plus(nlohmann::json& j, double v) {
  j["lr_plus"] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json();
  j["lr_plus_infinite"] = std::isinf(v);
}

nlohmann::json optional_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

}  // namespace

nlohmann::json MetricSet::to_json() const {
  nlohmann::json j{{"threshold", threshold},
                   {"tp", tp},
                   {"fp", fp},
                   {"tn", tn},
                   {"fn", fn},
                   {"precision", precision},
                   {"sensitivity", sensitivity},
                   {"specificity", specificity},
                   {"accuracy", accuracy},
                   {"balanced_accuracy", balanced_accuracy},
                   {"roc_auc", optional_json(roc_auc)},
                   {"prc_auc", optional_json(prc_auc)}};
  put_lr_plus(j, lr_plus);
  return j;
}

// ---------------------------------------------------------------------------
// Cross-validation
// ---------------------------------------------------------------------------

std::vector<std::vector<Index>> stratified_kfold(const Labels& labels, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::kInvalidArgument, "stratified_kfold: k must be >= 2");
  std::vector<Index> pos, neg;
  for (Index i = 0; i < labels.size(); ++i) (labels(i) == 1 ? pos : neg).push_back(i);
  if (pos.size() < static_cast<std::size_t>(k) || neg.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorCode::kTooFewPerClass, "stratified_kfold: each class needs at least k = " +
                                                std::to_string(k) + " members (have " +
                                                std::to_string(pos.size()) + " positive, " +
                                                std::to_string(neg.size()) + " negative)");
  }
  SeededRng rng(seed);
  SeededRng pos_rng = rng.split(1), neg_rng = rng.split(2);
  pos_rng.shuffle(pos);
  neg_rng.shuffle(neg);
  std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
  std::size_t next = 0;
  // Negatives continue the rotation where positives stopped, which keeps
  // fold sizes within one of each other as well.
  for (Index i : pos) folds[next++ % folds.size()].push_back(i);
  for (Index i : neg) folds[next++ % folds.size()].push_back(i);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

namespace {

std::map<std::string, MetricSummary> summarize(const std::vector<MetricSet>& folds) {
  std::map<std::string, MetricSummary> out;
  for (const std::string& name : MetricSet::names()) {
    std::vector<double> values;
    for (const auto& f : folds) {
      if (auto v = f.get(name)) values.push_back(*v);
    }
    MetricSummary s;
    s.count = static_cast<int>(values.size());
    if (values.empty()) {
      out[name] = s;
      continue;
    }
    if (std::any_of(values.begin(), values.end(), [](double v) { return std::isinf(v); })) {
      s.mean = kInf;
      s.std_error = 0.0;
    } else {
      s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
      if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std_error = std::sqrt(ss / static_cast<double>(values.size() - 1)) /
                      std::sqrt(static_cast<double>(values.size()));
      }
    }
    out[name] = s;
  }
  return out;
}

}  // namespace

CvResult cross_validate(const Cohort& cohort, const ModelConfig& config, int k, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  const auto folds = stratified_kfold(cohort.y, k, seed);
  CvResult out;
  out.config = config;
  out.k = k;
  const SeededRng master(seed);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<bool> in_test(static_cast<std::size_t>(cohort.rows()), false);
    for (Index i : folds[f]) in_test[static_cast<std::size_t>(i)] = true;
    std::vector<Index> train_rows;
    for (Index i = 0; i < cohort.rows(); ++i) {
      if (!in_test[static_cast<std::size_t>(i)]) train_rows.push_back(i);
    }
    const std::uint64_t fold_seed = master.split(0x100 + f).next_u64();
    const ModelArtifact model = fit_model(cohort.subset(train_rows), config, fold_seed);
    out.fold_standardization.push_back(model.preprocessor.standardization);
    const Cohort test = cohort.subset(folds[f]);
    out.folds.push_back(metrics(model.probabilities(test), test.y));
  }
  out.summary = summarize(out.folds);
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

nlohmann::json CvResult::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.cv/1";
  j["config"] = config.to_json();
  j["k"] = k;
  j["seconds"] = seconds;
  j["folds"] = nlohmann::json::array();
  for (const auto& f : folds) j["folds"].push_back(f.to_json());
  for (const auto& [name, s] : summary) {
    nlohmann::json e{{"std_error", s.std_error}, {"count", s.count}};
    e["mean"] = std::isfinite(s.mean) ? nlohmann::json(s.mean) : nlohmann::json();
    if (std::isinf(s.mean)) e["infinite"] = true;
    j["summary"][name] = e;
  }
  return j;
}

stats::TTest paired_metric_test(const CvResult& a, const CvResult& b, const std::string& metric) {
  if (a.folds.size() != b.folds.size() || a.folds.size() < 2) {
    throw Error(ErrorCode::kShapeMismatch, "paired_metric_test: need matching folds (>= 2)");
  }
  std::vector<double> va, vb;
  for (std::size_t f = 0; f < a.folds.size(); ++f) {
    const auto x = a.folds[f].get(metric);
    const auto y = b.folds[f].get(metric);
    if (!x || !y || !std::isfinite(*x) || !std::isfinite(*y)) {
      throw Error(ErrorCode::kDegenerateInput, "paired_metric_test: metric '" + metric +
                                                   "' missing or infinite in fold " + std::to_string(f));
    }
    va.push_back(*x);
    vb.push_back(*y);
  }
  return stats::paired_t_test(va, vb);
}

// ---------------------------------------------------------------------------
// Random search
// ---------------------------------------------------------------------------

void SearchSpace::validate() const {
  for (const auto& [lo, hi] : widths) {
    if (lo < 1 || hi < lo) throw Error(ErrorCode::kInvalidArgument, "search space: width range");
  }
  if (!(lr.first > 0.0 && lr.second >= lr.first) ||
      !(weight_decay.first > 0.0 && weight_decay.second >= weight_decay.first)) {
    throw Error(ErrorCode::kInvalidArgument, "search space: log-uniform ranges need 0 < lo <= hi");
  }
  if (!(momentum.first >= 0.0 && momentum.second >= momentum.first && momentum.second < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "search space: momentum range within [0, 1)");
  }
  if (epochs.first < 1 || epochs.second < epochs.first) {
    throw Error(ErrorCode::kInvalidArgument, "search space: epochs range");
  }
  if (batch_sizes.empty() || imbalance.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "search space: batch sizes and imbalance options non-empty");
  }
}

ModelConfig SearchSpace::sample(const ModelConfig& base, SeededRng& rng) const {
  ModelConfig c = base;
  TrainConfig& t = c.base();
  auto int_in = [&](std::pair<int, int> r) {
    return r.first + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(r.second - r.first + 1)));
  };
  auto log_uniform = [&](std::pair<double, double> r) {
    return std::exp(rng.uniform(std::log(r.first), std::log(r.second)));
  };
  t.hidden.clear();
  for (const auto& w : widths) t.hidden.push_back(int_in(w));
  t.lr = log_uniform(lr);
  t.weight_decay = log_uniform(weight_decay);
  t.momentum = rng.uniform(momentum.first, momentum.second);
  t.epochs = int_in(epochs);
  t.batch_size = batch_sizes[rng.uniform_index(batch_sizes.size())];
  t.imbalance = imbalance[rng.uniform_index(imbalance.size())];
  t.pos_weight = 0.0;  // resolved by the imbalance strategy
  return c;
}

nlohmann::json SearchSpace::to_json() const {
  nlohmann::json j;
  for (const auto& [lo, hi] : widths) j["widths"].push_back({lo, hi});
  j["lr"] = {lr.first, lr.second};
  j["weight_decay"] = {weight_decay.first, weight_decay.second};
  j["momentum"] = {momentum.first, momentum.second};
  j["epochs"] = {epochs.first, epochs.second};
  j["batch_sizes"] = batch_sizes;
  for (const auto& im : imbalance) j["imbalance"].push_back(im.name());
  return j;
}

SearchSpace SearchSpace::from_json(const nlohmann::json& j) {
  SearchSpace s;
  try {
    if (j.contains("widths")) {
      const auto w = j["widths"].get<std::vector<std::pair<int, int>>>();
      if (w.size() != 3) throw Error(ErrorCode::kInvalidArgument, "search space: three width ranges");
      std::copy(w.begin(), w.end(), s.widths.begin());
    }
    if (j.contains("lr")) s.lr = j["lr"].get<std::pair<double, double>>();
    if (j.contains("weight_decay")) s.weight_decay = j["weight_decay"].get<std::pair<double, double>>();
    if (j.contains("momentum")) s.momentum = j["momentum"].get<std::pair<double, double>>();
    if (j.contains("epochs")) s.epochs = j["epochs"].get<std::pair<int, int>>();
    if (j.contains("batch_sizes")) s.batch_sizes = j["batch_sizes"].get<std::vector<int>>();
    if (j.contains("imbalance")) {
      s.imbalance.clear();
      for (const auto& e : j["imbalance"]) s.imbalance.push_back(Imbalance::parse(e.get<std::string>()));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("search space: ") + e.what());
  }
  s.validate();
  return s;
}

int rank_tier(const LeaderboardEntry& e) {
  if (e.failed) return -1;
  const bool inf = std::isinf(e.lr_plus);
  const bool sensitive = e.sensitivity >= 0.5;
  if (sensitive) return inf ? 3 : 2;
  return inf ? 1 : 0;
}

bool ranks_before(const LeaderboardEntry& a, const LeaderboardEntry& b) {
  const int ta = rank_tier(a), tb = rank_tier(b);
  if (ta != tb) return ta > tb;
  if (ta >= 0 && a.lr_plus != b.lr_plus) return a.lr_plus > b.lr_plus;
  return a.trial < b.trial;
}

SearchResult random_search(const Cohort& cohort, const ModelConfig& base, const SearchSpace& space,
                           int budget, int k, std::uint64_t seed) {
  if (budget < 1) throw Error(ErrorCode::kInvalidArgument, "random_search: budget must be >= 1");
  space.validate();
  SearchResult out;
  const SeededRng master(seed);
  for (int trial = 0; trial < budget; ++trial) {
    SeededRng rng = master.split(static_cast<std::uint64_t>(trial));
    LeaderboardEntry e;
    e.trial = trial;
    e.config = space.sample(base, rng);
    e.config.base().seed = rng.next_u64();
    try {
      CvResult cv = cross_validate(cohort, e.config, k, seed);
      e.lr_plus = cv.summary.at("lr_plus").mean;
      e.sensitivity = cv.summary.at("sensitivity").mean;
      if (cv.summary.at("roc_auc").count > 0) e.roc_auc = cv.summary.at("roc_auc").mean;
      e.cv = std::move(cv);
    } catch (const Error& err) {
      e.failed = true;
      e.error = std::string(error_code_name(err.code())) + ": " + err.what();
    }
    out.leaderboard.push_back(std::move(e));
  }
  std::stable_sort(out.leaderboard.begin(), out.leaderboard.end(), ranks_before);
  if (!out.leaderboard.front().failed) out.best = out.leaderboard.front().config;
  return out;
}

nlohmann::json SearchResult::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.leaderboard/1";
  j["entries"] = nlohmann::json::array();
  for (const auto& e : leaderboard) {
    nlohmann::json r{{"trial", e.trial}, {"config", e.config.to_json()}, {"failed", e.failed},
                     {"tier", rank_tier(e)}};
    if (e.failed) {
      r["error"] = e.error;
    } else {
      put_lr_plus(r, e.lr_plus);
      r["sensitivity"] = e.sensitivity;
      r["roc_auc"] = optional_json(e.roc_auc);
      r["folds"] = nlohmann::json::array();
      for (const auto& f : e.cv->folds) r["folds"].push_back(f.to_json());
    }
    j["entries"].push_back(std::move(r));
  }
  j["best"] = best ? best->to_json() : nlohmann::json();
  return j;
}

}  // namespace vdpt
