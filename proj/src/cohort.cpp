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

#include "vdpt/cohort.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include <Eigen/QR>

namespace vdpt {

// Generated from config/synthetic_truth.json at configure time.
extern const char* const kEmbeddedSyntheticTruth;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string trim(std::string_view s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(trim(std::string_view(line).substr(start, pos - start)));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

std::optional<double> parse_double(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace

// ---------------------------------------------------------------------------
// Cohort
// ---------------------------------------------------------------------------

Index Cohort::feature_index(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) {
    throw Error(ErrorCode::kSchemaMismatch, "unknown feature '" + name + "'");
  }
  return static_cast<Index>(it - feature_names.begin());
}

Cohort Cohort::subset(std::span<const Index> row_indices) const {
  Cohort out;
  out.feature_names = feature_names;
  out.standardization = standardization;
  const auto n = static_cast<Index>(row_indices.size());
  out.x.resize(n, cols());
  out.missing.resize(n, cols());
  out.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Index r = row_indices[static_cast<std::size_t>(i)];
    out.x.row(i) = x.row(r);
    out.missing.row(i) = missing.row(r);
    out.y(i) = y(r);
  }
  return out;
}

Cohort Cohort::select(const std::vector<std::string>& names) const {
  Cohort out;
  out.feature_names = names;
  out.x.resize(rows(), static_cast<Index>(names.size()));
  out.missing.resize(rows(), static_cast<Index>(names.size()));
  out.y = y;
  StandardizationStats stats;
  if (standardization) {
    stats.mean.resize(static_cast<Index>(names.size()));
    stats.std.resize(static_cast<Index>(names.size()));
  }
  for (std::size_t j = 0; j < names.size(); ++j) {
    const Index src = feature_index(names[j]);
    const auto dst = static_cast<Index>(j);
    out.x.col(dst) = x.col(src);
    out.missing.col(dst) = missing.col(src);
    if (standardization) {
      stats.mean(dst) = standardization->mean(src);
      stats.std(dst) = standardization->std(src);
    }
  }
  if (standardization) out.standardization = stats;
  return out;
}

Cohort Cohort::from_dense(std::vector<std::string> names, Matrix x, Labels y) {
  if (static_cast<Index>(names.size()) != x.cols() || x.rows() != y.size()) {
    throw Error(ErrorCode::kShapeMismatch, "Cohort::from_dense: shape mismatch");
  }
  Cohort c;
  c.feature_names = std::move(names);
  c.missing = BoolMatrix::Constant(x.rows(), x.cols(), false);
  c.x = std::move(x);
  c.y = std::move(y);
  return c;
}

Cohort concat(const Cohort& a, const Cohort& b) {
  if (a.feature_names != b.feature_names) {
    throw Error(ErrorCode::kSchemaMismatch, "concat: feature names differ");
  }
  Cohort out;
  out.feature_names = a.feature_names;
  out.standardization = a.standardization;
  out.x.resize(a.rows() + b.rows(), a.cols());
  out.x << a.x, b.x;
  out.missing.resize(a.rows() + b.rows(), a.cols());
  out.missing << a.missing, b.missing;
  out.y.resize(a.rows() + b.rows());
  out.y << a.y, b.y;
  return out;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

Cohort read_csv(std::istream& in, const std::string& label_column) {
  std::string line;
  if (!std::getline(in, line)) {
    throw Error(ErrorCode::kParseError, "csv: missing header row");
  }
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);  // BOM
  const auto header = split_line(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw Error(ErrorCode::kParseError, "csv: header lacks label column '" + label_column + "'");
  }
  const auto label_pos = static_cast<std::size_t>(label_it - header.begin());

  Cohort c;
  for (std::size_t j = 0; j < header.size(); ++j) {
    if (j != label_pos) c.feature_names.push_back(header[j]);
  }
  const auto d = static_cast<Index>(c.feature_names.size());

  std::vector<double> values;
  std::vector<bool> mask;
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw Error(ErrorCode::kParseError, "csv: row " + std::to_string(row) + " has " +
                                              std::to_string(cells.size()) + " cells, expected " +
                                              std::to_string(header.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const std::string location = "row " + std::to_string(row) + ", column " +
                                   std::to_string(j + 1) + " (" + header[j] + ")";
      if (j == label_pos) {
        if (cells[j].empty()) {
          throw Error(ErrorCode::kMissingLabel, "csv: empty label at " + location);
        }
        const auto v = parse_double(cells[j]);
        if (!v || (*v != 0.0 && *v != 1.0)) {
          throw Error(ErrorCode::kInvalidLabel,
                      "csv: label '" + cells[j] + "' is not 0/1 at " + location);
        }
        labels.push_back(static_cast<int>(*v));
        continue;
      }
      if (cells[j].empty()) {
        values.push_back(kNaN);
        mask.push_back(true);
        continue;
      }
      const auto v = parse_double(cells[j]);
      if (!v) {
        throw Error(ErrorCode::kParseError,
                    "csv: '" + cells[j] + "' is not a number at " + location);
      }
      values.push_back(*v);
      mask.push_back(false);
    }
  }
  const auto n = static_cast<Index>(labels.size());
  c.x.resize(n, d);
  c.missing.resize(n, d);
  c.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    c.y(i) = labels[static_cast<std::size_t>(i)];
    for (Index j = 0; j < d; ++j) {
      const auto k = static_cast<std::size_t>(i * d + j);
      c.x(i, j) = values[k];
      c.missing(i, j) = mask[k];
    }
  }
  return c;
}

Cohort load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open '" + path.string() + "'");
  return read_csv(in, label_column);
}

void write_csv(std::ostream& out, const Cohort& cohort) {
  for (const auto& name : cohort.feature_names) out << name << ',';
  out << kLabelColumn << '\n';
  for (Index i = 0; i < cohort.rows(); ++i) {
    for (Index j = 0; j < cohort.cols(); ++j) {
      if (!cohort.missing(i, j)) out << format_double(cohort.x(i, j));
      out << ',';
    }
    out << cohort.y(i) << '\n';
  }
}

void save_csv(const std::filesystem::path& path, const Cohort& cohort) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write '" + path.string() + "'");
  write_csv(out, cohort);
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

GeneratorTruth GeneratorTruth::from_json(const nlohmann::json& j) {
  GeneratorTruth t;
  for (const auto& f : j.at("features")) {
    Feature feat;
    feat.name = f.at("name").get<std::string>();
    feat.kind = f.at("kind").get<std::string>();
    feat.location = f.value("location", 0.0);
    feat.scale = f.value("scale", 1.0);
    feat.rate = f.value("rate", 0.5);
    if (f.contains("thresholds")) feat.thresholds = f.at("thresholds").get<std::vector<double>>();
    if (f.contains("min")) feat.min = f.at("min").get<double>();
    if (f.contains("max")) feat.max = f.at("max").get<double>();
    if (feat.kind != "normal" && feat.kind != "lognormal" && feat.kind != "binary" &&
        feat.kind != "gcs") {
      throw Error(ErrorCode::kInvalidSpec, "synthetic truth: unknown kind '" + feat.kind + "'");
    }
    t.features.push_back(std::move(feat));
  }
  t.gcs_loading = j.value("gcs_loading", 0.8);
  t.log_odds = j.at("log_odds").get<std::map<std::string, double>>();
  t.always_observed = j.value("always_observed", std::vector<std::string>{});
  return t;
}

nlohmann::json GeneratorTruth::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.synthetic-truth/1";
  for (const auto& f : features) {
    nlohmann::json fj{{"name", f.name}, {"kind", f.kind}};
    if (f.kind == "binary") {
      fj["rate"] = f.rate;
    } else if (f.kind == "gcs") {
      fj["thresholds"] = f.thresholds;
    } else {
      fj["location"] = f.location;
      fj["scale"] = f.scale;
    }
    if (f.min) fj["min"] = *f.min;
    if (f.max) fj["max"] = *f.max;
    j["features"].push_back(fj);
  }
  j["gcs_loading"] = gcs_loading;
  j["log_odds"] = log_odds;
  j["always_observed"] = always_observed;
  return j;
}

std::vector<std::string> GeneratorTruth::feature_names() const {
  std::vector<std::string> out;
  for (const auto& f : features) out.push_back(f.name);
  return out;
}

const GeneratorTruth& default_truth() {
  static const GeneratorTruth truth =
      GeneratorTruth::from_json(nlohmann::json::parse(kEmbeddedSyntheticTruth));
  return truth;
}

namespace {

// Inverse standard normal CDF (Acklam's rational approximation, refined by one
// Newton step); only used to place the binary-feature threshold.
double normal_quantile(double p) {
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p > 1 - 0.02425) {
    const double q = std::sqrt(-2 * std::log(1 - p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * M_PI) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

}  // namespace

Vector ground_truth_log_odds(const Cohort& cohort, const GeneratorTruth& truth) {
  Vector eta = Vector::Zero(cohort.rows());
  for (const auto& [name, coef] : truth.log_odds) {
    if (name == "gcs_sum") {
      for (const auto& f : truth.features) {
        if (f.kind == "gcs") eta += coef * cohort.x.col(cohort.feature_index(f.name));
      }
    } else {
      eta += coef * cohort.x.col(cohort.feature_index(name));
    }
  }
  return eta;
}

Cohort generate_synthetic_cohort(Index n, double prevalence, const ShiftSpec& shift,
                                 double missing_rate, SeededRng& rng,
                                 const GeneratorTruth& truth) {
  const double target = shift.prevalence.value_or(prevalence);
  if (!(target > 0.0 && target < 1.0)) {
    throw Error(ErrorCode::kInvalidSpec, "generate_synthetic_cohort: prevalence must be in (0,1)");
  }
  if (!(missing_rate >= 0.0 && missing_rate <= 0.5)) {
    throw Error(ErrorCode::kInvalidSpec,
                "generate_synthetic_cohort: missing_rate must be in [0,0.5]");
  }
  if (n < 1) throw Error(ErrorCode::kInvalidSpec, "generate_synthetic_cohort: n must be >= 1");
  const auto names = truth.feature_names();
  for (const auto& [name, _] : shift.mean_shift) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      throw Error(ErrorCode::kInvalidSpec, "shift_spec: unknown feature '" + name + "'");
    }
  }
  const auto d = static_cast<Index>(truth.features.size());
  Matrix x(n, d);
  SeededRng feature_rng = rng.split(1);
  SeededRng label_rng = rng.split(2);
  SeededRng missing_rng = rng.split(3);
  // Advance the parent so successive calls with one rng give fresh cohorts.
  rng.next_u64();

  const double loading = truth.gcs_loading;
  const double unique = std::sqrt(1.0 - loading * loading);
  for (Index i = 0; i < n; ++i) {
    const double consciousness = feature_rng.normal();
    for (Index j = 0; j < d; ++j) {
      const auto& f = truth.features[static_cast<std::size_t>(j)];
      const auto it = shift.mean_shift.find(f.name);
      const double delta = it == shift.mean_shift.end() ? 0.0 : it->second;
      double latent = feature_rng.normal();
      double value = 0.0;
      if (f.kind == "gcs") {
        latent = loading * consciousness + unique * latent + delta;
        value = 1.0 + static_cast<double>(std::upper_bound(f.thresholds.begin(),
                                                           f.thresholds.end(), latent) -
                                          f.thresholds.begin());
      } else if (f.kind == "binary") {
        value = (latent + delta) < normal_quantile(f.rate) ? 1.0 : 0.0;
      } else if (f.kind == "lognormal") {
        value = std::exp(f.location + f.scale * (latent + delta));
      } else {
        value = f.location + f.scale * (latent + delta);
      }
      if (f.min) value = std::max(value, *f.min);
      if (f.max) value = std::min(value, *f.max);
      x(i, j) = value;
    }
  }

  Cohort c = Cohort::from_dense(names, std::move(x), Labels::Zero(n));
  const Vector eta = ground_truth_log_odds(c, truth);
  // Intercept by bisection so that the expected prevalence over this sample
  // equals the target.
  double lo = -60.0;
  double hi = 60.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    double mean = 0.0;
    for (Index i = 0; i < n; ++i) mean += sigmoid(eta(i) + mid);
    mean /= static_cast<double>(n);
    (mean > target ? hi : lo) = mid;
  }
  const double intercept = 0.5 * (lo + hi);
  for (Index i = 0; i < n; ++i) c.y(i) = label_rng.bernoulli(sigmoid(eta(i) + intercept)) ? 1 : 0;

  if (missing_rate > 0.0) {
    std::vector<bool> maskable(static_cast<std::size_t>(d), true);
    for (const auto& name : truth.always_observed) {
      maskable[static_cast<std::size_t>(c.feature_index(name))] = false;
    }
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) {
        const bool drop = missing_rng.bernoulli(missing_rate);
        if (drop && maskable[static_cast<std::size_t>(j)]) {
          c.missing(i, j) = true;
          c.x(i, j) = kNaN;
        }
      }
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Imputation
// ---------------------------------------------------------------------------

nlohmann::json ImputationModel::to_json() const {
  nlohmann::json j;
  j["feature_names"] = feature_names;
  j["means"] = std::vector<double>(means.data(), means.data() + means.size());
  j["visit_order"] = visit_order;
  j["rounds"] = rounds;
  for (const auto& c : coefficients) {
    j["coefficients"].push_back(std::vector<double>(c.data(), c.data() + c.size()));
  }
  return j;
}

ImputationModel ImputationModel::from_json(const nlohmann::json& j) {
  ImputationModel m;
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  const auto means = j.at("means").get<std::vector<double>>();
  m.means = Eigen::Map<const Vector>(means.data(), static_cast<Index>(means.size()));
  m.visit_order = j.at("visit_order").get<std::vector<Index>>();
  m.rounds = j.at("rounds").get<int>();
  for (const auto& c : j.at("coefficients")) {
    const auto v = c.get<std::vector<double>>();
    m.coefficients.emplace_back(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
  }
  return m;
}

namespace {

double predict_feature(const Matrix& filled, Index j, const Vector& coef, Index row) {
  double acc = coef(0);
  Index k = 1;
  for (Index c = 0; c < filled.cols(); ++c) {
    if (c == j) continue;
    acc += coef(k++) * filled(row, c);
  }
  return acc;
}

}  // namespace

ImputationFit fit_imputer(const Cohort& cohort, int rounds) {
  const Index n = cohort.rows();
  const Index d = cohort.cols();
  ImputationFit out;
  ImputationModel& m = out.model;
  m.feature_names = cohort.feature_names;
  m.rounds = rounds;
  m.means.resize(d);

  std::vector<Index> missing_count(static_cast<std::size_t>(d), 0);
  bool any_complete = false;
  for (Index j = 0; j < d; ++j) {
    double sum = 0.0;
    Index observed = 0;
    for (Index i = 0; i < n; ++i) {
      if (!cohort.missing(i, j)) {
        sum += cohort.x(i, j);
        ++observed;
      }
    }
    if (observed == 0) {
      throw Error(ErrorCode::kAllMissingFeature,
                  "impute: feature '" + cohort.feature_names[static_cast<std::size_t>(j)] +
                      "' has no observed values");
    }
    missing_count[static_cast<std::size_t>(j)] = n - observed;
    any_complete = any_complete || observed == n;
    m.means(j) = sum / static_cast<double>(observed);
  }
  if (!any_complete && d > 0) {
    throw Error(ErrorCode::kAllMissingFeature, "impute: need at least one fully observed feature");
  }
  m.visit_order.resize(static_cast<std::size_t>(d));
  std::iota(m.visit_order.begin(), m.visit_order.end(), Index{0});
  std::stable_sort(m.visit_order.begin(), m.visit_order.end(), [&](Index a, Index b) {
    return missing_count[static_cast<std::size_t>(a)] > missing_count[static_cast<std::size_t>(b)];
  });

  Matrix filled = cohort.x;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      if (cohort.missing(i, j)) filled(i, j) = m.means(j);
    }
  }
  m.coefficients.assign(static_cast<std::size_t>(d), Vector::Zero(d));
  if (d < 2) {
    for (Index j = 0; j < d; ++j) m.coefficients[static_cast<std::size_t>(j)](0) = m.means(j);
  } else {
    for (int round = 0; round < rounds; ++round) {
      for (Index j : m.visit_order) {
        std::vector<Index> obs;
        for (Index i = 0; i < n; ++i) {
          if (!cohort.missing(i, j)) obs.push_back(i);
        }
        Eigen::MatrixXd design(static_cast<Index>(obs.size()), d);
        Eigen::VectorXd target(static_cast<Index>(obs.size()));
        for (std::size_t r = 0; r < obs.size(); ++r) {
          const auto row = static_cast<Index>(r);
          design(row, 0) = 1.0;
          Index k = 1;
          for (Index c = 0; c < d; ++c) {
            if (c != j) design(row, k++) = filled(obs[r], c);
          }
          target(row) = filled(obs[r], j);
        }
        const Vector coef = design.completeOrthogonalDecomposition().solve(target);
        m.coefficients[static_cast<std::size_t>(j)] = coef;
        if (missing_count[static_cast<std::size_t>(j)] == 0) continue;
        for (Index i = 0; i < n; ++i) {
          if (cohort.missing(i, j)) filled(i, j) = predict_feature(filled, j, coef, i);
        }
      }
    }
  }
  out.imputed = cohort;
  out.imputed.x = std::move(filled);
  out.imputed.missing.setConstant(false);
  return out;
}

Cohort impute_chained(const Cohort& cohort, int rounds) {
  if (!cohort.has_missing()) return cohort;
  return fit_imputer(cohort, rounds).imputed;
}

Cohort apply_imputer(const ImputationModel& model, const Cohort& cohort) {
  if (cohort.feature_names != model.feature_names) {
    throw Error(ErrorCode::kSchemaMismatch, "apply_imputer: feature names differ");
  }
  Cohort out = cohort;
  if (!cohort.has_missing()) return out;
  const Index d = cohort.cols();
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < d; ++j) {
      if (cohort.missing(i, j)) out.x(i, j) = model.means(j);
    }
  }
  if (d >= 2) {
    for (int round = 0; round < model.rounds; ++round) {
      for (Index j : model.visit_order) {
        const Vector& coef = model.coefficients[static_cast<std::size_t>(j)];
        for (Index i = 0; i < out.rows(); ++i) {
          if (cohort.missing(i, j)) out.x(i, j) = predict_feature(out.x, j, coef, i);
        }
      }
    }
  }
  out.missing.setConstant(false);
  return out;
}

// ---------------------------------------------------------------------------
// Feature selection
// ---------------------------------------------------------------------------

nlohmann::json FeatureReport::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.feature-report/1";
  j["dropped_by_correlation"] = nlohmann::json::array();
  for (const auto& d : dropped_by_correlation) {
    j["dropped_by_correlation"].push_back({{"dropped", d.dropped}, {"kept", d.kept}, {"r", d.r}});
  }
  j["dropped_by_missingness"] = nlohmann::json::array();
  for (const auto& [name, rate] : dropped_by_missingness) {
    j["dropped_by_missingness"].push_back({{"name", name}, {"rate", rate}});
  }
  j["mi_ranking"] = nlohmann::json::array();
  for (const auto& [name, mi] : mi_ranking) {
    j["mi_ranking"].push_back({{"name", name}, {"mi_nats", mi}});
  }
  j["selected"] = selected;
  return j;
}

double mutual_information(const Cohort& cohort, Index feature, int bins) {
  std::vector<Index> rows;
  for (Index i = 0; i < cohort.rows(); ++i) {
    if (!cohort.missing(i, feature)) rows.push_back(i);
  }
  const auto n = static_cast<Index>(rows.size());
  if (n == 0) return 0.0;
  Vector values(n);
  for (Index r = 0; r < n; ++r) values(r) = cohort.x(rows[static_cast<std::size_t>(r)], feature);
  const Vector ranks = fractional_ranks(values);
  // joint[b][y]
  std::vector<std::array<double, 2>> joint(static_cast<std::size_t>(bins), {0.0, 0.0});
  for (Index r = 0; r < n; ++r) {
    auto b = static_cast<int>(std::floor(bins * (ranks(r) - 1.0) / static_cast<double>(n)));
    b = std::clamp(b, 0, bins - 1);
    joint[static_cast<std::size_t>(b)][cohort.y(rows[static_cast<std::size_t>(r)]) != 0] += 1.0;
  }
  double py[2] = {0.0, 0.0};
  for (const auto& cell : joint) {
    py[0] += cell[0];
    py[1] += cell[1];
  }
  const auto total = static_cast<double>(n);
  double mi = 0.0;
  for (const auto& cell : joint) {
    const double pb = (cell[0] + cell[1]) / total;
    for (int k = 0; k < 2; ++k) {
      if (cell[k] <= 0.0) continue;
      const double pj = cell[k] / total;
      mi += pj * std::log(pj / (pb * py[k] / total));
    }
  }
  return std::max(mi, 0.0);
}

FeatureReport select_features(const Cohort& cohort, double corr_threshold,
                              double missing_threshold, int top_k) {
  const Index d = cohort.cols();
  const auto& names = cohort.feature_names;
  FeatureReport report;

  std::vector<double> missing_rate(static_cast<std::size_t>(d));
  for (Index j = 0; j < d; ++j) {
    missing_rate[static_cast<std::size_t>(j)] =
        cohort.rows() == 0 ? 0.0
                           : static_cast<double>(cohort.missing.col(j).count()) /
                                 static_cast<double>(cohort.rows());
  }

  struct Pair {
    Index a, b;
    double r;
  };
  std::vector<Pair> pairs;
  for (Index a = 0; a < d; ++a) {
    for (Index b = a + 1; b < d; ++b) {
      std::vector<double> xa, xb;
      for (Index i = 0; i < cohort.rows(); ++i) {
        if (!cohort.missing(i, a) && !cohort.missing(i, b)) {
          xa.push_back(cohort.x(i, a));
          xb.push_back(cohort.x(i, b));
        }
      }
      if (xa.size() < 3) continue;
      const auto r = pearson(Eigen::Map<const Vector>(xa.data(), static_cast<Index>(xa.size())),
                             Eigen::Map<const Vector>(xb.data(), static_cast<Index>(xb.size())));
      if (r && std::fabs(*r) > corr_threshold) pairs.push_back({a, b, *r});
    }
  }
  const auto pair_names = [&](const Pair& p) {
    const auto& na = names[static_cast<std::size_t>(p.a)];
    const auto& nb = names[static_cast<std::size_t>(p.b)];
    return na < nb ? std::make_pair(na, nb) : std::make_pair(nb, na);
  };
  std::sort(pairs.begin(), pairs.end(), [&](const Pair& p, const Pair& q) {
    if (std::fabs(p.r) != std::fabs(q.r)) return std::fabs(p.r) > std::fabs(q.r);
    return pair_names(p) < pair_names(q);
  });
  std::vector<bool> dropped(static_cast<std::size_t>(d), false);
  for (const auto& p : pairs) {
    if (dropped[static_cast<std::size_t>(p.a)] || dropped[static_cast<std::size_t>(p.b)]) continue;
    const double ma = missing_rate[static_cast<std::size_t>(p.a)];
    const double mb = missing_rate[static_cast<std::size_t>(p.b)];
    const auto& na = names[static_cast<std::size_t>(p.a)];
    const auto& nb = names[static_cast<std::size_t>(p.b)];
    const bool drop_a = ma != mb ? ma > mb : na > nb;
    const Index victim = drop_a ? p.a : p.b;
    dropped[static_cast<std::size_t>(victim)] = true;
    report.dropped_by_correlation.push_back({drop_a ? na : nb, drop_a ? nb : na, p.r});
  }

  std::vector<Index> survivors;
  for (Index j = 0; j < d; ++j) {
    if (dropped[static_cast<std::size_t>(j)]) continue;
    if (missing_rate[static_cast<std::size_t>(j)] > missing_threshold) {
      report.dropped_by_missingness.emplace_back(names[static_cast<std::size_t>(j)],
                                                 missing_rate[static_cast<std::size_t>(j)]);
      continue;
    }
    survivors.push_back(j);
  }
  std::sort(report.dropped_by_missingness.begin(), report.dropped_by_missingness.end());

  for (Index j : survivors) {
    report.mi_ranking.emplace_back(names[static_cast<std::size_t>(j)],
                                   mutual_information(cohort, j));
  }
  std::sort(report.mi_ranking.begin(), report.mi_ranking.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  for (std::size_t k = 0; k < report.mi_ranking.size() && static_cast<int>(k) < top_k; ++k) {
    report.selected.push_back(report.mi_ranking[k].first);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Rebalancing
// ---------------------------------------------------------------------------

std::string Imbalance::name() const {
  switch (kind) {
    case Kind::kPosWeight: return "pos_weight";
    case Kind::kUndersample: return "undersample";
    case Kind::kSmote: return "smote:" + std::to_string(smote_k);
  }
  return "";
}

Imbalance Imbalance::parse(const std::string& text) {
  if (text == "pos_weight") return pos_weight();
  if (text == "undersample") return undersample();
  if (text == "smote") return smote(5);
  if (text.rfind("smote:", 0) == 0) {
    const int k = std::stoi(text.substr(6));
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "smote k must be >= 1");
    return smote(k);
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown imbalance strategy '" + text + "'");
}

RebalanceResult rebalance(const Cohort& cohort, const Imbalance& strategy, SeededRng& rng) {
  const Index pos = cohort.positives();
  const Index neg = cohort.negatives();
  if (pos == 0 || neg == 0) {
    throw Error(ErrorCode::kSingleClass, "rebalance: both classes must be present");
  }
  RebalanceResult out;
  if (strategy.kind == Imbalance::Kind::kPosWeight) {
    out.cohort = cohort;
    out.pos_weight = static_cast<double>(neg) / static_cast<double>(pos);
    return out;
  }
  const int minority_label = pos <= neg ? 1 : 0;
  std::vector<Index> minority, majority;
  for (Index i = 0; i < cohort.rows(); ++i) {
    (cohort.y(i) == minority_label ? minority : majority).push_back(i);
  }

  if (strategy.kind == Imbalance::Kind::kUndersample) {
    auto picks = rng.sample_without_replacement(static_cast<Index>(majority.size()),
                                                static_cast<Index>(minority.size()));
    std::vector<Index> keep = minority;
    for (Index p : picks) keep.push_back(majority[static_cast<std::size_t>(p)]);
    std::sort(keep.begin(), keep.end());
    out.cohort = cohort.subset(keep);
    return out;
  }

  const auto k = static_cast<std::size_t>(strategy.smote_k);
  if (minority.size() <= k) {
    throw Error(ErrorCode::kTooFewMinority, "smote: minority count " +
                                                std::to_string(minority.size()) +
                                                " must exceed k = " + std::to_string(k));
  }
  if (cohort.has_missing()) {
    throw Error(ErrorCode::kInvalidArgument, "smote: impute missing cells first");
  }
  const Index d = cohort.cols();
  Vector scale(d);
  for (Index j = 0; j < d; ++j) {
    const double mean = cohort.x.col(j).mean();
    const double sd = std::sqrt((cohort.x.col(j).array() - mean).square().mean());
    scale(j) = sd > 0.0 ? 1.0 / sd : 1.0;
  }
  const auto m = minority.size();
  Matrix z(static_cast<Index>(m), d);
  for (std::size_t a = 0; a < m; ++a) {
    z.row(static_cast<Index>(a)) = cohort.x.row(minority[a]).cwiseProduct(scale.transpose());
  }
  std::vector<std::vector<std::size_t>> neighbors(m);
  std::vector<std::pair<double, std::size_t>> dist(m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      dist[b] = {b == a ? INFINITY
                        : (z.row(static_cast<Index>(a)) - z.row(static_cast<Index>(b))).squaredNorm(),
                 b};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    for (std::size_t t = 0; t < k; ++t) neighbors[a].push_back(dist[t].second);
  }

  const Index n_new = static_cast<Index>(majority.size() - minority.size());
  Cohort synth;
  synth.feature_names = cohort.feature_names;
  synth.x.resize(n_new, d);
  synth.missing = BoolMatrix::Constant(n_new, d, false);
  synth.y = Labels::Constant(n_new, minority_label);
  for (Index t = 0; t < n_new; ++t) {
    const auto a = static_cast<std::size_t>(rng.uniform_index(m));
    const auto b = neighbors[a][static_cast<std::size_t>(rng.uniform_index(k))];
    const double u = rng.uniform();
    const auto xa = cohort.x.row(minority[a]);
    const auto xb = cohort.x.row(minority[b]);
    synth.x.row(t) = xa + u * (xb - xa);
  }
  out.cohort = concat(cohort, synth);
  return out;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

StandardizationStats fit_standardization(const Cohort& cohort) {
  const Index d = cohort.cols();
  StandardizationStats s{Vector::Zero(d), Vector::Ones(d)};
  for (Index j = 0; j < d; ++j) {
    double sum = 0.0;
    Index count = 0;
    for (Index i = 0; i < cohort.rows(); ++i) {
      if (cohort.missing(i, j)) continue;
      sum += cohort.x(i, j);
      ++count;
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (Index i = 0; i < cohort.rows(); ++i) {
      if (cohort.missing(i, j)) continue;
      ss += (cohort.x(i, j) - mean) * (cohort.x(i, j) - mean);
    }
    const double sd = std::sqrt(ss / static_cast<double>(count));
    s.mean(j) = mean;
    s.std(j) = sd;
    if (!(sd > 1e-12 * std::max(1.0, std::fabs(mean)))) {
      // Constant feature: centre on the exact value so it maps to 0.
      for (Index i = 0; i < cohort.rows(); ++i) {
        if (!cohort.missing(i, j)) {
          s.mean(j) = cohort.x(i, j);
          break;
        }
      }
      s.std(j) = 1.0;
    }
  }
  return s;
}

Cohort standardize_apply(const Cohort& cohort, const std::optional<StandardizationStats>& stats) {
  if (!stats) throw Error(ErrorCode::kNotFitted, "standardize_apply: no fitted statistics");
  if (stats->mean.size() != cohort.cols()) {
    throw Error(ErrorCode::kShapeMismatch, "standardize_apply: feature count differs");
  }
  Cohort out = cohort;
  for (Index i = 0; i < out.rows(); ++i) {
    for (Index j = 0; j < out.cols(); ++j) {
      if (!out.missing(i, j)) out.x(i, j) = (out.x(i, j) - stats->mean(j)) / stats->std(j);
    }
  }
  out.standardization = stats;
  return out;
}

Cohort standardize_fit(const Cohort& cohort) {
  return standardize_apply(cohort, fit_standardization(cohort));
}

nlohmann::json to_json(const StandardizationStats& stats) {
  return {{"mean", std::vector<double>(stats.mean.data(), stats.mean.data() + stats.mean.size())},
          {"std", std::vector<double>(stats.std.data(), stats.std.data() + stats.std.size())}};
}

StandardizationStats standardization_from_json(const nlohmann::json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  return {Eigen::Map<const Vector>(mean.data(), static_cast<Index>(mean.size())),
          Eigen::Map<const Vector>(sd.data(), static_cast<Index>(sd.size()))};
}

}  // namespace vdpt
