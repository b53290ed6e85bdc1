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

#include "vdpt/service.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <limits>
#include <mutex>
#include <sstream>

namespace vdpt {

extern const char* const kEmbeddedReferenceRanges;

namespace {

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

template <typename T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json();
}

template <typename T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

ApiResponse error_response(int status, std::string code, std::string detail,
                           nlohmann::json extra = nlohmann::json::object()) {
  extra["error"] = std::move(code);
  extra["detail"] = std::move(detail);
  return {status, std::move(extra)};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : path.substr(0, path.find('?'))) {
    if (c == '/') {
      if (!cur.empty()) parts.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) parts.push_back(std::move(cur));
  return parts;
}

}  // namespace

// ---------------------------------------------------------------------------
// Reference ranges
// ---------------------------------------------------------------------------

const ReferenceRange& ReferenceRanges::at(const std::string& feature) const {
  const auto it = ranges.find(feature);
  if (it == ranges.end()) throw Error(ErrorCode::kSchemaMismatch, "no reference range for '" + feature + "'");
  return it->second;
}

nlohmann::json ReferenceRanges::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.reference-ranges/1";
  j["ranges"] = nlohmann::json::object();
  for (const auto& [name, r] : ranges) {
    j["ranges"][name] = {{"low", r.low},
                         {"high", r.high},
                         {"unit", r.unit},
                         {"plausible_low", r.plausible_low()},
                         {"plausible_high", r.plausible_high()}};
  }
  return j;
}

ReferenceRanges ReferenceRanges::from_json(const nlohmann::json& j) {
  ReferenceRanges out;
  try {
    if (j.at("format") != "vdpt.reference-ranges/1") {
      throw Error(ErrorCode::kParseError, "reference ranges: unexpected format");
    }
    for (const auto& [name, r] : j.at("ranges").items()) {
      ReferenceRange range{r.at("low").get<double>(), r.at("high").get<double>(),
                           r.value("unit", std::string())};
      if (!(std::isfinite(range.low) && std::isfinite(range.high) && range.low < range.high)) {
        throw Error(ErrorCode::kInvalidSpec, "reference ranges: '" + name + "' needs low < high");
      }
      out.ranges.emplace(name, std::move(range));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("reference ranges: ") + e.what());
  }
  return out;
}

ReferenceRanges ReferenceRanges::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open " + path.string());
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

ReferenceRanges ReferenceRanges::defaults() {
  return from_json(nlohmann::json::parse(kEmbeddedReferenceRanges));
}

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

bool valid_clinician_prediction(const std::string& s) { return s == "survive" || s == "die"; }
bool valid_outcome(const std::string& s) { return s == "survived" || s == "died"; }

nlohmann::json ModelOutput::to_json() const {
  return {{"probability", probability},
          {"variance", optional_json(variance)},
          {"confidence", optional_json(confidence)},
          {"explanation", explanation.to_json()},
          {"toward_mortality", vector_json(toward_mortality)}};
}

ModelOutput ModelOutput::from_json(const nlohmann::json& j) {
  ModelOutput m;
  m.probability = j.at("probability").get<double>();
  m.variance = optional_from<double>(j, "variance");
  m.confidence = optional_from<double>(j, "confidence");
  m.explanation = InfluenceReport::from_json(j.at("explanation"));
  m.toward_mortality = vector_from(j.at("toward_mortality"));
  return m;
}

nlohmann::json PatientRecord::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.record/1";
  j["id"] = id;
  j["timestamp"] = timestamp;
  j["feature_names"] = feature_names;
  j["features"] = nlohmann::json::object();
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    j["features"][feature_names[i]] = features(static_cast<Index>(i));
  }
  j["clinician_prediction"] = clinician_prediction;
  j["outputs"] = nlohmann::json::object();
  for (const auto& [kind, out] : outputs) j["outputs"][kind] = out.to_json();
  j["outcome"] = optional_json(outcome);
  j["outcome_timestamp"] = optional_json(outcome_timestamp);
  j["cohort"] = cohort;
  j["idempotency_key"] = optional_json(idempotency_key);
  return j;
}

PatientRecord PatientRecord::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "vdpt.record/1") throw Error(ErrorCode::kParseError, "record: unexpected format");
    PatientRecord r;
    r.id = j.at("id").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    r.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    r.features.resize(static_cast<Index>(r.feature_names.size()));
    for (std::size_t i = 0; i < r.feature_names.size(); ++i) {
      r.features(static_cast<Index>(i)) = j.at("features").at(r.feature_names[i]).get<double>();
    }
    r.clinician_prediction = j.at("clinician_prediction").get<std::string>();
    for (const auto& [kind, out] : j.at("outputs").items()) r.outputs.emplace(kind, ModelOutput::from_json(out));
    r.outcome = optional_from<std::string>(j, "outcome");
    r.outcome_timestamp = optional_from<std::string>(j, "outcome_timestamp");
    r.cohort = j.at("cohort").get<std::string>();
    r.idempotency_key = optional_from<std::string>(j, "idempotency_key");
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("record: ") + e.what());
  }
}

namespace {

constexpr const char* kLogFile = "records.jsonl";
constexpr const char* kSnapshotFile = "snapshot.json";

std::string format_id(std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "r-%06llu", static_cast<unsigned long long>(n));
  return buf;
}

std::uint64_t id_number(const std::string& id) {
  if (id.rfind("r-", 0) != 0) return 0;
  try {
    return std::stoull(id.substr(2));
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

RecordStore::RecordStore(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(*dir_, ec);
  if (ec) throw Error(ErrorCode::kIoError, "cannot create " + dir_->string() + ": " + ec.message());
  replay();
  log_.open(*dir_ / kLogFile, std::ios::app);
  if (!log_) throw Error(ErrorCode::kIoError, "cannot open " + (*dir_ / kLogFile).string());
}

void RecordStore::apply_insert(PatientRecord record) {
  // Replays may see an insert twice (snapshot written, log not yet
  // truncated); the first copy wins.
  if (by_id_.count(record.id) != 0) return;
  next_id_ = std::max(next_id_, id_number(record.id) + 1);
  if (record.idempotency_key) by_key_.emplace(*record.idempotency_key, record.id);
  by_id_.emplace(record.id, records_.size());
  records_.push_back(std::move(record));
}

void RecordStore::replay() {
  const auto snapshot_path = *dir_ / kSnapshotFile;
  if (std::filesystem::exists(snapshot_path)) {
    std::ifstream in(snapshot_path);
    try {
      const auto j = nlohmann::json::parse(in);
      if (j.at("format") != "vdpt.record-store/1") {
        throw Error(ErrorCode::kParseError, "snapshot: unexpected format");
      }
      for (const auto& r : j.at("records")) apply_insert(PatientRecord::from_json(r));
      next_id_ = std::max(next_id_, j.at("next_id").get<std::uint64_t>());
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, snapshot_path.string() + ": " + e.what());
    }
  }
  std::ifstream log(*dir_ / kLogFile);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(log, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json ev;
    try {
      ev = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error&) {
      // A torn final line is what an interrupted append leaves behind.
      if (log.peek() == std::char_traits<char>::eof()) break;
      throw Error(ErrorCode::kParseError, "records log line " + std::to_string(line_no) + " is corrupt");
    }
    try {
      const std::string op = ev.at("op").get<std::string>();
      if (op == "insert") {
        apply_insert(PatientRecord::from_json(ev.at("record")));
      } else if (op == "outcome") {
        const auto it = by_id_.find(ev.at("id").get<std::string>());
        if (it == by_id_.end()) throw Error(ErrorCode::kParseError, "outcome for unknown record");
        PatientRecord& r = records_[it->second];
        if (!r.outcome) {
          r.outcome = ev.at("outcome").get<std::string>();
          r.outcome_timestamp = ev.at("timestamp").get<std::string>();
        }
      } else {
        throw Error(ErrorCode::kParseError, "unknown op '" + op + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kParseError, "records log line " + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RecordStore::append_event(const nlohmann::json& event) {
  if (!dir_) return;
  log_ << event.dump() << '\n';
  log_.flush();
  if (!log_) throw Error(ErrorCode::kIoError, "cannot append to records log");
}

RecordStore::Insert RecordStore::insert(PatientRecord record) {
  std::unique_lock lock(mutex_);
  if (record.idempotency_key) {
    const auto it = by_key_.find(*record.idempotency_key);
    if (it != by_key_.end()) return {records_[by_id_.at(it->second)], false};
  }
  record.id = format_id(next_id_);
  for (auto& [kind, out] : record.outputs) out.explanation.instance_id = record.id;
  append_event({{"op", "insert"}, {"record", record.to_json()}});
  apply_insert(record);
  return {std::move(record), true};
}

RecordStore::OutcomeStatus RecordStore::set_outcome(const std::string& id, const std::string& outcome,
                                                    const std::string& timestamp) {
  std::unique_lock lock(mutex_);
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return OutcomeStatus::kNotFound;
  PatientRecord& r = records_[it->second];
  if (r.outcome) return OutcomeStatus::kAlreadySet;
  append_event({{"op", "outcome"}, {"id", id}, {"outcome", outcome}, {"timestamp", timestamp}});
  r.outcome = outcome;
  r.outcome_timestamp = timestamp;
  return OutcomeStatus::kSet;
}

std::optional<PatientRecord> RecordStore::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return records_[it->second];
}

std::optional<PatientRecord> RecordStore::find_by_key(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto it = by_key_.find(key);
  if (it == by_key_.end()) return std::nullopt;
  return records_[by_id_.at(it->second)];
}

std::vector<PatientRecord> RecordStore::list() const {
  std::shared_lock lock(mutex_);
  return records_;
}

std::size_t RecordStore::size() const {
  std::shared_lock lock(mutex_);
  return records_.size();
}

nlohmann::json RecordStore::state_json() const {
  std::shared_lock lock(mutex_);
  return state_json_locked();
}

nlohmann::json RecordStore::state_json_locked() const {
  nlohmann::json j;
  j["format"] = "vdpt.record-store/1";
  j["next_id"] = next_id_;
  j["records"] = nlohmann::json::array();
  for (const auto& r : records_) j["records"].push_back(r.to_json());
  return j;
}

void RecordStore::snapshot() {
  if (!dir_) return;
  std::unique_lock lock(mutex_);
  const nlohmann::json state = state_json_locked();
  const auto tmp = *dir_ / (std::string(kSnapshotFile) + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    out << state.dump();
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
  }
  std::filesystem::rename(tmp, *dir_ / kSnapshotFile);
  log_.close();
  log_.open(*dir_ / kLogFile, std::ios::trunc);
  log_.close();
  log_.open(*dir_ / kLogFile, std::ios::app);
  if (!log_) throw Error(ErrorCode::kIoError, "cannot reopen records log");
}

// ---------------------------------------------------------------------------
// API
// ---------------------------------------------------------------------------

InfluenceConfig ServiceConfig::default_influence() {
  InfluenceConfig c;
  c.subsample = std::numeric_limits<Index>::max();  // every training row
  c.hessian_subsample = 1000;
  c.cg_max_iter = 200;
  c.curvature_probe_steps = 40;
  return c;
}

std::string utc_now_iso8601() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

nlohmann::json training_stats(const Cohort& reference, const ReferenceRanges& ranges) {
  nlohmann::json j;
  j["format"] = "vdpt.stats/1";
  j["n_rows"] = reference.rows();
  j["prevalence"] = reference.rows() > 0
                        ? static_cast<double>(reference.positives()) / static_cast<double>(reference.rows())
                        : 0.0;
  j["feature_order"] = reference.feature_names;
  j["features"] = nlohmann::json::object();
  for (Index c = 0; c < reference.cols(); ++c) {
    std::vector<double> v;
    for (Index r = 0; r < reference.rows(); ++r) {
      if (!reference.missing(r, c)) v.push_back(reference.x(r, c));
    }
    const std::string& name = reference.feature_names[static_cast<std::size_t>(c)];
    nlohmann::json f{{"n_observed", v.size()}, {"n_missing", static_cast<std::size_t>(reference.rows()) - v.size()}};
    if (v.size() >= 2) {
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      f["mean"] = mean;
      f["std"] = std::sqrt(ss / static_cast<double>(v.size() - 1));
      f["q1"] = quantile(v, 0.25);
      f["median"] = quantile(v, 0.5);
      f["q3"] = quantile(v, 0.75);
    }
    if (const auto it = ranges.ranges.find(name); it != ranges.ranges.end()) {
      f["healthy"] = {{"low", it->second.low}, {"high", it->second.high}, {"unit", it->second.unit}};
    }
    j["features"][name] = std::move(f);
  }
  return j;
}

Api::Api(std::shared_ptr<const ModelArtifact> mlp, std::shared_ptr<const ModelArtifact> vdp,
         Cohort training_reference, ReferenceRanges ranges, RecordStore& store, ServiceConfig config)
    : mlp_(std::move(mlp)),
      vdp_(std::move(vdp)),
      reference_(std::move(training_reference)),
      ranges_(std::move(ranges)),
      store_(store),
      config_(std::move(config)) {
  config_.influence.validate();
  if (mlp_) mlp_explainer_ = std::make_unique<const ArtifactExplainer>(*mlp_, config_.influence);
  if (vdp_) vdp_explainer_ = std::make_unique<const ArtifactExplainer>(*vdp_, config_.influence);
  if (!config_.clock) config_.clock = utc_now_iso8601;
  stats_ = training_stats(reference_, ranges_);
}

ApiResponse Api::handle(const ApiRequest& request) const {
  const std::vector<std::string> p = split_path(request.path);
  if (p.size() < 2 || p[0] != "api") return error_response(404, "not_found", "unknown path");
  const std::string& m = request.method;
  if (p.size() == 2 && p[1] == "health") {
    return {200, {{"status", "ok"}, {"models", {{"mlp", mlp_ != nullptr}, {"vdp", vdp_ != nullptr}}}}};
  }
  if (config_.token) {
    const auto it = request.headers.find("authorization");
    if (it == request.headers.end() || it->second != "Bearer " + *config_.token) {
      return error_response(401, "unauthorized", "missing or invalid bearer token");
    }
  }
  try {
    if (p[1] == "records") {
      if (p.size() == 2) {
        if (m == "POST") return post_record(request);
        if (m == "GET") return get_records();
      } else if (p.size() == 3 && m == "GET") {
        return get_record(p[2]);
      } else if (p.size() == 4 && p[3] == "outcome") {
        if (m == "PATCH") return patch_outcome(p[2], request);
      } else {
        return error_response(404, "not_found", "unknown path");
      }
      return error_response(405, "method_not_allowed", m + " not supported on " + request.path);
    }
    if (p.size() == 2 && (p[1] == "stats" || p[1] == "ranges" || p[1] == "drift")) {
      if (m != "GET") return error_response(405, "method_not_allowed", m + " not supported on " + request.path);
      if (p[1] == "stats") return get_stats();
      if (p[1] == "ranges") return get_ranges();
      return get_drift();
    }
    return error_response(404, "not_found", "unknown path");
  } catch (const Error& e) {
    const bool client = e.code() == ErrorCode::kParseError || e.code() == ErrorCode::kInvalidArgument ||
                        e.code() == ErrorCode::kSchemaMismatch;
    return error_response(client ? 400 : 500, std::string(error_code_name(e.code())), e.what());
  } catch (const std::exception& e) {
    return error_response(500, "internal", e.what());
  }
}

ModelOutput Api::run_model(const ModelArtifact& model, const ArtifactExplainer& explainer,
                           const Cohort& row) const {
  ModelOutput out;
  const Prediction p = model.predict(row)[0];
  out.probability = p.probability;
  out.variance = p.variance;
  out.confidence = p.confidence;
  const Vector x = model.preprocessor.transform(row).row(0).transpose();
  out.explanation = explainer.explain(x);
  out.toward_mortality = out.explanation.test_label == 1 ? out.explanation.values : Vector(-out.explanation.values);
  return out;
}

ApiResponse Api::post_record(const ApiRequest& request) const {
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(request.body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_response(400, "malformed_json", e.what());
  }
  // The workflow rule comes first: without the clinician's own call nothing
  // else about the request is evaluated.
  if (!body.is_object() || !body.contains("clinician_prediction") || !body["clinician_prediction"].is_string() ||
      !valid_clinician_prediction(body["clinician_prediction"].get<std::string>())) {
    return error_response(422, "clinician_prediction_required",
                          "clinician_prediction must be \"survive\" or \"die\" and is required before any "
                          "model output is produced");
  }
  if (!mlp_ || !vdp_) return error_response(503, "models_not_loaded", "model artifacts are not loaded");

  std::optional<std::string> key;
  if (const auto it = request.headers.find("idempotency-key"); it != request.headers.end()) key = it->second;
  if (body.contains("idempotency_key")) {
    if (!body["idempotency_key"].is_string()) return error_response(400, "invalid_idempotency_key", "must be a string");
    key = body["idempotency_key"].get<std::string>();
  }
  if (key) {
    if (auto existing = store_.find_by_key(*key)) return {200, existing->to_json()};
  }

  if (!body.contains("features") || !body["features"].is_object()) {
    return error_response(400, "invalid_features", "features must be an object of name -> number");
  }
  const nlohmann::json& features = body["features"];
  nlohmann::json problems = nlohmann::json::array();
  const auto& names = reference_.feature_names;
  Matrix x(1, static_cast<Index>(names.size()));
  for (std::size_t j = 0; j < names.size(); ++j) {
    const std::string& name = names[j];
    if (!features.contains(name)) {
      problems.push_back({{"feature", name}, {"problem", "missing"}});
      continue;
    }
    const auto& v = features[name];
    if (!v.is_number() || !std::isfinite(v.get<double>())) {
      problems.push_back({{"feature", name}, {"problem", "not a finite number"}});
      continue;
    }
    const double value = v.get<double>();
    if (const auto it = ranges_.ranges.find(name); it != ranges_.ranges.end()) {
      if (value < it->second.plausible_low() || value > it->second.plausible_high()) {
        problems.push_back({{"feature", name},
                            {"problem", "outside plausible bounds"},
                            {"plausible_low", it->second.plausible_low()},
                            {"plausible_high", it->second.plausible_high()}});
        continue;
      }
    }
    x(0, static_cast<Index>(j)) = value;
  }
  for (const auto& [name, _] : features.items()) {
    if (std::find(names.begin(), names.end(), name) == names.end()) {
      problems.push_back({{"feature", name}, {"problem", "unknown feature"}});
    }
  }
  if (!problems.empty()) {
    return error_response(400, "invalid_features", "feature validation failed", {{"fields", problems}});
  }

  const Cohort row = Cohort::from_dense(names, x, Labels::Zero(1));
  PatientRecord record;
  record.timestamp = config_.clock();
  record.feature_names = names;
  record.features = x.row(0).transpose();
  record.clinician_prediction = body["clinician_prediction"].get<std::string>();
  record.outputs.emplace(model_kind_name(ModelKind::kMlp), run_model(*mlp_, *mlp_explainer_, row));
  record.outputs.emplace(model_kind_name(ModelKind::kVdp), run_model(*vdp_, *vdp_explainer_, row));
  record.cohort = config_.cohort;
  record.idempotency_key = key;
  RecordStore::Insert ins = store_.insert(std::move(record));
  return {ins.created ? 201 : 200, ins.record.to_json()};
}

ApiResponse Api::patch_outcome(const std::string& id, const ApiRequest& request) const {
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(request.body);
  } catch (const nlohmann::json::parse_error& e) {
    return error_response(400, "malformed_json", e.what());
  }
  if (!body.is_object() || !body.contains("outcome") || !body["outcome"].is_string() ||
      !valid_outcome(body["outcome"].get<std::string>())) {
    return error_response(400, "invalid_outcome", "outcome must be \"survived\" or \"died\"");
  }
  switch (store_.set_outcome(id, body["outcome"].get<std::string>(), config_.clock())) {
    case RecordStore::OutcomeStatus::kNotFound:
      return error_response(404, "not_found", "no record '" + id + "'");
    case RecordStore::OutcomeStatus::kAlreadySet:
      return error_response(409, "outcome_already_set", "the outcome of '" + id + "' is immutable");
    case RecordStore::OutcomeStatus::kSet:
      break;
  }
  return {200, store_.find(id)->to_json()};
}

namespace {

// Model outputs are only ever serialized for records that carry the
// clinician's prediction.
nlohmann::json public_record(const PatientRecord& r) {
  nlohmann::json j = r.to_json();
  if (!valid_clinician_prediction(r.clinician_prediction)) j["outputs"] = nlohmann::json::object();
  return j;
}

}  // namespace

ApiResponse Api::get_records() const {
  nlohmann::json j;
  j["format"] = "vdpt.records/1";
  j["records"] = nlohmann::json::array();
  for (const auto& r : store_.list()) j["records"].push_back(public_record(r));
  return {200, j};
}

ApiResponse Api::get_record(const std::string& id) const {
  const auto r = store_.find(id);
  if (!r) return error_response(404, "not_found", "no record '" + id + "'");
  return {200, public_record(*r)};
}

ApiResponse Api::get_stats() const { return {200, stats_}; }

ApiResponse Api::get_ranges() const { return {200, ranges_.to_json()}; }

ApiResponse Api::get_drift() const {
  std::vector<PatientRecord> labelled;
  for (auto& r : store_.list()) {
    if (r.outcome) labelled.push_back(std::move(r));
  }
  const auto have = static_cast<Index>(labelled.size());
  if (have < config_.drift_min_records) {
    return error_response(409, "insufficient_records", "drift testing needs more records with outcomes",
                          {{"have", have}, {"need", config_.drift_min_records}});
  }
  const auto& names = reference_.feature_names;
  Matrix x(have, static_cast<Index>(names.size()));
  Labels y(have);
  for (Index i = 0; i < have; ++i) {
    const PatientRecord& r = labelled[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < names.size(); ++j) {
      const auto it = std::find(r.feature_names.begin(), r.feature_names.end(), names[j]);
      if (it == r.feature_names.end()) {
        throw Error(ErrorCode::kSchemaMismatch, "record " + r.id + " lacks feature " + names[j]);
      }
      x(i, static_cast<Index>(j)) = r.features(it - r.feature_names.begin());
    }
    y(i) = *r.outcome == "died" ? 1 : 0;
  }
  const Cohort current = Cohort::from_dense(names, x, y);
  std::optional<ConfidenceModel> confidence;
  if (vdp_) {
    const std::shared_ptr<const ModelArtifact> model = vdp_;
    confidence = ConfidenceModel{model->vdp, model->variance_cdf,
                                 [model](const Cohort& c) { return model->preprocessor.transform(c); }};
  }
  const DriftReport report = drift_report(reference_, current, confidence ? &*confidence : nullptr);
  return {200, report.to_json()};
}

}  // namespace vdpt
