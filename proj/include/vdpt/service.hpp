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

// Deployment layer: reference ranges, patient records with an append-only
// store, and a transport-independent JSON API. The HTTP adapter in
// http_server.hpp only forwards requests to Api::handle.

#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "vdpt/drift.hpp"
#include "vdpt/pipeline.hpp"

namespace vdpt {

// ---------------------------------------------------------------------------
// Reference ranges
// ---------------------------------------------------------------------------

struct ReferenceRange {
  double low = 0.0;
  double high = 0.0;
  std::string unit;

  // Hard input bounds: the healthy range widened by ten spans on each side.
  double plausible_low() const { return low - 10.0 * (high - low); }
  double plausible_high() const { return high + 10.0 * (high - low); }
};

struct ReferenceRanges {
  std::map<std::string, ReferenceRange> ranges;

  const ReferenceRange& at(const std::string& feature) const;  // kSchemaMismatch if absent
  nlohmann::json to_json() const;                               // "vdpt.reference-ranges/1"
  static ReferenceRanges from_json(const nlohmann::json& j);    // kParseError / kInvalidSpec
  static ReferenceRanges load(const std::filesystem::path& path);
  // The shipped config/reference_ranges.json.
  static ReferenceRanges defaults();
};

// ---------------------------------------------------------------------------
// Records
// ---------------------------------------------------------------------------

struct ModelOutput {
  double probability = 0.0;
  std::optional<double> variance;
  std::optional<double> confidence;
  InfluenceReport explanation;
  // Explanation values signed so that positive means "pushes toward the
  // mortality prediction" (flipped when the explained label is survival).
  Vector toward_mortality;

  nlohmann::json to_json() const;
  static ModelOutput from_json(const nlohmann::json& j);
};

struct PatientRecord {
  std::string id;
  std::string timestamp;  // ISO-8601 UTC
  std::vector<std::string> feature_names;
  Vector features;                   // raw clinical units, in feature_names order
  std::string clinician_prediction;  // "survive" or "die"
  std::map<std::string, ModelOutput> outputs;  // keyed by model kind name
  std::optional<std::string> outcome;          // "survived" or "died"
  std::optional<std::string> outcome_timestamp;
  std::string cohort;
  std::optional<std::string> idempotency_key;

  nlohmann::json to_json() const;  // "vdpt.record/1"
  static PatientRecord from_json(const nlohmann::json& j);
};

bool valid_clinician_prediction(const std::string& s);
bool valid_outcome(const std::string& s);

// Thread-safe record store. With a directory it appends every mutation to
// records.jsonl and can compact into snapshot.json; opening the directory
// replays snapshot plus log. Reads take a shared lock, writes a unique one.
class RecordStore {
 public:
  RecordStore() = default;  // in memory only
  explicit RecordStore(std::filesystem::path dir);
  RecordStore(const RecordStore&) = delete;
  RecordStore& operator=(const RecordStore&) = delete;

  // Assigns the next id and inserts. If the record carries an idempotency
  // key that is already stored, nothing is written and the stored record is
  // returned with `created = false`.
  struct Insert {
    PatientRecord record;
    bool created = false;
  };
  Insert insert(PatientRecord record);

  enum class OutcomeStatus { kSet, kNotFound, kAlreadySet };
  OutcomeStatus set_outcome(const std::string& id, const std::string& outcome,
                            const std::string& timestamp);

  std::optional<PatientRecord> find(const std::string& id) const;
  std::optional<PatientRecord> find_by_key(const std::string& key) const;
  std::vector<PatientRecord> list() const;
  std::size_t size() const;

  // Writes snapshot.json atomically and truncates the log.
  void snapshot();
  // Canonical state for comparisons: every record in id order.
  nlohmann::json state_json() const;

  const std::optional<std::filesystem::path>& directory() const { return dir_; }

 private:
  void replay();
  void append_event(const nlohmann::json& event);
  void apply_insert(PatientRecord record);
  nlohmann::json state_json_locked() const;  // caller holds the lock

  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mutex_;
  std::vector<PatientRecord> records_;
  std::map<std::string, std::size_t> by_id_;
  std::map<std::string, std::string> by_key_;
  std::uint64_t next_id_ = 1;
  std::ofstream log_;
};

// ---------------------------------------------------------------------------
// API
// ---------------------------------------------------------------------------

struct ApiRequest {
  std::string method;  // "GET", "POST", "PATCH"
  std::string path;    // e.g. "/api/records/r-000001/outcome"
  std::string body;
  std::map<std::string, std::string> headers;  // lower-case names
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceConfig {
  InfluenceConfig influence = default_influence();
  Index drift_min_records = 10;     // labelled records needed for /api/drift
  std::optional<std::string> token;  // bearer token; none = open
  std::string cohort = "default";
  // Timestamp source; replaceable for reproducible tests.
  std::function<std::string()> clock;

  static InfluenceConfig default_influence();
};

std::string utc_now_iso8601();

// Stateless request handler around shared, immutable artifacts. Both model
// pointers may be null (the service then answers 503 where models are needed).
class Api {
 public:
  Api(std::shared_ptr<const ModelArtifact> mlp, std::shared_ptr<const ModelArtifact> vdp,
      Cohort training_reference, ReferenceRanges ranges, RecordStore& store, ServiceConfig config = {});

  ApiResponse handle(const ApiRequest& request) const;

  // Feature order expected in request bodies (the training reference order).
  const std::vector<std::string>& feature_names() const { return reference_.feature_names; }

 private:
  ApiResponse post_record(const ApiRequest& request) const;
  ApiResponse patch_outcome(const std::string& id, const ApiRequest& request) const;
  ApiResponse get_records() const;
  ApiResponse get_record(const std::string& id) const;
  ApiResponse get_stats() const;
  ApiResponse get_ranges() const;
  ApiResponse get_drift() const;
  ModelOutput run_model(const ModelArtifact& model, const ArtifactExplainer& explainer,
                        const Cohort& row) const;

  std::shared_ptr<const ModelArtifact> mlp_;
  std::shared_ptr<const ModelArtifact> vdp_;
  // Built once at startup; each explanation is then a single damped solve.
  std::unique_ptr<const ArtifactExplainer> mlp_explainer_;
  std::unique_ptr<const ArtifactExplainer> vdp_explainer_;
  Cohort reference_;
  ReferenceRanges ranges_;
  RecordStore& store_;
  ServiceConfig config_;
  nlohmann::json stats_;  // computed once from the training reference
};

// Per-feature training statistics over observed values: mean, sample std,
// quartiles (type-7) and count, plus the healthy range when configured.
nlohmann::json training_stats(const Cohort& reference, const ReferenceRanges& ranges);

}  // namespace vdpt
