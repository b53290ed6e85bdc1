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

// The training pipeline shared by cross-validation, the CLI and the service:
// impute -> standardize -> rebalance -> train, with every statistic fit on
// the training rows only, and the resulting self-contained model artifact.

#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vdpt/cohort.hpp"
#include "vdpt/influence.hpp"
#include "vdpt/mlp.hpp"
#include "vdpt/uncertainty.hpp"
#include "vdpt/vdp.hpp"

namespace vdpt {

enum class ModelKind { kMlp, kVdp };

std::string model_kind_name(ModelKind kind);        // "mlp" | "vdp"
ModelKind parse_model_kind(const std::string& text);  // kInvalidArgument otherwise

struct ModelConfig {
  ModelKind kind = ModelKind::kMlp;
  TrainConfig mlp = TrainConfig::desk_mlp();
  VdpTrainConfig vdp = VdpTrainConfig::desk_vdp();

  const TrainConfig& base() const { return kind == ModelKind::kMlp ? mlp : vdp.base; }
  TrainConfig& base() { return kind == ModelKind::kMlp ? mlp : vdp.base; }

  static ModelConfig full(ModelKind kind);
  static ModelConfig desk(ModelKind kind);

  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

// Imputer plus standardization, fit on training rows.
struct Preprocessor {
  ImputationModel imputer;
  StandardizationStats standardization;

  static Preprocessor fit(const Cohort& train);
  // Raw cohort (columns matched by name, any order) -> model inputs.
  Matrix transform(const Cohort& raw) const;
  const std::vector<std::string>& feature_names() const { return imputer.feature_names; }

  nlohmann::json to_json() const;
  static Preprocessor from_json(const nlohmann::json& j);
};

struct Prediction {
  double probability = 0.0;
  std::optional<double> variance;    // stochastic model only
  std::optional<double> confidence;  // stochastic model only
};

// A trained model with everything needed to predict and explain:
// preprocessing, parameters, resolved loss weights and the standardized
// training rows the parameters were fit to (the influence objective).
struct ModelArtifact {
  ModelConfig config;
  Preprocessor preprocessor;
  MlpParams mlp;
  VdpParams vdp;
  double pos_weight = 1.0;
  double kl_weight = 0.0;
  VarianceCdf variance_cdf;
  Matrix train_x;  // standardized rows after rebalancing
  Labels train_y;

  ModelKind kind() const { return config.kind; }
  const std::vector<std::string>& feature_names() const { return preprocessor.feature_names(); }

  std::vector<Prediction> predict(const Cohort& raw) const;
  std::vector<Prediction> predict_inputs(const Matrix& x) const;  // already preprocessed
  Vector probabilities(const Cohort& raw) const;

  // Influence explanation of one preprocessed input row; the test label is
  // the predicted class unless given.
  InfluenceReport explain(const Vector& x, const InfluenceConfig& config,
                          std::optional<int> label = std::nullopt,
                          std::string instance_id = {}) const;

  nlohmann::json to_json() const;  // "vdpt.mlp/1" or "vdpt.vdp/1"
  static ModelArtifact from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static ModelArtifact load(const std::filesystem::path& path);
};

// Builds the influence objective of an artifact once (Hessian rows, curvature
// shift, mean mixed derivative) and explains any number of preprocessed rows
// with it. Copies the artifact, so it may outlive the original.
class ArtifactExplainer {
 public:
  ArtifactExplainer(const ModelArtifact& artifact, const InfluenceConfig& config);
  ~ArtifactExplainer();
  ArtifactExplainer(ArtifactExplainer&&) noexcept;
  ArtifactExplainer& operator=(ArtifactExplainer&&) noexcept;

  // The test label is the predicted class unless given.
  InfluenceReport explain(const Vector& x, std::optional<int> label = std::nullopt,
                          std::string instance_id = {}) const;
  double curvature_shift() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Runs the full pipeline on raw training rows. `seed` overrides the
// configuration seed when given.
ModelArtifact fit_model(const Cohort& train, const ModelConfig& config,
                        std::optional<std::uint64_t> seed = std::nullopt);

// Default synthetic cohort used by the acceptance suite and the CLI.
struct SyntheticDefaults {
  static constexpr Index kRows = 10000;
  static constexpr double kPrevalence = 0.08;
  static constexpr double kMissingRate = 0.05;
  static constexpr std::uint64_t kSeed = 2026;
};
Cohort default_synthetic_cohort(Index n = SyntheticDefaults::kRows,
                                std::uint64_t seed = SyntheticDefaults::kSeed);

}  // namespace vdpt
