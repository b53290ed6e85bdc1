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

#include "vdpt/pipeline.hpp"

#include <fstream>
#include <sstream>
#include <variant>

namespace vdpt {

std::string model_kind_name(ModelKind kind) { return kind == ModelKind::kMlp ? "mlp" : "vdp"; }

ModelKind parse_model_kind(const std::string& text) {
  if (text == "mlp" || text == "deterministic") return ModelKind::kMlp;
  if (text == "vdp" || text == "stochastic") return ModelKind::kVdp;
  throw Error(ErrorCode::kInvalidArgument, "unknown model kind '" + text + "' (mlp | vdp)");
}

ModelConfig ModelConfig::full(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.mlp = TrainConfig::full_mlp();
  c.vdp = VdpTrainConfig::full_vdp();
  return c;
}

ModelConfig ModelConfig::desk(ModelKind kind) {
  ModelConfig c;
  c.kind = kind;
  return c;
}

nlohmann::json ModelConfig::to_json() const {
  nlohmann::json j{{"kind", model_kind_name(kind)}};
  if (kind == ModelKind::kMlp) {
    j["train"] = mlp.to_json();
  } else {
    j["train"] = vdp.to_json();
  }
  return j;
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c = desk(parse_model_kind(j.at("kind").get<std::string>()));
  if (j.contains("train")) {
    if (c.kind == ModelKind::kMlp) {
      c.mlp = TrainConfig::from_json(j["train"], c.mlp);
    } else {
      c.vdp = VdpTrainConfig::from_json(j["train"], c.vdp);
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Preprocessor
// ---------------------------------------------------------------------------

Preprocessor Preprocessor::fit(const Cohort& train) {
  Preprocessor p;
  ImputationFit fit = fit_imputer(train);
  p.imputer = std::move(fit.model);
  p.standardization = fit_standardization(fit.imputed);
  return p;
}

Matrix Preprocessor::transform(const Cohort& raw) const {
  const Cohort aligned = raw.select(feature_names());
  return standardize_apply(apply_imputer(imputer, aligned), standardization).x;
}

nlohmann::json Preprocessor::to_json() const {
  return {{"imputer", imputer.to_json()}, {"standardization", vdpt::to_json(standardization)}};
}

Preprocessor Preprocessor::from_json(const nlohmann::json& j) {
  Preprocessor p;
  p.imputer = ImputationModel::from_json(j.at("imputer"));
  p.standardization = standardization_from_json(j.at("standardization"));
  if (p.standardization.mean.size() != static_cast<Index>(p.imputer.feature_names.size())) {
    throw Error(ErrorCode::kParseError, "preprocessor: imputer and standardization disagree");
  }
  return p;
}

// ---------------------------------------------------------------------------
// Fitting
// ---------------------------------------------------------------------------

ModelArtifact fit_model(const Cohort& train, const ModelConfig& config,
                        std::optional<std::uint64_t> seed) {
  ModelArtifact a;
  a.config = config;
  if (seed) a.config.base().seed = *seed;
  const TrainConfig& base = a.config.base();
  base.validate();
  if (a.kind() == ModelKind::kVdp) a.config.vdp.validate();

  a.preprocessor = Preprocessor::fit(train);
  Cohort prepared = train.select(a.preprocessor.feature_names());
  prepared.x = a.preprocessor.transform(train);
  prepared.missing.setConstant(false);

  SeededRng rng(base.seed);
  SeededRng rebalance_rng = rng.split(0x33);
  const RebalanceResult rb = rebalance(prepared, base.imbalance, rebalance_rng);
  a.train_x = rb.cohort.x;
  a.train_y = rb.cohort.y;
  // An explicit positive-class weight wins; otherwise the strategy decides
  // (neg/pos for weighting, 1 after resampling).
  a.pos_weight = base.pos_weight > 0.0 ? base.pos_weight : rb.pos_weight;

  if (a.kind() == ModelKind::kMlp) {
    TrainConfig tc = a.config.mlp;
    tc.pos_weight = a.pos_weight;
    MlpTrainResult r = train_mlp(a.train_x, a.train_y, tc);
    a.mlp = std::move(r.params);
  } else {
    VdpTrainConfig vc = a.config.vdp;
    vc.base.pos_weight = a.pos_weight;
    VdpTrainResult r = train_vdp(a.train_x, a.train_y, vc);
    a.vdp = std::move(r.params);
    a.kl_weight = r.kl_weight;
    // Reference variances come from the training split before rebalancing.
    a.variance_cdf = fit_variance_cdf(a.vdp, prepared.x);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Prediction and explanation
// ---------------------------------------------------------------------------

std::vector<Prediction> ModelArtifact::predict_inputs(const Matrix& x) const {
  std::vector<Prediction> out(static_cast<std::size_t>(x.rows()));
  if (kind() == ModelKind::kMlp) {
    const Vector p = mlp_predict(mlp, x);
    for (Index i = 0; i < x.rows(); ++i) out[static_cast<std::size_t>(i)].probability = p(i);
    return out;
  }
  const VdpBatchPrediction p = predict_vdp(vdp, x);
  for (Index i = 0; i < x.rows(); ++i) {
    Prediction& o = out[static_cast<std::size_t>(i)];
    o.probability = p.probability(i);
    o.variance = p.variance(i);
    o.confidence = variance_cdf.confidence(p.variance(i));
  }
  return out;
}

std::vector<Prediction> ModelArtifact::predict(const Cohort& raw) const {
  return predict_inputs(preprocessor.transform(raw));
}

Vector ModelArtifact::probabilities(const Cohort& raw) const {
  const std::vector<Prediction> p = predict(raw);
  Vector out(static_cast<Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) out(static_cast<Index>(i)) = p[i].probability;
  return out;
}

InfluenceReport ModelArtifact::explain(const Vector& x, const InfluenceConfig& config,
                                       std::optional<int> label, std::string instance_id) const {
  return ArtifactExplainer(*this, config).explain(x, label, std::move(instance_id));
}

struct ArtifactExplainer::Impl {
  ModelArtifact artifact;
  std::variant<Explainer<MlpObjective>, Explainer<VdpObjective>> explainer;
};

namespace {
std::variant<Explainer<MlpObjective>, Explainer<VdpObjective>> make_explainer(
    const ModelArtifact& a, const InfluenceConfig& config) {
  const std::vector<Index> rows =
      hessian_rows(a.train_x.rows(), config.hessian_subsample, config.subsample_seed);
  const double decay = a.config.base().weight_decay;
  if (a.kind() == ModelKind::kMlp) {
    return Explainer<MlpObjective>(MlpObjective(a.mlp, a.pos_weight, decay, a.train_x, a.train_y, rows),
                                   a.feature_names(), config);
  }
  return Explainer<VdpObjective>(
      VdpObjective(a.vdp, {a.config.vdp.jitter, a.kl_weight, a.pos_weight}, decay, a.train_x, a.train_y, rows),
      a.feature_names(), config);
}
}  // namespace

ArtifactExplainer::ArtifactExplainer(const ModelArtifact& artifact, const InfluenceConfig& config)
    : impl_(new Impl{artifact, make_explainer(artifact, config)}) {}
ArtifactExplainer::~ArtifactExplainer() = default;
ArtifactExplainer::ArtifactExplainer(ArtifactExplainer&&) noexcept = default;
ArtifactExplainer& ArtifactExplainer::operator=(ArtifactExplainer&&) noexcept = default;

InfluenceReport ArtifactExplainer::explain(const Vector& x, std::optional<int> label,
                                           std::string instance_id) const {
  if (x.size() != static_cast<Index>(impl_->artifact.feature_names().size())) {
    throw Error(ErrorCode::kShapeMismatch, "explain: feature count mismatch");
  }
  const int test_label =
      label ? *label
            : (impl_->artifact.predict_inputs(Matrix(x.transpose()))[0].probability >= 0.5 ? 1 : 0);
  return std::visit([&](const auto& e) { return e.explain(x, test_label, std::move(instance_id)); },
                    impl_->explainer);
}

double ArtifactExplainer::curvature_shift() const {
  return std::visit([](const auto& e) { return e.curvature_shift(); }, impl_->explainer);
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

void check_theta(const Vector& theta, Index expected, const char* what) {
  if (theta.size() != expected) {
    throw Error(ErrorCode::kParseError, std::string(what) + ": parameter count does not match widths");
  }
}

}  // namespace

nlohmann::json ModelArtifact::to_json() const {
  nlohmann::json j;
  j["format"] = kind() == ModelKind::kMlp ? "vdpt.mlp/1" : "vdpt.vdp/1";
  j["config"] = config.to_json();
  j["feature_names"] = feature_names();
  j["preprocessing"] = preprocessor.to_json();
  j["pos_weight"] = pos_weight;
  if (kind() == ModelKind::kMlp) {
    j["params"] = {{"widths", mlp.widths()}, {"theta", vector_json(mlp.theta)}};
  } else {
    j["params"] = {{"widths", vdp.widths()}, {"theta", vector_json(vdp.theta)}};
    j["kl_weight"] = kl_weight;
    j["jitter"] = config.vdp.jitter;
    j["variance_cdf"] = variance_cdf.to_json();
  }
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < train_x.rows(); ++i) rows.push_back(vector_json(train_x.row(i).transpose()));
  j["training"] = {{"x", std::move(rows)},
                   {"y", std::vector<int>(train_y.data(), train_y.data() + train_y.size())}};
  return j;
}

ModelArtifact ModelArtifact::from_json(const nlohmann::json& j) {
  try {
    const std::string format = j.at("format").get<std::string>();
    if (format != "vdpt.mlp/1" && format != "vdpt.vdp/1") {
      throw Error(ErrorCode::kParseError, "model artifact: unknown format '" + format + "'");
    }
    ModelArtifact a;
    a.config = ModelConfig::from_json(j.at("config"));
    if ((format == "vdpt.mlp/1") != (a.kind() == ModelKind::kMlp)) {
      throw Error(ErrorCode::kParseError, "model artifact: format and config kind disagree");
    }
    a.preprocessor = Preprocessor::from_json(j.at("preprocessing"));
    a.pos_weight = j.at("pos_weight").get<double>();
    const auto widths = j.at("params").at("widths").get<std::vector<int>>();
    const Vector theta = vector_from(j.at("params").at("theta"));
    if (a.kind() == ModelKind::kMlp) {
      a.mlp = MlpParams(widths);
      check_theta(theta, a.mlp.theta.size(), "vdpt.mlp/1");
      a.mlp.theta = theta;
    } else {
      a.vdp = VdpParams(widths);
      check_theta(theta, a.vdp.theta.size(), "vdpt.vdp/1");
      a.vdp.theta = theta;
      a.kl_weight = j.at("kl_weight").get<double>();
      a.config.vdp.jitter = j.at("jitter").get<double>();
      a.variance_cdf = VarianceCdf::from_json(j.at("variance_cdf"));
    }
    const auto& rows = j.at("training").at("x");
    const auto labels = j.at("training").at("y").get<std::vector<int>>();
    const auto d = static_cast<Index>(a.feature_names().size());
    a.train_x.resize(static_cast<Index>(rows.size()), d);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const Vector r = vector_from(rows[i]);
      if (r.size() != d) throw Error(ErrorCode::kParseError, "model artifact: training row width");
      a.train_x.row(static_cast<Index>(i)) = r.transpose();
    }
    if (labels.size() != rows.size()) throw Error(ErrorCode::kParseError, "model artifact: training labels");
    a.train_y = Eigen::Map<const Labels>(labels.data(), static_cast<Index>(labels.size()));
    const Index input = a.kind() == ModelKind::kMlp ? a.mlp.input_dim() : a.vdp.input_dim();
    if (input != d) throw Error(ErrorCode::kParseError, "model artifact: input width != feature count");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("model artifact: ") + e.what());
  }
}

void ModelArtifact::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << to_json().dump() << '\n';
  if (!out) throw Error(ErrorCode::kIoError, "write failed: " + path.string());
}

ModelArtifact ModelArtifact::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
  return from_json(j);
}

Cohort default_synthetic_cohort(Index n, std::uint64_t seed) {
  SeededRng rng(seed);
  return generate_synthetic_cohort(n, SyntheticDefaults::kPrevalence, {},
                                   SyntheticDefaults::kMissingRate, rng);
}

}  // namespace vdpt
