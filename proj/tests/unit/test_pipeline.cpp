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

#include <filesystem>
#include <fstream>

#include "vdpt/pipeline.hpp"

namespace vdpt {
namespace {

ModelConfig quick(ModelKind kind) {
  ModelConfig c = ModelConfig::desk(kind);
  c.base().hidden = {8, 6};
  c.base().epochs = 4;
  c.base().batch_size = 64;
  c.base().seed = 12;
  return c;
}

const Cohort& train_cohort() {
  static const Cohort c = default_synthetic_cohort(600, 77);
  return c;
}

const Cohort& test_cohort() {
  static const Cohort c = default_synthetic_cohort(150, 78);
  return c;
}

class PipelineKinds : public ::testing::TestWithParam<ModelKind> {};

TEST_P(PipelineKinds, JsonRoundTripPredictsBitIdentically) {
  const ModelArtifact a = fit_model(train_cohort(), quick(GetParam()));
  const ModelArtifact b = ModelArtifact::from_json(nlohmann::json::parse(a.to_json().dump()));
  const auto pa = a.predict(test_cohort());
  const auto pb = b.predict(test_cohort());
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].probability, pb[i].probability);
    EXPECT_EQ(pa[i].variance, pb[i].variance);
    EXPECT_EQ(pa[i].confidence, pb[i].confidence);
  }
  EXPECT_EQ(a.to_json(), b.to_json());
}

TEST_P(PipelineKinds, SaveLoadThroughFile) {
  const ModelArtifact a = fit_model(train_cohort(), quick(GetParam()));
  const auto path = std::filesystem::temp_directory_path() /
                    ("vdpt_pipeline_" + std::string(model_kind_name(GetParam())) + ".json");
  a.save(path);
  const ModelArtifact b = ModelArtifact::load(path);
  std::filesystem::remove(path);
  EXPECT_EQ(a.probabilities(test_cohort()), b.probabilities(test_cohort()));
}

TEST_P(PipelineKinds, DeterministicGivenSeedAndSeedOverride) {
  const ModelArtifact a = fit_model(train_cohort(), quick(GetParam()));
  const ModelArtifact b = fit_model(train_cohort(), quick(GetParam()));
  EXPECT_EQ(a.probabilities(test_cohort()), b.probabilities(test_cohort()));
  const ModelArtifact c = fit_model(train_cohort(), quick(GetParam()), 99);
  EXPECT_NE(a.probabilities(test_cohort()), c.probabilities(test_cohort()));
}

TEST_P(PipelineKinds, ColumnOrderOfRawInputIsIrrelevant) {
  const ModelArtifact a = fit_model(train_cohort(), quick(GetParam()));
  std::vector<std::string> reversed(test_cohort().feature_names.rbegin(), test_cohort().feature_names.rend());
  EXPECT_EQ(a.probabilities(test_cohort()), a.probabilities(test_cohort().select(reversed)));
}

TEST_P(PipelineKinds, BatchAndSingleRowPredictionsAgree) {
  const ModelArtifact a = fit_model(train_cohort(), quick(GetParam()));
  const Vector all = a.probabilities(test_cohort());
  for (Index i : {Index{0}, Index{17}, Index{149}}) {
    const Index row[] = {i};
    EXPECT_EQ(a.probabilities(test_cohort().subset(row))(0), all(i));
  }
}

TEST_P(PipelineKinds, ExplainCoversEveryFeature) {
  const ModelArtifact a = fit_model(train_cohort(), quick(GetParam()));
  InfluenceConfig cfg;
  cfg.subsample = 50;
  cfg.hessian_subsample = 200;
  const Matrix x = a.preprocessor.transform(test_cohort());
  const InfluenceReport r = a.explain(x.row(3).transpose(), cfg, std::nullopt, "row-3");
  EXPECT_EQ(r.feature_names, a.feature_names());
  EXPECT_EQ(r.values.size(), static_cast<Index>(a.feature_names().size()));
  EXPECT_TRUE(r.values.allFinite());
  EXPECT_EQ(r.instance_id, "row-3");
  EXPECT_EQ(r.test_label, a.predict_inputs(Matrix(x.row(3)))[0].probability >= 0.5 ? 1 : 0);
}

INSTANTIATE_TEST_SUITE_P(Models, PipelineKinds, ::testing::Values(ModelKind::kMlp, ModelKind::kVdp),
                         [](const auto& info) { return std::string(model_kind_name(info.param)); });

TEST(Pipeline, StochasticModelReportsConfidence) {
  const ModelArtifact a = fit_model(train_cohort(), quick(ModelKind::kVdp));
  for (const Prediction& p : a.predict(test_cohort())) {
    ASSERT_TRUE(p.variance && p.confidence);
    EXPECT_GE(*p.variance, 0.0);
    EXPECT_GE(*p.confidence, 0.0);
    EXPECT_LE(*p.confidence, 1.0);
  }
  const ModelArtifact m = fit_model(train_cohort(), quick(ModelKind::kMlp));
  EXPECT_FALSE(m.predict(test_cohort())[0].variance.has_value());
}

TEST(Pipeline, PreprocessorImputesMissingCells) {
  const Preprocessor p = Preprocessor::fit(train_cohort());
  ASSERT_TRUE(test_cohort().has_missing());
  const Matrix x = p.transform(test_cohort());
  EXPECT_TRUE(x.allFinite());
  // Observed cells pass through the standardization unchanged otherwise.
  for (Index i = 0; i < 20; ++i) {
    for (Index j = 0; j < x.cols(); ++j) {
      if (test_cohort().missing(i, j)) continue;
      EXPECT_NEAR(x(i, j), (test_cohort().x(i, j) - p.standardization.mean(j)) / p.standardization.std(j), 1e-12);
    }
  }
}

TEST(Pipeline, ConfigProfilesAndKindNames) {
  EXPECT_EQ(parse_model_kind("deterministic"), ModelKind::kMlp);
  EXPECT_EQ(parse_model_kind("stochastic"), ModelKind::kVdp);
  EXPECT_THROW(parse_model_kind("forest"), Error);
  const ModelConfig p = ModelConfig::full(ModelKind::kVdp);
  EXPECT_EQ(p.base().hidden, (std::vector<int>{31, 93, 94}));
  const ModelConfig back = ModelConfig::from_json(p.to_json());
  EXPECT_EQ(back.to_json(), p.to_json());
}

TEST(Pipeline, MalformedArtifactIsParseError) {
  nlohmann::json j = fit_model(train_cohort(), quick(ModelKind::kMlp)).to_json();
  j["params"]["theta"].erase(0);
  try {
    ModelArtifact::from_json(j);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kParseError);
  }
  j["format"] = "something/else";
  EXPECT_THROW(ModelArtifact::from_json(j), Error);
  EXPECT_THROW(ModelArtifact::load("/nonexistent/dir/model.json"), Error);
}

}  // namespace
}  // namespace vdpt
