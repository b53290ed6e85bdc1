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

// Deterministic point-estimate network: ReLU MLP with a single sigmoid logit,
// positive-class-weighted binary cross-entropy and Nesterov SGD.

#pragma once

#include <cstdint>
#include <vector>

#include "json.hpp"
#include "vdpt/cohort.hpp"
#include "vdpt/params.hpp"

namespace vdpt {

// Shared by both networks; the VDP config embeds one.
struct TrainConfig {
  std::vector<int> hidden;  // hidden-layer widths
  int epochs = 1;
  int batch_size = 0;  // 0 = full batch
  double lr = 0.01;
  double weight_decay = 0.0;
  double momentum = 0.0;
  double pos_weight = 0.0;  // <= 0: #negative / #positive of the training data
  Imbalance imbalance = Imbalance::pos_weight();
  std::uint64_t seed = 0;

  // Full-size deterministic network hyperparameters.
  static TrainConfig full_mlp();
  // Smaller profile used for desk-scale runs and the acceptance suite.
  static TrainConfig desk_mlp();

  void validate() const;
  SgdConfig sgd() const { return {lr, weight_decay, momentum}; }

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base);
};

class MlpParams {
 public:
  MlpParams() = default;
  // Zero-initialised parameters for widths {input, hidden..., 1}.
  explicit MlpParams(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  Index num_layers() const { return static_cast<Index>(widths_.size()) - 1; }
  Index input_dim() const { return widths_.empty() ? 0 : widths_.front(); }
  bool empty() const { return widths_.empty(); }

  const ParamLayout& layout() const { return layout_; }
  const ParamBlock& weight_block(Index l) const { return layout_.block(static_cast<std::size_t>(2 * l)); }
  const ParamBlock& bias_block(Index l) const { return layout_.block(static_cast<std::size_t>(2 * l + 1)); }

  ConstMatrixMap weight(Index l) const { return view(theta, weight_block(l)); }
  MatrixMap weight(Index l) { return view(theta, weight_block(l)); }
  ConstVectorMap bias(Index l) const { return vec_view(theta, bias_block(l)); }
  VectorMap bias(Index l) { return vec_view(theta, bias_block(l)); }

  // All parameters, laid out as [W_0, b_0, W_1, b_1, ...] with row-major W.
  Vector theta;

 private:
  std::vector<int> widths_;
  ParamLayout layout_;
};

// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
MlpParams init_mlp(const std::vector<int>& widths, SeededRng& rng);

// Row-per-instance batch forward.
Vector mlp_logits(const MlpParams& params, const Matrix& x);
Vector mlp_predict(const MlpParams& params, const Matrix& x);
double mlp_predict(const MlpParams& params, const Vector& x);

double sigmoid(double z);

// -[w y ln p + (1 - y) ln(1 - p)] with p clamped to [1e-12, 1 - 1e-12].
double weighted_bce(double probability, int label, double pos_weight);
double weighted_bce(const Vector& probabilities, const Labels& labels, double pos_weight);

// d(weighted_bce)/d(logit) for one instance.
double weighted_bce_logit_grad(double logit, int label, double pos_weight);

struct LossGradient {
  double loss = 0.0;
  Vector grad;
};

// 0/1 ReLU gates of each hidden layer (rows = batch, cols = units).
std::vector<Matrix> mlp_relu_gates(const MlpParams& params, const Matrix& x);

// Mean weighted BCE over the batch and its exact gradient. Passing `gates`
// freezes the ReLU pattern, which makes the result smooth in theta and x
// (the network is linear within one activation region).
LossGradient mlp_backprop(const MlpParams& params, const Matrix& x, const Labels& y,
                          double pos_weight, const std::vector<Matrix>* gates = nullptr);

// For each row i, direction . grad_theta L(x_i, y_i) (unaveraged).
Vector mlp_per_sample_dot(const MlpParams& params, const Matrix& x, const Labels& y,
                          double pos_weight, const Vector& direction,
                          const std::vector<Matrix>* gates = nullptr);

struct MlpTrainResult {
  MlpParams params;
  std::vector<double> loss_curve;  // mean data loss per epoch
  double pos_weight = 1.0;
};

// Trains on an imputed, standardized (and already rebalanced) matrix.
MlpTrainResult train_mlp(const Matrix& x, const Labels& y, const TrainConfig& config);
MlpTrainResult train_mlp(const Cohort& cohort, const TrainConfig& config);

}  // namespace vdpt
