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

// Variational density propagation network. Every weight row carries a
// Gaussian posterior N(mu, exp(rho) I); the mean and covariance of each
// activation are pushed through the layers in closed form (first-order
// Taylor for ReLU and softmax), so a single forward pass yields both a
// prediction and its variance. Training minimizes the negative ELBO.

#pragma once

#include <vector>

#include "json.hpp"
#include "vdpt/mlp.hpp"
#include "vdpt/params.hpp"

namespace vdpt {

// Mean and covariance of a propagated activation.
struct MomentVector {
  Vector mean;
  Matrix cov;

  Index size() const { return mean.size(); }
  // Point input: zero covariance.
  static MomentVector deterministic(const Vector& x);
};

class VdpParams {
 public:
  VdpParams() = default;
  // Zero means and zero log-variances for widths {input, hidden..., classes}.
  explicit VdpParams(std::vector<int> widths);

  const std::vector<int>& widths() const { return widths_; }
  Index num_layers() const { return static_cast<Index>(widths_.size()) - 1; }
  Index input_dim() const { return widths_.empty() ? 0 : widths_.front(); }
  Index output_dim() const { return widths_.empty() ? 0 : widths_.back(); }
  bool empty() const { return widths_.empty(); }

  const ParamLayout& layout() const { return layout_; }
  const ParamBlock& w_mean_block(Index l) const { return block(l, 0); }
  const ParamBlock& w_logvar_block(Index l) const { return block(l, 1); }
  const ParamBlock& b_mean_block(Index l) const { return block(l, 2); }
  const ParamBlock& b_logvar_block(Index l) const { return block(l, 3); }

  ConstMatrixMap w_mean(Index l) const { return view(theta, w_mean_block(l)); }
  MatrixMap w_mean(Index l) { return view(theta, w_mean_block(l)); }
  ConstVectorMap w_logvar(Index l) const { return vec_view(theta, w_logvar_block(l)); }
  VectorMap w_logvar(Index l) { return vec_view(theta, w_logvar_block(l)); }
  ConstVectorMap b_mean(Index l) const { return vec_view(theta, b_mean_block(l)); }
  VectorMap b_mean(Index l) { return vec_view(theta, b_mean_block(l)); }
  ConstVectorMap b_logvar(Index l) const { return vec_view(theta, b_logvar_block(l)); }
  VectorMap b_logvar(Index l) { return vec_view(theta, b_logvar_block(l)); }

  // Per layer: [w_mean (out x in), w_logvar (out), b_mean (out), b_logvar (out)].
  // Only the mean blocks are flagged for weight decay.
  Vector theta;

 private:
  const ParamBlock& block(Index l, Index k) const {
    return layout_.block(static_cast<std::size_t>(4 * l + k));
  }
  std::vector<int> widths_;
  ParamLayout layout_;
};

struct VdpTrainConfig {
  TrainConfig base;
  int mc_samples = 1;      // moments are analytic, so one evaluation suffices
  double jitter = 1e-3;    // added to the output covariance before log-det/inverse
  double kl_weight = 0.0;  // <= 0: 1 / (number of training rows)
  double init_logvar = -6.907755278982137;  // ln(1e-3)

  static VdpTrainConfig full_vdp();
  static VdpTrainConfig desk_vdp();

  void validate() const;
  nlohmann::json to_json() const;
  static VdpTrainConfig from_json(const nlohmann::json& j, VdpTrainConfig base);
};

// Everything the loss needs besides parameters and data.
struct VdpObjectiveConfig {
  double jitter = 1e-3;
  double kl_weight = 0.0;   // used as given
  double pos_weight = 1.0;  // per-instance weight of positive rows
};

// Means: Kaiming-uniform; biases zero; all log-variances at `init_logvar`.
VdpParams init_vdp(const std::vector<int>& widths, double init_logvar, SeededRng& rng);

// ---------------------------------------------------------------------------
// Reference moment operators on full covariance matrices
// ---------------------------------------------------------------------------

MomentVector linear_propagate(const VdpParams& params, Index layer, const MomentVector& in);
MomentVector linear_propagate(const VdpParams& params, Index layer, const Vector& x);
// f = ReLU, f'(0) = 0.
MomentVector relu_propagate(const MomentVector& m);
MomentVector softmax_propagate(const MomentVector& m);

// ---------------------------------------------------------------------------
// Network-level evaluation (compacted to the active ReLU units)
// ---------------------------------------------------------------------------

// Output moments for one instance: softmax mean and covariance, pre-jitter.
MomentVector vdp_forward(const VdpParams& params, const Vector& x);

struct VdpPrediction {
  double probability = 0.0;  // mean of the positive-class output
  double variance = 0.0;     // its variance, pre-jitter
};
VdpPrediction predict_vdp(const VdpParams& params, const Vector& x);

struct VdpBatchPrediction {
  Vector probability;
  Vector variance;
};
VdpBatchPrediction predict_vdp(const VdpParams& params, const Matrix& x);

// Closed-form KL(q || N(0, I)) summed over all weights and biases.
double vdp_kl(const VdpParams& params);
Vector vdp_kl_gradient(const VdpParams& params);

struct ElboResult {
  double loss = 0.0;  // mean weighted NLL + kl_weight * KL
  double nll = 0.0;   // mean weighted NLL
  double kl = 0.0;
  std::vector<Vector> output_mean;  // per instance
  std::vector<Matrix> output_cov;   // per instance, pre-jitter
};
ElboResult elbo(const VdpParams& params, const Matrix& x, const Labels& y,
                const VdpObjectiveConfig& config);

// Gradient of ElboResult::loss with respect to theta.
// Indices of the hidden units whose mean pre-activation is positive, per
// hidden layer. Passing these back into the gradient routines freezes the
// ReLU pattern, so finite differences never straddle a kink.
using VdpGates = std::vector<std::vector<Index>>;
VdpGates vdp_relu_gates(const VdpParams& params, const Vector& x);

LossGradient elbo_gradients(const VdpParams& params, const Matrix& x, const Labels& y,
                            const VdpObjectiveConfig& config,
                            const std::vector<VdpGates>* gates = nullptr);

// Weighted Gaussian NLL of one instance and its gradient; no KL term.
LossGradient vdp_instance_gradient(const VdpParams& params, const Vector& x, int label,
                                   const VdpObjectiveConfig& config,
                                   const VdpGates* gates = nullptr);

struct VdpTrainResult {
  VdpParams params;
  std::vector<double> loss_curve;  // mean negative ELBO per epoch
  double pos_weight = 1.0;
  double kl_weight = 0.0;
};

// Trains on an imputed, standardized (and already rebalanced) matrix.
VdpTrainResult train_vdp(const Matrix& x, const Labels& y, const VdpTrainConfig& config);
VdpTrainResult train_vdp(const Cohort& cohort, const VdpTrainConfig& config);

}  // namespace vdpt
