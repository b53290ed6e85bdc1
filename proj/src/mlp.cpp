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

#include "vdpt/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace vdpt {

// ---------------------------------------------------------------------------
// TrainConfig
// ---------------------------------------------------------------------------

TrainConfig TrainConfig::full_mlp() {
  TrainConfig c;
  c.hidden = {197, 198, 112};
  c.epochs = 127;
  c.batch_size = 0;
  c.lr = 0.03104;
  c.weight_decay = 0.0104;
  c.momentum = 0.4204;
  c.pos_weight = 14.80;
  c.imbalance = Imbalance::pos_weight();
  return c;
}

TrainConfig TrainConfig::desk_mlp() {
  TrainConfig c = full_mlp();
  c.hidden = {32, 32, 16};
  c.pos_weight = 0.0;
  return c;
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw Error(ErrorCode::kInvalidArgument, "train config: lr must be > 0");
  if (!(weight_decay >= 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train config: weight_decay must be >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "train config: momentum must be in [0,1)");
  }
  if (epochs < 0) throw Error(ErrorCode::kInvalidArgument, "train config: epochs must be >= 0");
  if (batch_size < 0) throw Error(ErrorCode::kInvalidArgument, "train config: batch_size < 0");
  for (int w : hidden) {
    if (w < 1) throw Error(ErrorCode::kInvalidArgument, "train config: widths must be >= 1");
  }
}

nlohmann::json TrainConfig::to_json() const {
  return {{"hidden", hidden},       {"epochs", epochs},
          {"batch_size", batch_size}, {"lr", lr},
          {"weight_decay", weight_decay}, {"momentum", momentum},
          {"pos_weight", pos_weight}, {"imbalance", imbalance.name()},
          {"seed", seed}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig base) {
  if (j.contains("hidden")) base.hidden = j.at("hidden").get<std::vector<int>>();
  if (j.contains("epochs")) base.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) base.batch_size = j.at("batch_size").get<int>();
  if (j.contains("lr")) base.lr = j.at("lr").get<double>();
  if (j.contains("weight_decay")) base.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("momentum")) base.momentum = j.at("momentum").get<double>();
  if (j.contains("pos_weight")) base.pos_weight = j.at("pos_weight").get<double>();
  if (j.contains("imbalance")) base.imbalance = Imbalance::parse(j.at("imbalance").get<std::string>());
  if (j.contains("seed")) base.seed = j.at("seed").get<std::uint64_t>();
  return base;
}

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------

MlpParams::MlpParams(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2 || widths_.back() != 1) {
    throw Error(ErrorCode::kShapeMismatch, "MlpParams: widths must be {input, ..., 1}");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    layout_.add("layer" + std::to_string(l) + ".weight", widths_[l + 1], widths_[l]);
    layout_.add("layer" + std::to_string(l) + ".bias", widths_[l + 1], 1, false);
  }
  theta = Vector::Zero(layout_.size());
}

MlpParams init_mlp(const std::vector<int>& widths, SeededRng& rng) {
  MlpParams p(widths);
  for (Index l = 0; l < p.num_layers(); ++l) {
    auto w = p.weight(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
  }
  return p;
}

double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

namespace {

void check_input(const MlpParams& params, const Matrix& x) {
  if (params.empty()) throw Error(ErrorCode::kNotTrained, "mlp: empty parameters");
  if (x.cols() != params.input_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "mlp: expected " + std::to_string(params.input_dim()) +
                                               " features, got " + std::to_string(x.cols()));
  }
}

// Pre-activations Z_l, activations A_l (A_0 = x) and the 0/1 ReLU gates.
struct ForwardCache {
  std::vector<Matrix> pre;
  std::vector<Matrix> act;
  std::vector<Matrix> gate;
};

// With `fixed` set, hidden units open and close according to those gates
// instead of the sign of their own pre-activation.
ForwardCache forward_cache(const MlpParams& params, const Matrix& x,
                           const std::vector<Matrix>* fixed = nullptr) {
  if (fixed != nullptr) {
    bool ok = static_cast<Index>(fixed->size()) == params.num_layers() - 1;
    for (std::size_t l = 0; ok && l < fixed->size(); ++l) {
      ok = (*fixed)[l].rows() == x.rows() && (*fixed)[l].cols() == params.weight(static_cast<Index>(l)).rows();
    }
    if (!ok) throw Error(ErrorCode::kShapeMismatch, "mlp: ReLU gate shapes do not match the batch");
  }
  ForwardCache cache;
  cache.act.push_back(x);
  for (Index l = 0; l < params.num_layers(); ++l) {
    Matrix z = cache.act.back() * params.weight(l).transpose();
    z.rowwise() += params.bias(l).transpose();
    cache.pre.push_back(z);
    if (l + 1 == params.num_layers()) break;
    Matrix g = fixed != nullptr ? (*fixed)[static_cast<std::size_t>(l)]
                                : Matrix((z.array() > 0.0).cast<double>());
    cache.act.push_back(z.cwiseProduct(g));
    cache.gate.push_back(std::move(g));
  }
  return cache;
}

// Returns per-sample dL/dZ_l for every layer, unaveraged.
std::vector<Matrix> backward_deltas(const MlpParams& params, const ForwardCache& cache,
                                    const Labels& y, double pos_weight) {
  const Index n = cache.act.front().rows();
  const Index layers = params.num_layers();
  std::vector<Matrix> deltas(static_cast<std::size_t>(layers));
  Matrix delta(n, 1);
  for (Index i = 0; i < n; ++i) {
    delta(i, 0) = weighted_bce_logit_grad(cache.pre.back()(i, 0), y(i), pos_weight);
  }
  for (Index l = layers - 1; l >= 0; --l) {
    deltas[static_cast<std::size_t>(l)] = delta;
    if (l == 0) break;
    Matrix back = delta * params.weight(l);
    back.array() *= cache.gate[static_cast<std::size_t>(l - 1)].array();
    delta = std::move(back);
  }
  return deltas;
}

}  // namespace

// Inference runs one row at a time so a batch and a single instance take
// exactly the same arithmetic path (bit-identical outputs).
Vector mlp_logits(const MlpParams& params, const Matrix& x) {
  check_input(params, x);
  Vector out(x.rows());
  Vector a, z;
  for (Index i = 0; i < x.rows(); ++i) {
    a = x.row(i).transpose();
    for (Index l = 0; l < params.num_layers(); ++l) {
      z.noalias() = params.weight(l) * a;
      z += params.bias(l);
      if (l + 1 < params.num_layers()) a = z.cwiseMax(0.0);
    }
    out(i) = z(0);
  }
  return out;
}

Vector mlp_predict(const MlpParams& params, const Matrix& x) {
  return mlp_logits(params, x).unaryExpr([](double z) { return sigmoid(z); });
}

double mlp_predict(const MlpParams& params, const Vector& x) {
  return mlp_predict(params, Matrix(x.transpose()))(0);
}

double weighted_bce(double probability, int label, double pos_weight) {
  const double p = std::clamp(probability, 1e-12, 1.0 - 1e-12);
  return -(pos_weight * label * std::log(p) + (1 - label) * std::log(1.0 - p));
}

double weighted_bce(const Vector& probabilities, const Labels& labels, double pos_weight) {
  if (probabilities.size() != labels.size() || labels.size() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "weighted_bce: size mismatch");
  }
  double acc = 0.0;
  for (Index i = 0; i < labels.size(); ++i) acc += weighted_bce(probabilities(i), labels(i), pos_weight);
  return acc / static_cast<double>(labels.size());
}

double weighted_bce_logit_grad(double logit, int label, double pos_weight) {
  const double p = sigmoid(logit);
  return label != 0 ? pos_weight * (p - 1.0) : p;
}

std::vector<Matrix> mlp_relu_gates(const MlpParams& params, const Matrix& x) {
  check_input(params, x);
  return forward_cache(params, x).gate;
}

LossGradient mlp_backprop(const MlpParams& params, const Matrix& x, const Labels& y,
                          double pos_weight, const std::vector<Matrix>* gates) {
  check_input(params, x);
  if (x.rows() != y.size() || x.rows() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "mlp_backprop: batch size mismatch");
  }
  const ForwardCache cache = forward_cache(params, x, gates);
  const auto deltas = backward_deltas(params, cache, y, pos_weight);
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  LossGradient out;
  out.grad = Vector::Zero(params.theta.size());
  for (Index l = 0; l < params.num_layers(); ++l) {
    const auto& delta = deltas[static_cast<std::size_t>(l)];
    view(out.grad, params.weight_block(l)) =
        inv_n * delta.transpose() * cache.act[static_cast<std::size_t>(l)];
    vec_view(out.grad, params.bias_block(l)) = inv_n * delta.colwise().sum().transpose();
  }
  double loss = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    loss += weighted_bce(sigmoid(cache.pre.back()(i, 0)), y(i), pos_weight);
  }
  out.loss = loss * inv_n;
  return out;
}

Vector mlp_per_sample_dot(const MlpParams& params, const Matrix& x, const Labels& y,
                          double pos_weight, const Vector& direction,
                          const std::vector<Matrix>* gates) {
  check_input(params, x);
  if (direction.size() != params.theta.size() || x.rows() != y.size()) {
    throw Error(ErrorCode::kShapeMismatch, "mlp_per_sample_dot: size mismatch");
  }
  const ForwardCache cache = forward_cache(params, x, gates);
  const auto deltas = backward_deltas(params, cache, y, pos_weight);
  Vector out = Vector::Zero(x.rows());
  for (Index l = 0; l < params.num_layers(); ++l) {
    const auto dw = view(direction, params.weight_block(l));
    const auto db = vec_view(direction, params.bias_block(l));
    Matrix proj = cache.act[static_cast<std::size_t>(l)] * dw.transpose();
    proj.rowwise() += db.transpose();
    out += deltas[static_cast<std::size_t>(l)].cwiseProduct(proj).rowwise().sum();
  }
  return out;
}

MlpTrainResult train_mlp(const Matrix& x, const Labels& y, const TrainConfig& config) {
  config.validate();
  if (x.rows() != y.size() || x.rows() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "train_mlp: empty or mismatched data");
  }
  SeededRng rng(config.seed);
  SeededRng init_rng = rng.split(0x11);
  SeededRng batch_rng = rng.split(0x22);
  std::vector<int> widths{static_cast<int>(x.cols())};
  widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
  widths.push_back(1);

  MlpTrainResult out;
  out.params = init_mlp(widths, init_rng);
  if (config.pos_weight > 0.0) {
    out.pos_weight = config.pos_weight;
  } else {
    const double pos = static_cast<double>(y.sum());
    out.pos_weight = pos > 0.0 ? (static_cast<double>(y.size()) - pos) / pos : 1.0;
  }
  const Index n = x.rows();
  const Index batch = config.batch_size <= 0 ? n : std::min<Index>(config.batch_size, n);
  Vector velocity = Vector::Zero(out.params.theta.size());
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const SgdConfig sgd = config.sgd();

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    if (batch < n) batch_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      LossGradient lg;
      if (len == n && batch == n) {
        lg = mlp_backprop(out.params, x, y, out.pos_weight);
      } else {
        Matrix xb(len, x.cols());
        Labels yb(len);
        for (Index i = 0; i < len; ++i) {
          xb.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
          yb(i) = y(order[static_cast<std::size_t>(start + i)]);
        }
        lg = mlp_backprop(out.params, xb, yb, out.pos_weight);
      }
      epoch_loss += lg.loss * static_cast<double>(len);
      sgd_nesterov_step(out.params.theta, lg.grad, velocity, sgd, out.params.layout());
    }
    out.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  return out;
}

MlpTrainResult train_mlp(const Cohort& cohort, const TrainConfig& config) {
  if (cohort.has_missing()) {
    throw Error(ErrorCode::kInvalidArgument, "train_mlp: cohort has missing cells; impute first");
  }
  return train_mlp(cohort.x, cohort.y, config);
}

}  // namespace vdpt
