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

#include "vdpt/vdp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

namespace vdpt {

MomentVector MomentVector::deterministic(const Vector& x) {
  return {x, Matrix::Zero(x.size(), x.size())};
}

// ---------------------------------------------------------------------------
// Parameters and configuration
// ---------------------------------------------------------------------------

VdpParams::VdpParams(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 2 || widths_.back() < 2) {
    throw Error(ErrorCode::kShapeMismatch, "VdpParams: widths must be {input, ..., classes>=2}");
  }
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const std::string p = "layer" + std::to_string(l);
    layout_.add(p + ".w_mean", widths_[l + 1], widths_[l], true);
    layout_.add(p + ".w_logvar", widths_[l + 1], 1, false);
    layout_.add(p + ".b_mean", widths_[l + 1], 1, false);
    layout_.add(p + ".b_logvar", widths_[l + 1], 1, false);
  }
  theta = Vector::Zero(layout_.size());
}

VdpTrainConfig VdpTrainConfig::full_vdp() {
  VdpTrainConfig c;
  c.base.hidden = {31, 93, 94};
  c.base.epochs = 18;
  c.base.batch_size = 1000;
  c.base.lr = 0.0022;
  c.base.weight_decay = 0.0064;
  c.base.momentum = 0.7589;
  c.base.pos_weight = 0.0;
  c.base.imbalance = Imbalance::undersample();
  return c;
}

VdpTrainConfig VdpTrainConfig::desk_vdp() {
  VdpTrainConfig c = full_vdp();
  c.base.hidden = {16, 16};
  c.base.epochs = 20;
  c.base.batch_size = 64;
  c.base.lr = 0.0022;
  // Undersampling leaves too few rows at desk scale, so the class weight
  // carries the imbalance instead. The wider jitter softens the Gaussian
  // output likelihood, which is very stiff while the learned variances are
  // still near zero.
  c.base.imbalance = Imbalance::pos_weight();
  c.base.pos_weight = 0.0;
  c.jitter = 1e-2;
  return c;
}

void VdpTrainConfig::validate() const {
  base.validate();
  if (mc_samples != 1) {
    throw Error(ErrorCode::kInvalidArgument, "vdp config: moments are analytic; mc_samples must be 1");
  }
  if (!(jitter > 0.0)) throw Error(ErrorCode::kInvalidArgument, "vdp config: jitter must be > 0");
  if (!std::isfinite(init_logvar)) {
    throw Error(ErrorCode::kInvalidArgument, "vdp config: init_logvar must be finite");
  }
}

nlohmann::json VdpTrainConfig::to_json() const {
  nlohmann::json j = base.to_json();
  j["mc_samples"] = mc_samples;
  j["jitter"] = jitter;
  j["kl_weight"] = kl_weight;
  j["init_logvar"] = init_logvar;
  return j;
}

VdpTrainConfig VdpTrainConfig::from_json(const nlohmann::json& j, VdpTrainConfig base) {
  base.base = TrainConfig::from_json(j, base.base);
  if (j.contains("mc_samples")) base.mc_samples = j.at("mc_samples").get<int>();
  if (j.contains("jitter")) base.jitter = j.at("jitter").get<double>();
  if (j.contains("kl_weight")) base.kl_weight = j.at("kl_weight").get<double>();
  if (j.contains("init_logvar")) base.init_logvar = j.at("init_logvar").get<double>();
  return base;
}

VdpParams init_vdp(const std::vector<int>& widths, double init_logvar, SeededRng& rng) {
  VdpParams p(widths);
  for (Index l = 0; l < p.num_layers(); ++l) {
    auto w = p.w_mean(l);
    const double bound = std::sqrt(6.0 / static_cast<double>(w.cols()));
    for (Index i = 0; i < w.rows(); ++i) {
      for (Index j = 0; j < w.cols(); ++j) w(i, j) = rng.uniform(-bound, bound);
    }
    p.w_logvar(l).setConstant(init_logvar);
    p.b_logvar(l).setConstant(init_logvar);
  }
  return p;
}

// ---------------------------------------------------------------------------
// Reference operators
// ---------------------------------------------------------------------------

namespace {

void check_layer(const VdpParams& params, Index layer, Index in_dim) {
  if (params.empty()) throw Error(ErrorCode::kNotTrained, "vdp: empty parameters");
  if (layer < 0 || layer >= params.num_layers()) {
    throw Error(ErrorCode::kShapeMismatch, "vdp: layer index out of range");
  }
  if (in_dim != params.widths()[static_cast<std::size_t>(layer)]) {
    throw Error(ErrorCode::kShapeMismatch, "vdp: layer " + std::to_string(layer) + " expects " +
                                               std::to_string(params.widths()[static_cast<std::size_t>(layer)]) +
                                               " inputs, got " + std::to_string(in_dim));
  }
}

Vector softmax(const Vector& u) {
  const double m = u.maxCoeff();
  Vector e = (u.array() - m).exp().matrix();
  return e / e.sum();
}

Matrix softmax_jacobian(const Vector& p) {
  Matrix j = -p * p.transpose();
  j.diagonal() += p;
  return j;
}

}  // namespace

MomentVector linear_propagate(const VdpParams& params, Index layer, const MomentVector& in) {
  check_layer(params, layer, in.size());
  if (in.cov.rows() != in.size() || in.cov.cols() != in.size()) {
    throw Error(ErrorCode::kShapeMismatch, "linear_propagate: covariance shape");
  }
  const auto m = params.w_mean(layer);
  const Vector sw = params.w_logvar(layer).array().exp();
  const Vector sb = params.b_logvar(layer).array().exp();
  const double t = in.cov.trace() + in.mean.squaredNorm();
  MomentVector out;
  out.mean = m * in.mean + params.b_mean(layer);
  out.cov = m * in.cov * m.transpose();
  out.cov.diagonal() += sw * t + sb;
  return out;
}

MomentVector linear_propagate(const VdpParams& params, Index layer, const Vector& x) {
  return linear_propagate(params, layer, MomentVector::deterministic(x));
}

MomentVector relu_propagate(const MomentVector& m) {
  const Vector d = (m.mean.array() > 0.0).cast<double>();
  MomentVector out;
  out.mean = m.mean.cwiseMax(0.0);
  out.cov = d.asDiagonal() * m.cov * d.asDiagonal();
  out.cov.diagonal() = out.cov.diagonal().cwiseMax(0.0);
  return out;
}

MomentVector softmax_propagate(const MomentVector& m) {
  MomentVector out;
  out.mean = softmax(m.mean);
  const Matrix j = softmax_jacobian(out.mean);
  out.cov = j * m.cov * j;
  return out;
}

// ---------------------------------------------------------------------------
// Compacted per-instance forward / backward
// ---------------------------------------------------------------------------

namespace {

// Covariance only has support on ReLU units that are active, so each layer
// keeps the covariance of its active inputs and the row indices it feeds.
struct LayerTrace {
  Vector mu_in;                 // full-length input mean
  std::vector<Index> in_active; // inputs that carry covariance
  Matrix cov_in;                // covariance over in_active
  double t = 0.0;               // tr(cov_in) + |mu_in|^2
  std::vector<Index> out_rows;  // outputs whose covariance is propagated
};

struct InstanceTrace {
  std::vector<LayerTrace> layers;
  Vector u;      // output pre-activation mean
  Matrix cov_u;  // output pre-activation covariance
  Vector p;      // softmax mean
  Matrix jac;    // softmax Jacobian at u
  Matrix cov_y;  // output covariance, pre-jitter
};

// With `fixed` set, the hidden units that pass mean and covariance are taken
// from it instead of from the sign of the mean pre-activation.
void forward_trace(const VdpParams& params, const Vector& x, InstanceTrace& tr,
                   const VdpGates* fixed = nullptr) {
  if (params.empty()) throw Error(ErrorCode::kNotTrained, "vdp: empty parameters");
  if (x.size() != params.input_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "vdp: expected " + std::to_string(params.input_dim()) +
                                               " features, got " + std::to_string(x.size()));
  }
  const Index layers = params.num_layers();
  if (fixed != nullptr && static_cast<Index>(fixed->size()) != layers - 1) {
    throw Error(ErrorCode::kShapeMismatch, "vdp: ReLU gates do not match the layer count");
  }
  tr.layers.resize(static_cast<std::size_t>(layers));
  Vector mu = x;
  std::vector<Index> active;
  Matrix cov(0, 0);
  for (Index l = 0; l < layers; ++l) {
    LayerTrace& lt = tr.layers[static_cast<std::size_t>(l)];
    const auto m = params.w_mean(l);
    const auto rho_w = params.w_logvar(l);
    const auto rho_b = params.b_logvar(l);
    lt.mu_in = mu;
    lt.in_active = active;
    lt.cov_in = cov;
    lt.t = cov.trace() + mu.squaredNorm();
    Vector mu_z = m * mu + params.b_mean(l);
    const bool last = l + 1 == layers;
    lt.out_rows.clear();
    if (!last && fixed != nullptr) {
      lt.out_rows = (*fixed)[static_cast<std::size_t>(l)];
      for (Index i : lt.out_rows) {
        if (i < 0 || i >= mu_z.size()) throw Error(ErrorCode::kShapeMismatch, "vdp: gate index out of range");
      }
    } else {
      for (Index i = 0; i < mu_z.size(); ++i) {
        if (last || mu_z(i) > 0.0) lt.out_rows.push_back(i);
      }
    }
    const auto r = static_cast<Index>(lt.out_rows.size());
    Matrix cz = Matrix::Zero(r, r);
    if (!active.empty() && r > 0) {
      const Matrix msub = m(lt.out_rows, active);
      cz.noalias() = msub * cov * msub.transpose();
    }
    for (Index i = 0; i < r; ++i) {
      const Index row = lt.out_rows[static_cast<std::size_t>(i)];
      cz(i, i) += std::exp(rho_w(row)) * lt.t + std::exp(rho_b(row));
    }
    if (last) {
      tr.u = std::move(mu_z);
      tr.cov_u = std::move(cz);
    } else {
      mu = Vector::Zero(mu_z.size());
      for (Index i : lt.out_rows) mu(i) = mu_z(i);
      active = lt.out_rows;
      cov = std::move(cz);
    }
  }
  tr.p = softmax(tr.u);
  tr.jac = softmax_jacobian(tr.p);
  tr.cov_y.noalias() = tr.jac * tr.cov_u * tr.jac;
}

// Factorizes cov_y + eps I, growing eps tenfold up to ten times.
struct JitteredFactor {
  Eigen::LLT<Matrix> llt;
  double jitter = 0.0;
};

JitteredFactor factor_output(const Matrix& cov_y, double jitter) {
  JitteredFactor f;
  double eps = jitter;
  for (int attempt = 0; attempt <= 10; ++attempt, eps *= 10.0) {
    Matrix s = cov_y;
    s.diagonal().array() += eps;
    f.llt.compute(s);
    if (f.llt.info() == Eigen::Success && f.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      f.jitter = eps;
      return f;
    }
  }
  std::ostringstream msg;
  msg << "vdp: output covariance not positive definite after jitter " << eps / 10.0
      << "; diagonal = " << cov_y.diagonal().transpose();
  throw Error(ErrorCode::kNotPositiveDefinite, msg.str());
}

Vector one_hot(int label, Index classes) {
  if (label < 0 || label >= classes) {
    throw Error(ErrorCode::kInvalidLabel, "vdp: label " + std::to_string(label) + " out of range");
  }
  Vector y = Vector::Zero(classes);
  y(label) = 1.0;
  return y;
}

struct NllTerms {
  double nll = 0.0;
  Vector g_p;    // dNLL/dp
  Matrix g_cov;  // dNLL/dcov_y
};

NllTerms gaussian_nll(const InstanceTrace& tr, int label, double jitter, bool want_grad) {
  const Index l = tr.p.size();
  const JitteredFactor f = factor_output(tr.cov_y, jitter);
  const Vector r = one_hot(label, l) - tr.p;
  const Vector s_inv_r = f.llt.solve(r);
  const double logdet = 2.0 * f.llt.matrixLLT().diagonal().array().log().sum();
  NllTerms out;
  out.nll = 0.5 * static_cast<double>(l) * std::log(2.0 * std::numbers::pi) + 0.5 * logdet +
            0.5 * r.dot(s_inv_r);
  if (want_grad) {
    const Matrix s_inv = f.llt.solve(Matrix::Identity(l, l));
    out.g_cov = 0.5 * s_inv - 0.5 * s_inv_r * s_inv_r.transpose();
    out.g_p = -s_inv_r;
  }
  return out;
}

// Accumulates scale * d(NLL)/d(theta) into grad.
void backward_trace(const VdpParams& params, const InstanceTrace& tr, const NllTerms& terms,
                    double scale, Vector& grad) {
  // Softmax moments.
  const Matrix& jac = tr.jac;
  const Matrix g_s = scale * terms.g_cov;
  Matrix g_cov = jac * g_s * jac;
  const Matrix g_jac = 2.0 * g_s * jac * tr.cov_u;
  Vector g_p = scale * terms.g_p;
  g_p += g_jac.diagonal() - g_jac * tr.p - g_jac.transpose() * tr.p;
  Vector g_mu = jac * g_p;

  for (Index l = params.num_layers() - 1; l >= 0; --l) {
    const LayerTrace& lt = tr.layers[static_cast<std::size_t>(l)];
    const auto m = params.w_mean(l);
    const auto rho_w = params.w_logvar(l);
    const auto rho_b = params.b_logvar(l);
    auto d_m = view(grad, params.w_mean_block(l));
    auto d_rho_w = vec_view(grad, params.w_logvar_block(l));
    auto d_b = vec_view(grad, params.b_mean_block(l));
    auto d_rho_b = vec_view(grad, params.b_logvar_block(l));

    d_m.noalias() += g_mu * lt.mu_in.transpose();
    d_b += g_mu;
    double c = 0.0;
    for (std::size_t i = 0; i < lt.out_rows.size(); ++i) {
      const Index row = lt.out_rows[i];
      const double gii = g_cov(static_cast<Index>(i), static_cast<Index>(i));
      const double sw = std::exp(rho_w(row));
      d_rho_w(row) += gii * sw * lt.t;
      d_rho_b(row) += gii * std::exp(rho_b(row));
      c += gii * sw;
    }
    if (l == 0) break;

    Vector g_mu_in = m.transpose() * g_mu + 2.0 * c * lt.mu_in;
    const auto a = static_cast<Index>(lt.in_active.size());
    Matrix g_cov_in = Matrix::Identity(a, a) * c;
    if (a > 0 && !lt.out_rows.empty()) {
      const Matrix msub = m(lt.out_rows, lt.in_active);
      const Matrix gm = g_cov * msub;
      d_m(lt.out_rows, lt.in_active) += 2.0 * gm * lt.cov_in;
      g_cov_in.noalias() += msub.transpose() * gm;
    }
    // ReLU: the mean passes through active units only and the covariance
    // block already lives on them.
    Vector g_mu_prev = Vector::Zero(g_mu_in.size());
    for (Index i : lt.in_active) g_mu_prev(i) = g_mu_in(i);
    g_mu = std::move(g_mu_prev);
    g_cov = std::move(g_cov_in);
  }
}

double instance_weight(int label, double pos_weight) { return label != 0 ? pos_weight : 1.0; }

void check_batch(const VdpParams& params, const Matrix& x, const Labels& y) {
  if (params.empty()) throw Error(ErrorCode::kNotTrained, "vdp: empty parameters");
  if (x.rows() != y.size() || x.rows() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "vdp: empty or mismatched batch");
  }
  if (x.cols() != params.input_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "vdp: expected " + std::to_string(params.input_dim()) +
                                               " features, got " + std::to_string(x.cols()));
  }
}

}  // namespace

MomentVector vdp_forward(const VdpParams& params, const Vector& x) {
  InstanceTrace tr;
  forward_trace(params, x, tr);
  return {tr.p, tr.cov_y};
}

VdpPrediction predict_vdp(const VdpParams& params, const Vector& x) {
  InstanceTrace tr;
  forward_trace(params, x, tr);
  const Index pos = params.output_dim() - 1;
  return {tr.p(pos), std::max(tr.cov_y(pos, pos), 0.0)};
}

VdpBatchPrediction predict_vdp(const VdpParams& params, const Matrix& x) {
  if (x.cols() != params.input_dim()) {
    throw Error(ErrorCode::kShapeMismatch, "predict_vdp: expected " +
                                               std::to_string(params.input_dim()) + " features");
  }
  VdpBatchPrediction out{Vector(x.rows()), Vector(x.rows())};
  for (Index i = 0; i < x.rows(); ++i) {
    const VdpPrediction p = predict_vdp(params, Vector(x.row(i).transpose()));
    out.probability(i) = p.probability;
    out.variance(i) = p.variance;
  }
  return out;
}

double vdp_kl(const VdpParams& params) {
  double kl = 0.0;
  for (Index l = 0; l < params.num_layers(); ++l) {
    const auto m = params.w_mean(l);
    const auto rho = params.w_logvar(l);
    const double in = static_cast<double>(m.cols());
    for (Index r = 0; r < m.rows(); ++r) {
      kl += 0.5 * (m.row(r).squaredNorm() + in * std::exp(rho(r)) - in - in * rho(r));
    }
    const auto mb = params.b_mean(l);
    const auto rb = params.b_logvar(l);
    for (Index r = 0; r < mb.size(); ++r) {
      kl += 0.5 * (mb(r) * mb(r) + std::exp(rb(r)) - 1.0 - rb(r));
    }
  }
  return kl;
}

Vector vdp_kl_gradient(const VdpParams& params) {
  Vector g = Vector::Zero(params.theta.size());
  for (Index l = 0; l < params.num_layers(); ++l) {
    const double in = static_cast<double>(params.w_mean(l).cols());
    view(g, params.w_mean_block(l)) = params.w_mean(l);
    vec_view(g, params.w_logvar_block(l)) =
        0.5 * in * (params.w_logvar(l).array().exp() - 1.0).matrix();
    vec_view(g, params.b_mean_block(l)) = params.b_mean(l);
    vec_view(g, params.b_logvar_block(l)) = 0.5 * (params.b_logvar(l).array().exp() - 1.0).matrix();
  }
  return g;
}

ElboResult elbo(const VdpParams& params, const Matrix& x, const Labels& y,
                const VdpObjectiveConfig& config) {
  check_batch(params, x, y);
  ElboResult out;
  InstanceTrace tr;
  double acc = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    forward_trace(params, x.row(i).transpose(), tr);
    const NllTerms t = gaussian_nll(tr, y(i), config.jitter, false);
    acc += instance_weight(y(i), config.pos_weight) * t.nll;
    out.output_mean.push_back(tr.p);
    out.output_cov.push_back(tr.cov_y);
  }
  out.nll = acc / static_cast<double>(x.rows());
  out.kl = vdp_kl(params);
  out.loss = out.nll + config.kl_weight * out.kl;
  return out;
}

VdpGates vdp_relu_gates(const VdpParams& params, const Vector& x) {
  InstanceTrace tr;
  forward_trace(params, x, tr);
  VdpGates gates;
  for (std::size_t l = 0; l + 1 < tr.layers.size(); ++l) gates.push_back(tr.layers[l].out_rows);
  return gates;
}

LossGradient elbo_gradients(const VdpParams& params, const Matrix& x, const Labels& y,
                            const VdpObjectiveConfig& config, const std::vector<VdpGates>* gates) {
  check_batch(params, x, y);
  if (gates != nullptr && static_cast<Index>(gates->size()) != x.rows()) {
    throw Error(ErrorCode::kShapeMismatch, "elbo_gradients: one gate set per row expected");
  }
  LossGradient out;
  out.grad = Vector::Zero(params.theta.size());
  InstanceTrace tr;
  const double inv_n = 1.0 / static_cast<double>(x.rows());
  double acc = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    forward_trace(params, x.row(i).transpose(), tr,
                  gates != nullptr ? &(*gates)[static_cast<std::size_t>(i)] : nullptr);
    const NllTerms t = gaussian_nll(tr, y(i), config.jitter, true);
    const double w = instance_weight(y(i), config.pos_weight);
    acc += w * t.nll;
    backward_trace(params, tr, t, w * inv_n, out.grad);
  }
  const double kl = vdp_kl(params);
  out.loss = acc * inv_n + config.kl_weight * kl;
  if (config.kl_weight != 0.0) out.grad += config.kl_weight * vdp_kl_gradient(params);
  return out;
}

LossGradient vdp_instance_gradient(const VdpParams& params, const Vector& x, int label,
                                   const VdpObjectiveConfig& config, const VdpGates* gates) {
  InstanceTrace tr;
  forward_trace(params, x, tr, gates);
  const NllTerms t = gaussian_nll(tr, label, config.jitter, true);
  const double w = instance_weight(label, config.pos_weight);
  LossGradient out;
  out.loss = w * t.nll;
  out.grad = Vector::Zero(params.theta.size());
  backward_trace(params, tr, t, w, out.grad);
  return out;
}

VdpTrainResult train_vdp(const Matrix& x, const Labels& y, const VdpTrainConfig& config) {
  config.validate();
  if (x.rows() != y.size() || x.rows() == 0) {
    throw Error(ErrorCode::kShapeMismatch, "train_vdp: empty or mismatched data");
  }
  const TrainConfig& base = config.base;
  SeededRng rng(base.seed);
  SeededRng init_rng = rng.split(0x11);
  SeededRng batch_rng = rng.split(0x22);
  std::vector<int> widths{static_cast<int>(x.cols())};
  widths.insert(widths.end(), base.hidden.begin(), base.hidden.end());
  widths.push_back(2);

  VdpTrainResult out;
  out.params = init_vdp(widths, config.init_logvar, init_rng);
  if (base.pos_weight > 0.0) {
    out.pos_weight = base.pos_weight;
  } else {
    const double pos = static_cast<double>(y.sum());
    out.pos_weight = pos > 0.0 ? (static_cast<double>(y.size()) - pos) / pos : 1.0;
  }
  const Index n = x.rows();
  out.kl_weight = config.kl_weight > 0.0 ? config.kl_weight : 1.0 / static_cast<double>(n);
  const VdpObjectiveConfig objective{config.jitter, out.kl_weight, out.pos_weight};

  const Index batch = base.batch_size <= 0 ? n : std::min<Index>(base.batch_size, n);
  Vector velocity = Vector::Zero(out.params.theta.size());
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  const SgdConfig sgd = base.sgd();

  for (int epoch = 0; epoch < base.epochs; ++epoch) {
    if (batch < n) batch_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      Matrix xb(len, x.cols());
      Labels yb(len);
      for (Index i = 0; i < len; ++i) {
        xb.row(i) = x.row(order[static_cast<std::size_t>(start + i)]);
        yb(i) = y(order[static_cast<std::size_t>(start + i)]);
      }
      const LossGradient lg = elbo_gradients(out.params, xb, yb, objective);
      epoch_loss += lg.loss * static_cast<double>(len);
      sgd_nesterov_step(out.params.theta, lg.grad, velocity, sgd, out.params.layout());
    }
    out.loss_curve.push_back(epoch_loss / static_cast<double>(n));
  }
  return out;
}

VdpTrainResult train_vdp(const Cohort& cohort, const VdpTrainConfig& config) {
  if (cohort.has_missing()) {
    throw Error(ErrorCode::kInvalidArgument, "train_vdp: cohort has missing cells; impute first");
  }
  return train_vdp(cohort.x, cohort.y, config);
}

}  // namespace vdpt
