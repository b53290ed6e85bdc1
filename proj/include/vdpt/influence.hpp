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

// Influence-function explanations. Everything is written against the
// InfluenceModel concept: a trained parameter vector, the gradient of the
// full training objective (mean data loss plus regularizer) at any parameter
// vector, and per-instance loss gradients. Hessian access is only through
// finite differences of that gradient, so no model ever materializes H.
//
// Both network adapters freeze their ReLU pattern at the trained parameters
// (and, for input perturbations, at the unperturbed row). Central differences
// then stay inside one linear region of the network and measure the
// almost-everywhere Hessian instead of the jump of the gradient at a kink,
// which with h = 1e-4 would swamp the damping by orders of magnitude.

#pragma once

#include <concepts>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "vdpt/mlp.hpp"
#include "vdpt/vdp.hpp"

namespace vdpt {

template <typename M>
concept InfluenceModel = requires(const M& m, const Vector& v, const Matrix& x, const Labels& y,
                                  int label) {
  { m.parameters() } -> std::convertible_to<const Vector&>;
  { m.objective_gradient(v) } -> std::convertible_to<Vector>;
  { m.instance_gradient(v, label) } -> std::convertible_to<Vector>;
  // For each row i: direction . grad_theta L(x_i, y_i) at the trained parameters.
  { m.per_sample_dot(x, y, v) } -> std::convertible_to<Vector>;
  { m.train_x() } -> std::convertible_to<const Matrix&>;
  { m.train_y() } -> std::convertible_to<const Labels&>;
  { m.tag() } -> std::convertible_to<std::string>;
};

// Optional capability: row-wise central differences over every input feature
// of direction . grad_theta L(x_i + t e_j, y_i), t = +-h, returned as an
// (n x d) matrix. Models with kinks use it to hold the kink pattern of the
// unperturbed row.
template <typename M>
concept InputSensitiveModel =
    InfluenceModel<M> && requires(const M& m, const Matrix& x, const Labels& y, const Vector& v,
                                  double h) {
      { m.input_derivative_dots(x, y, v, h) } -> std::convertible_to<Matrix>;
    };

// Optional capability: the (p x d) matrix whose column j is the row mean of
// d/dx_j grad_theta L(x_i, y_i). FI_local is linear in s_test, so this one
// matrix turns every later explanation into a single solve and a product.
template <typename M>
concept MixedDerivativeModel =
    InfluenceModel<M> && requires(const M& m, const Matrix& x, const Labels& y, double h) {
      { m.mean_mixed_derivative(x, y, h) } -> std::convertible_to<Matrix>;
    };

struct InfluenceConfig {
  double damping = 0.01;
  double cg_tol = 1e-8;
  int cg_max_iter = 500;
  double h_theta = 1e-4;    // HVP finite-difference step
  double h_x = 1e-3;        // input perturbation step (standardized units)
  Index subsample = 1000;   // training rows averaged for FI_local
  std::uint64_t subsample_seed = 0;
  Index hessian_subsample = 0;  // rows entering the Hessian; 0 = all
  // Lanczos steps spent estimating the smallest Hessian eigenvalue; 0 skips
  // the probe. A negative estimate raises the damping (see curvature_shift).
  int curvature_probe_steps = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static InfluenceConfig from_json(const nlohmann::json& j, InfluenceConfig base);
};

struct InfluenceReport {
  std::vector<std::string> feature_names;
  Vector values;  // FI_local per feature, raw loss-change sign
  std::string model_tag;
  std::string instance_id;
  int test_label = 0;
  InfluenceConfig config;
  int cg_iterations = 0;
  double cg_residual = 0.0;
  bool cg_converged = false;
  double curvature_shift = 0.0;  // added to config.damping for the solve

  nlohmann::json to_json() const;
  static InfluenceReport from_json(const nlohmann::json& j);
};

// ---------------------------------------------------------------------------
// Model adapters
// ---------------------------------------------------------------------------

// Keeps the (up to) `limit` rows drawn with `seed`, sorted; all rows when
// limit <= 0 or limit >= n.
std::vector<Index> hessian_rows(Index n, Index limit, std::uint64_t seed);

// J(theta) = mean weighted BCE + (lambda / 2) |theta|^2 over decayed blocks.
class MlpObjective {
 public:
  MlpObjective(MlpParams params, double pos_weight, double weight_decay, Matrix train_x,
               Labels train_y, std::vector<Index> hessian_rows = {});

  const Vector& parameters() const { return params_.theta; }
  Vector objective_gradient(const Vector& theta) const;
  Vector instance_gradient(const Vector& x, int label) const;
  Vector per_sample_dot(const Matrix& x, const Labels& y, const Vector& direction) const;
  double instance_loss(const Vector& theta, const Vector& x, int label) const;
  const Matrix& train_x() const { return train_x_; }
  const Labels& train_y() const { return train_y_; }
  Matrix input_derivative_dots(const Matrix& x, const Labels& y, const Vector& direction,
                               double h) const;
  Matrix mean_mixed_derivative(const Matrix& x, const Labels& y, double h) const;
  std::string tag() const { return "mlp"; }
  const MlpParams& params() const { return params_; }

 private:
  MlpParams params_;
  double pos_weight_;
  double weight_decay_;
  Matrix train_x_;
  Labels train_y_;
  Matrix hess_x_;
  Labels hess_y_;
  std::vector<Matrix> hess_gates_;
  Vector decay_mask_;
};

// J(theta) = mean weighted Gaussian NLL + kl_weight KL + (lambda / 2)|mu|^2.
class VdpObjective {
 public:
  VdpObjective(VdpParams params, VdpObjectiveConfig loss, double weight_decay, Matrix train_x,
               Labels train_y, std::vector<Index> hessian_rows = {});

  const Vector& parameters() const { return params_.theta; }
  Vector objective_gradient(const Vector& theta) const;
  Vector instance_gradient(const Vector& x, int label) const;
  Vector per_sample_dot(const Matrix& x, const Labels& y, const Vector& direction) const;
  const Matrix& train_x() const { return train_x_; }
  const Labels& train_y() const { return train_y_; }
  Matrix input_derivative_dots(const Matrix& x, const Labels& y, const Vector& direction,
                               double h) const;
  Matrix mean_mixed_derivative(const Matrix& x, const Labels& y, double h) const;
  std::string tag() const { return "vdp"; }
  const VdpParams& params() const { return params_; }

 private:
  VdpParams params_;
  VdpObjectiveConfig loss_;
  double weight_decay_;
  Matrix train_x_;
  Labels train_y_;
  Matrix hess_x_;
  Labels hess_y_;
  std::vector<VdpGates> hess_gates_;
  Vector decay_mask_;
};

// ---------------------------------------------------------------------------
// Core operations
// ---------------------------------------------------------------------------

namespace detail {
// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    comp_ += std::abs(sum_) >= std::abs(v) ? (sum_ - t) + v : (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

void check_finite(const Vector& v, const char* what);
}  // namespace detail

template <InfluenceModel M>
Vector per_instance_grad(const M& model, const Vector& x, int label) {
  return model.instance_gradient(x, label);
}

// H v by central differences of the objective gradient along v / |v|.
template <InfluenceModel M>
Vector hvp(const M& model, const Vector& v, double h_theta = 1e-4) {
  const Vector& theta = model.parameters();
  if (v.size() != theta.size()) throw Error(ErrorCode::kShapeMismatch, "hvp: size mismatch");
  detail::check_finite(v, "hvp: direction");
  const double norm = v.norm();
  if (norm == 0.0) return Vector::Zero(v.size());
  const Vector step = (h_theta / norm) * v;
  const Vector up = model.objective_gradient(theta + step);
  const Vector down = model.objective_gradient(theta - step);
  Vector out = (up - down) * (norm / (2.0 * h_theta));
  detail::check_finite(out, "hvp: result");
  return out;
}

// Solves (H + damping I) x = b by conjugate gradient.
template <InfluenceModel M>
CgResult inverse_hvp(const M& model, const Vector& b, const InfluenceConfig& config) {
  config.validate();
  return conjugate_gradient(
      [&](const Vector& v) { return Vector(hvp(model, v, config.h_theta) + config.damping * v); },
      b, config.cg_tol, config.cg_max_iter);
}

// -grad L(z_test)^T (H + damping I)^{-1} grad L(z).
template <InfluenceModel M>
double influence_up_loss(const M& model, const Vector& x, int label, const Vector& x_test,
                         int test_label, const InfluenceConfig& config) {
  const Vector g_test = model.instance_gradient(x_test, test_label);
  const CgResult s = inverse_hvp(model, g_test, config);
  return -s.x.dot(model.instance_gradient(x, label));
}

// Same as above for many training points sharing one solve.
template <InfluenceModel M>
Vector influence_up_loss_many(const M& model, const Matrix& x, const Labels& y,
                              const Vector& x_test, int test_label,
                              const InfluenceConfig& config) {
  const CgResult s = inverse_hvp(model, model.instance_gradient(x_test, test_label), config);
  return -model.per_sample_dot(x, y, s.x);
}

// Extra damping that keeps H + damping I positive definite when the Hessian
// has negative curvature (a ReLU net off its exact optimum). Zero unless
// config.curvature_probe_steps > 0 and the Lanczos estimate of the smallest
// eigenvalue is negative; the estimate is scaled by 1.25 because Ritz values
// approach the minimum from above.
template <InfluenceModel M>
double curvature_shift(const M& model, const InfluenceConfig& config) {
  config.validate();
  if (config.curvature_probe_steps == 0) return 0.0;
  SeededRng rng(config.subsample_seed);
  SeededRng start = rng.split(0x1A4C);
  const SpectrumEstimate est = lanczos_extremes(
      [&](const Vector& v) { return hvp(model, v, config.h_theta); }, model.parameters().size(),
      config.curvature_probe_steps, start);
  return std::max(0.0, -1.25 * est.smallest);
}

namespace detail {
inline std::vector<Index> fi_rows(Index n, const InfluenceConfig& config) {
  const Index m = std::min(n, config.subsample);
  if (m <= 0) throw Error(ErrorCode::kEmptySubsample, "fi_local: empty training subsample");
  SeededRng rng(config.subsample_seed);
  return rng.sample_without_replacement(n, m);
}

inline InfluenceConfig shifted(InfluenceConfig config, double shift) {
  config.damping += shift;
  return config;
}
}  // namespace detail

// FI_local[j] = -mean_z d/dx_j [ s_test . grad_theta L(z) ] over a seeded
// training subsample, with s_test = (H + damping I)^{-1} grad L(z_test).
template <InfluenceModel M>
InfluenceReport fi_local(const M& model, const Vector& x_test, int test_label,
                         const std::vector<std::string>& feature_names,
                         const InfluenceConfig& config, std::string instance_id = {}) {
  config.validate();
  const Matrix& tx = model.train_x();
  const Labels& ty = model.train_y();
  const Index n = tx.rows();
  const Index d = tx.cols();
  if (x_test.size() != d || static_cast<Index>(feature_names.size()) != d) {
    throw Error(ErrorCode::kShapeMismatch, "fi_local: feature count mismatch");
  }
  const std::vector<Index> rows = detail::fi_rows(n, config);
  const Index m = static_cast<Index>(rows.size());
  const double shift = curvature_shift(model, config);
  const CgResult s =
      inverse_hvp(model, model.instance_gradient(x_test, test_label), detail::shifted(config, shift));
  Matrix derivs(m, d);  // d/dx_j [s_test . grad_theta L(z_a)]
  if constexpr (InputSensitiveModel<M>) {
    Matrix sx(m, d);
    Labels sy(m);
    for (Index a = 0; a < m; ++a) {
      sx.row(a) = tx.row(rows[static_cast<std::size_t>(a)]);
      sy(a) = ty(rows[static_cast<std::size_t>(a)]);
    }
    derivs = model.input_derivative_dots(sx, sy, s.x, config.h_x);
  } else {
    // Rows laid out as [z + h e_j, z - h e_j] for every sampled z and feature j.
    Matrix perturbed(2 * m * d, d);
    Labels labels(2 * m * d);
    for (Index a = 0; a < m; ++a) {
      const Index r = rows[static_cast<std::size_t>(a)];
      for (Index j = 0; j < d; ++j) {
        const Index base = 2 * (a * d + j);
        perturbed.row(base) = tx.row(r);
        perturbed.row(base + 1) = tx.row(r);
        perturbed(base, j) += config.h_x;
        perturbed(base + 1, j) -= config.h_x;
        labels(base) = labels(base + 1) = ty(r);
      }
    }
    const Vector dots = model.per_sample_dot(perturbed, labels, s.x);
    for (Index a = 0; a < m; ++a) {
      for (Index j = 0; j < d; ++j) {
        const Index base = 2 * (a * d + j);
        derivs(a, j) = (dots(base) - dots(base + 1)) / (2.0 * config.h_x);
      }
    }
  }

  InfluenceReport report;
  report.feature_names = feature_names;
  report.values = Vector::Zero(d);
  for (Index j = 0; j < d; ++j) {
    detail::CompensatedSum acc;
    for (Index a = 0; a < m; ++a) acc.add(derivs(a, j));
    report.values(j) = -acc.value() / static_cast<double>(m);
  }
  report.model_tag = model.tag();
  report.instance_id = std::move(instance_id);
  report.test_label = test_label;
  report.config = config;
  report.cg_iterations = s.iterations;
  report.cg_residual = s.residual_norm;
  report.cg_converged = s.converged;
  report.curvature_shift = shift;
  return report;
}

// Explains many test points of one model. The curvature shift and the mean
// mixed derivative over the influence subsample are computed once, so each
// explanation costs one damped solve; results equal fi_local up to rounding.
template <MixedDerivativeModel M>
class Explainer {
 public:
  Explainer(M model, std::vector<std::string> feature_names, InfluenceConfig config)
      : model_(std::move(model)), feature_names_(std::move(feature_names)), config_(config) {
    config_.validate();
    const Matrix& tx = model_.train_x();
    const Labels& ty = model_.train_y();
    if (static_cast<Index>(feature_names_.size()) != tx.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "explainer: feature count mismatch");
    }
    const std::vector<Index> rows = detail::fi_rows(tx.rows(), config_);
    Matrix sx(static_cast<Index>(rows.size()), tx.cols());
    Labels sy(static_cast<Index>(rows.size()));
    for (std::size_t a = 0; a < rows.size(); ++a) {
      sx.row(static_cast<Index>(a)) = tx.row(rows[a]);
      sy(static_cast<Index>(a)) = ty(rows[a]);
    }
    mixed_ = model_.mean_mixed_derivative(sx, sy, config_.h_x);
    if (!mixed_.allFinite()) {
      throw Error(ErrorCode::kNonFiniteGradient, "explainer: mixed derivative is not finite");
    }
    shift_ = vdpt::curvature_shift(model_, config_);
  }

  InfluenceReport explain(const Vector& x_test, int test_label, std::string instance_id = {}) const {
    if (x_test.size() != mixed_.cols()) {
      throw Error(ErrorCode::kShapeMismatch, "explainer: feature count mismatch");
    }
    const CgResult s = inverse_hvp(model_, model_.instance_gradient(x_test, test_label),
                                   detail::shifted(config_, shift_));
    InfluenceReport report;
    report.feature_names = feature_names_;
    report.values = -(mixed_.transpose() * s.x);
    report.model_tag = model_.tag();
    report.instance_id = std::move(instance_id);
    report.test_label = test_label;
    report.config = config_;
    report.cg_iterations = s.iterations;
    report.cg_residual = s.residual_norm;
    report.cg_converged = s.converged;
    report.curvature_shift = shift_;
    return report;
  }

  const M& model() const { return model_; }
  const InfluenceConfig& config() const { return config_; }
  const Matrix& mixed_derivative() const { return mixed_; }
  double curvature_shift() const { return shift_; }

 private:
  M model_;
  std::vector<std::string> feature_names_;
  InfluenceConfig config_;
  Matrix mixed_;
  double shift_ = 0.0;
};


// ---------------------------------------------------------------------------
// Explanation analysis
// ---------------------------------------------------------------------------

struct FeatureAgreement {
  std::string feature;
  std::optional<double> abs_pearson;   // nullopt when a side has no variance
  std::optional<double> abs_spearman;
  double p_pearson = 1.0;              // Bonferroni-corrected
  double p_spearman = 1.0;
  bool significant = false;            // corrected Pearson p < alpha
};

struct ExplanationValidation {
  std::vector<FeatureAgreement> features;
  Index pairs_used = 0;
  std::optional<std::string> warning;
  double alpha = 0.01;
  nlohmann::json to_json() const;
};

// For sampled subject pairs (i, k), i != k and no pair twice, correlates
// x_i[j] - x_k[j] with FI_i[j] - FI_k[j] per feature. Rows of `fi` align
// with rows of `x`.
ExplanationValidation validate_explanations(const Matrix& x, const Matrix& fi,
                                            const std::vector<std::string>& feature_names,
                                            Index n_pairs, SeededRng& rng, double alpha = 0.01);

struct ExplanationProfile {
  std::vector<std::string> feature_names;
  std::vector<int> top_counts;   // appearances in per-subject top-k by |FI|
  std::vector<double> sentiment; // mean sign(FI) over subjects
  int top_k = 3;
  nlohmann::json to_json() const;
};

ExplanationProfile explanation_profile(const Matrix& fi,
                                       const std::vector<std::string>& feature_names,
                                       int top_k = 3);

}  // namespace vdpt
