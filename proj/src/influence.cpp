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

#include "vdpt/influence.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vdpt/stats.hpp"

namespace vdpt {

namespace detail {
void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw Error(ErrorCode::kNonFiniteGradient, std::string(what) + " is not finite");
}
}  // namespace detail

void InfluenceConfig::validate() const {
  if (!(damping > 0.0)) throw Error(ErrorCode::kInvalidArgument, "influence: damping must be > 0");
  if (!(cg_tol > 0.0) || cg_max_iter < 1) {
    throw Error(ErrorCode::kInvalidArgument, "influence: cg_tol and cg_max_iter must be positive");
  }
  if (!(h_theta > 0.0) || !(h_x > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "influence: finite-difference steps must be > 0");
  }
  if (curvature_probe_steps < 0) {
    throw Error(ErrorCode::kInvalidArgument, "influence: curvature_probe_steps must be >= 0");
  }
  if (subsample < 0 || hessian_subsample < 0) {
    throw Error(ErrorCode::kInvalidArgument, "influence: subsample sizes must be >= 0");
  }
}

nlohmann::json InfluenceConfig::to_json() const {
  return {{"damping", damping},       {"cg_tol", cg_tol},
          {"cg_max_iter", cg_max_iter}, {"h_theta", h_theta},
          {"h_x", h_x},               {"subsample", subsample},
          {"subsample_seed", subsample_seed}, {"hessian_subsample", hessian_subsample},
          {"curvature_probe_steps", curvature_probe_steps}};
}

InfluenceConfig InfluenceConfig::from_json(const nlohmann::json& j, InfluenceConfig base) {
  if (j.contains("damping")) base.damping = j.at("damping").get<double>();
  if (j.contains("cg_tol")) base.cg_tol = j.at("cg_tol").get<double>();
  if (j.contains("cg_max_iter")) base.cg_max_iter = j.at("cg_max_iter").get<int>();
  if (j.contains("h_theta")) base.h_theta = j.at("h_theta").get<double>();
  if (j.contains("h_x")) base.h_x = j.at("h_x").get<double>();
  if (j.contains("subsample")) base.subsample = j.at("subsample").get<Index>();
  if (j.contains("subsample_seed")) base.subsample_seed = j.at("subsample_seed").get<std::uint64_t>();
  if (j.contains("hessian_subsample")) base.hessian_subsample = j.at("hessian_subsample").get<Index>();
  if (j.contains("curvature_probe_steps")) {
    base.curvature_probe_steps = j.at("curvature_probe_steps").get<int>();
  }
  return base;
}

nlohmann::json InfluenceReport::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.influence/1";
  j["feature_names"] = feature_names;
  j["values"] = std::vector<double>(values.data(), values.data() + values.size());
  j["model"] = model_tag;
  j["instance_id"] = instance_id;
  j["test_label"] = test_label;
  j["config"] = config.to_json();
  j["cg"] = {{"iterations", cg_iterations}, {"residual", cg_residual}, {"converged", cg_converged}};
  j["curvature_shift"] = curvature_shift;
  return j;
}

InfluenceReport InfluenceReport::from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "vdpt.influence/1") {
      throw Error(ErrorCode::kParseError, "influence report: unexpected format");
    }
    InfluenceReport r;
    r.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    const auto v = j.at("values").get<std::vector<double>>();
    r.values = Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
    r.model_tag = j.at("model").get<std::string>();
    r.instance_id = j.at("instance_id").get<std::string>();
    r.test_label = j.at("test_label").get<int>();
    r.config = InfluenceConfig::from_json(j.at("config"), {});
    r.cg_iterations = j.at("cg").at("iterations").get<int>();
    r.cg_residual = j.at("cg").at("residual").get<double>();
    r.cg_converged = j.at("cg").at("converged").get<bool>();
    r.curvature_shift = j.value("curvature_shift", 0.0);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParseError, std::string("influence report: ") + e.what());
  }
}

std::vector<Index> hessian_rows(Index n, Index limit, std::uint64_t seed) {
  std::vector<Index> rows;
  if (limit <= 0 || limit >= n) {
    rows.resize(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Index{0});
    return rows;
  }
  SeededRng rng(seed);
  rows = rng.split(0x4E55).sample_without_replacement(n, limit);
  std::sort(rows.begin(), rows.end());
  return rows;
}

namespace {

void pick_rows(const Matrix& x, const Labels& y, const std::vector<Index>& rows, Matrix& out_x,
               Labels& out_y) {
  if (rows.empty()) {
    out_x = x;
    out_y = y;
    return;
  }
  out_x.resize(static_cast<Index>(rows.size()), x.cols());
  out_y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out_x.row(static_cast<Index>(i)) = x.row(rows[i]);
    out_y(static_cast<Index>(i)) = y(rows[i]);
  }
}

void check_training_set(const Matrix& x, const Labels& y, Index input_dim) {
  if (x.rows() == 0 || x.rows() != y.size()) {
    throw Error(ErrorCode::kShapeMismatch, "influence: empty or mismatched training set");
  }
  if (x.cols() != input_dim) throw Error(ErrorCode::kShapeMismatch, "influence: feature count");
}

}  // namespace

// ---------------------------------------------------------------------------
// MlpObjective
// ---------------------------------------------------------------------------

MlpObjective::MlpObjective(MlpParams params, double pos_weight, double weight_decay,
                           Matrix train_x, Labels train_y, std::vector<Index> rows)
    : params_(std::move(params)),
      pos_weight_(pos_weight),
      weight_decay_(weight_decay),
      train_x_(std::move(train_x)),
      train_y_(std::move(train_y)) {
  if (params_.empty()) throw Error(ErrorCode::kNotTrained, "influence: model not trained");
  check_training_set(train_x_, train_y_, params_.input_dim());
  pick_rows(train_x_, train_y_, rows, hess_x_, hess_y_);
  hess_gates_ = mlp_relu_gates(params_, hess_x_);
  decay_mask_ = params_.layout().decay_mask();
}

Vector MlpObjective::objective_gradient(const Vector& theta) const {
  MlpParams p = params_;
  p.theta = theta;
  Vector g = mlp_backprop(p, hess_x_, hess_y_, pos_weight_, &hess_gates_).grad;
  g += weight_decay_ * decay_mask_.cwiseProduct(theta);
  return g;
}

Vector MlpObjective::instance_gradient(const Vector& x, int label) const {
  Labels y(1);
  y << label;
  return mlp_backprop(params_, Matrix(x.transpose()), y, pos_weight_).grad;
}

Vector MlpObjective::per_sample_dot(const Matrix& x, const Labels& y, const Vector& direction) const {
  return mlp_per_sample_dot(params_, x, y, pos_weight_, direction);
}

Matrix MlpObjective::input_derivative_dots(const Matrix& x, const Labels& y,
                                           const Vector& direction, double h) const {
  const Index n = x.rows();
  const Index d = x.cols();
  const std::vector<Matrix> base = mlp_relu_gates(params_, x);
  // Two perturbed copies per feature, each carrying its source row's gates.
  Matrix perturbed(2 * n * d, d);
  Labels labels(2 * n * d);
  std::vector<Matrix> gates(base.size());
  for (std::size_t l = 0; l < base.size(); ++l) gates[l].resize(2 * n * d, base[l].cols());
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      for (Index side = 0; side < 2; ++side) {
        const Index r = 2 * (i * d + j) + side;
        perturbed.row(r) = x.row(i);
        perturbed(r, j) += side == 0 ? h : -h;
        labels(r) = y(i);
        for (std::size_t l = 0; l < base.size(); ++l) gates[l].row(r) = base[l].row(i);
      }
    }
  }
  const Vector dots = mlp_per_sample_dot(params_, perturbed, labels, pos_weight_, direction, &gates);
  Matrix out(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) {
      const Index r = 2 * (i * d + j);
      out(i, j) = (dots(r) - dots(r + 1)) / (2.0 * h);
    }
  }
  return out;
}

Matrix MlpObjective::mean_mixed_derivative(const Matrix& x, const Labels& y, double h) const {
  const std::vector<Matrix> gates = mlp_relu_gates(params_, x);
  Matrix out(params_.theta.size(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    Matrix up = x, down = x;
    up.col(j).array() += h;
    down.col(j).array() -= h;
    out.col(j) = (mlp_backprop(params_, up, y, pos_weight_, &gates).grad -
                  mlp_backprop(params_, down, y, pos_weight_, &gates).grad) /
                 (2.0 * h);
  }
  return out;
}

double MlpObjective::instance_loss(const Vector& theta, const Vector& x, int label) const {
  MlpParams p = params_;
  p.theta = theta;
  return weighted_bce(mlp_predict(p, x), label, pos_weight_);
}

// ---------------------------------------------------------------------------
// VdpObjective
// ---------------------------------------------------------------------------

VdpObjective::VdpObjective(VdpParams params, VdpObjectiveConfig loss, double weight_decay,
                           Matrix train_x, Labels train_y, std::vector<Index> rows)
    : params_(std::move(params)),
      loss_(loss),
      weight_decay_(weight_decay),
      train_x_(std::move(train_x)),
      train_y_(std::move(train_y)) {
  if (params_.empty()) throw Error(ErrorCode::kNotTrained, "influence: model not trained");
  check_training_set(train_x_, train_y_, params_.input_dim());
  pick_rows(train_x_, train_y_, rows, hess_x_, hess_y_);
  hess_gates_.reserve(static_cast<std::size_t>(hess_x_.rows()));
  for (Index i = 0; i < hess_x_.rows(); ++i) {
    hess_gates_.push_back(vdp_relu_gates(params_, hess_x_.row(i).transpose()));
  }
  decay_mask_ = params_.layout().decay_mask();
}

Vector VdpObjective::objective_gradient(const Vector& theta) const {
  VdpParams p = params_;
  p.theta = theta;
  Vector g = elbo_gradients(p, hess_x_, hess_y_, loss_, &hess_gates_).grad;
  g += weight_decay_ * decay_mask_.cwiseProduct(theta);
  return g;
}

Vector VdpObjective::instance_gradient(const Vector& x, int label) const {
  return vdp_instance_gradient(params_, x, label, loss_).grad;
}

Vector VdpObjective::per_sample_dot(const Matrix& x, const Labels& y, const Vector& direction) const {
  Vector out(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    out(i) = vdp_instance_gradient(params_, x.row(i).transpose(), y(i), loss_).grad.dot(direction);
  }
  return out;
}

Matrix VdpObjective::input_derivative_dots(const Matrix& x, const Labels& y,
                                           const Vector& direction, double h) const {
  Matrix out(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) {
    const Vector xi = x.row(i).transpose();
    const VdpGates gates = vdp_relu_gates(params_, xi);
    for (Index j = 0; j < x.cols(); ++j) {
      Vector up = xi, down = xi;
      up(j) += h;
      down(j) -= h;
      const double a = vdp_instance_gradient(params_, up, y(i), loss_, &gates).grad.dot(direction);
      const double b = vdp_instance_gradient(params_, down, y(i), loss_, &gates).grad.dot(direction);
      out(i, j) = (a - b) / (2.0 * h);
    }
  }
  return out;
}

// The KL term of the batch objective does not depend on x and cancels in
// the difference.
Matrix VdpObjective::mean_mixed_derivative(const Matrix& x, const Labels& y, double h) const {
  std::vector<VdpGates> gates;
  gates.reserve(static_cast<std::size_t>(x.rows()));
  for (Index i = 0; i < x.rows(); ++i) gates.push_back(vdp_relu_gates(params_, x.row(i).transpose()));
  Matrix out(params_.theta.size(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    Matrix up = x, down = x;
    up.col(j).array() += h;
    down.col(j).array() -= h;
    out.col(j) = (elbo_gradients(params_, up, y, loss_, &gates).grad -
                  elbo_gradients(params_, down, y, loss_, &gates).grad) /
                 (2.0 * h);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Explanation analysis
// ---------------------------------------------------------------------------

nlohmann::json ExplanationValidation::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.explanation-validation/1";
  j["pairs_used"] = pairs_used;
  j["alpha"] = alpha;
  if (warning) j["warning"] = *warning;
  for (const auto& f : features) {
    nlohmann::json e{{"feature", f.feature},
                     {"p_pearson", f.p_pearson},
                     {"p_spearman", f.p_spearman},
                     {"significant", f.significant}};
    e["abs_pearson"] = f.abs_pearson ? nlohmann::json(*f.abs_pearson) : nlohmann::json(nullptr);
    e["abs_spearman"] = f.abs_spearman ? nlohmann::json(*f.abs_spearman) : nlohmann::json(nullptr);
    j["features"].push_back(e);
  }
  return j;
}

ExplanationValidation validate_explanations(const Matrix& x, const Matrix& fi,
                                            const std::vector<std::string>& feature_names,
                                            Index n_pairs, SeededRng& rng, double alpha) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (fi.rows() != n || fi.cols() != d || static_cast<Index>(feature_names.size()) != d) {
    throw Error(ErrorCode::kShapeMismatch, "validate_explanations: shape mismatch");
  }
  if (n < 2) throw Error(ErrorCode::kTooFewSamples, "validate_explanations: need >= 2 subjects");
  ExplanationValidation out;
  out.alpha = alpha;
  const Index available = n * (n - 1) / 2;
  Index pairs = n_pairs;
  if (pairs > available) {
    out.warning = "requested " + std::to_string(n_pairs) + " pairs but only " +
                  std::to_string(available) + " distinct pairs exist; capped";
    pairs = available;
  }
  // Pair index t enumerates (i, k), i < k, row by row.
  const std::vector<Index> picks = rng.sample_without_replacement(available, pairs);
  std::vector<std::pair<Index, Index>> pair_list;
  pair_list.reserve(picks.size());
  for (Index t : picks) {
    Index i = 0;
    Index remaining = t;
    while (remaining >= n - 1 - i) {
      remaining -= n - 1 - i;
      ++i;
    }
    pair_list.emplace_back(i, i + 1 + remaining);
  }
  out.pairs_used = pairs;
  const double family = static_cast<double>(d);
  for (Index j = 0; j < d; ++j) {
    FeatureAgreement fa;
    fa.feature = feature_names[static_cast<std::size_t>(j)];
    if (pairs >= 3) {
      Vector dx(pairs), dfi(pairs);
      for (Index t = 0; t < pairs; ++t) {
        const auto [a, b] = pair_list[static_cast<std::size_t>(t)];
        dx(t) = x(a, j) - x(b, j);
        dfi(t) = fi(a, j) - fi(b, j);
      }
      const auto r = pearson(dx, dfi);
      const auto rho = spearman(dx, dfi);
      const auto np = static_cast<double>(pairs);
      if (r) {
        fa.abs_pearson = std::abs(*r);
        fa.p_pearson = std::min(1.0, family * stats::correlation_p_value(*r, np));
      }
      if (rho) {
        fa.abs_spearman = std::abs(*rho);
        fa.p_spearman = std::min(1.0, family * stats::correlation_p_value(*rho, np));
      }
      fa.significant = r.has_value() && fa.p_pearson < alpha;
    }
    out.features.push_back(fa);
  }
  return out;
}

nlohmann::json ExplanationProfile::to_json() const {
  nlohmann::json j;
  j["format"] = "vdpt.explanation-profile/1";
  j["top_k"] = top_k;
  for (std::size_t i = 0; i < feature_names.size(); ++i) {
    j["features"].push_back({{"feature", feature_names[i]},
                             {"top_count", top_counts[i]},
                             {"sentiment", sentiment[i]}});
  }
  return j;
}

ExplanationProfile explanation_profile(const Matrix& fi,
                                       const std::vector<std::string>& feature_names,
                                       int top_k) {
  const Index n = fi.rows();
  const Index d = fi.cols();
  if (n < 1) throw Error(ErrorCode::kTooFewSamples, "explanation_profile: need >= 1 report");
  if (static_cast<Index>(feature_names.size()) != d) {
    throw Error(ErrorCode::kShapeMismatch, "explanation_profile: feature count");
  }
  ExplanationProfile out;
  out.feature_names = feature_names;
  out.top_k = top_k;
  out.top_counts.assign(static_cast<std::size_t>(d), 0);
  out.sentiment.assign(static_cast<std::size_t>(d), 0.0);
  const auto k = static_cast<std::size_t>(std::min<Index>(top_k, d));
  std::vector<Index> order(static_cast<std::size_t>(d));
  for (Index i = 0; i < n; ++i) {
    std::iota(order.begin(), order.end(), Index{0});
    // Larger |FI| first; equal magnitudes keep column order.
    std::stable_sort(order.begin(), order.end(),
                     [&](Index a, Index b) { return std::abs(fi(i, a)) > std::abs(fi(i, b)); });
    for (std::size_t t = 0; t < k; ++t) ++out.top_counts[static_cast<std::size_t>(order[t])];
    for (Index j = 0; j < d; ++j) {
      const double v = fi(i, j);
      out.sentiment[static_cast<std::size_t>(j)] += static_cast<double>((v > 0.0) - (v < 0.0));
    }
  }
  for (double& s : out.sentiment) s /= static_cast<double>(n);
  return out;
}

}  // namespace vdpt
