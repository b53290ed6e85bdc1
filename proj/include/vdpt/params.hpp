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

// Flat parameter storage shared by both networks. Every trainable parameter
// lives in one contiguous vector; a layout maps named blocks back to layers.

#pragma once

#include <string>
#include <vector>

#include "vdpt/numeric.hpp"

namespace vdpt {

struct ParamBlock {
  std::string name;
  Index offset = 0;
  Index rows = 0;
  Index cols = 1;
  bool weight_decay = true;

  Index size() const { return rows * cols; }
};

class ParamLayout {
 public:
  // Appends a rows x cols block and returns its index.
  std::size_t add(std::string name, Index rows, Index cols, bool weight_decay = true);

  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  const ParamBlock& block(std::size_t i) const { return blocks_[i]; }
  Index size() const { return size_; }

  // Block containing flat index `i`.
  const ParamBlock& block_of(Index i) const;

  // 1 for entries subject to weight decay, 0 otherwise.
  Vector decay_mask() const;

 private:
  std::vector<ParamBlock> blocks_;
  Index size_ = 0;
};

using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;
using VectorMap = Eigen::Map<Vector>;
using ConstVectorMap = Eigen::Map<const Vector>;

inline ConstMatrixMap view(const Vector& theta, const ParamBlock& b) {
  return ConstMatrixMap(theta.data() + b.offset, b.rows, b.cols);
}
inline MatrixMap view(Vector& theta, const ParamBlock& b) {
  return MatrixMap(theta.data() + b.offset, b.rows, b.cols);
}
inline ConstVectorMap vec_view(const Vector& theta, const ParamBlock& b) {
  return ConstVectorMap(theta.data() + b.offset, b.size());
}
inline VectorMap vec_view(Vector& theta, const ParamBlock& b) {
  return VectorMap(theta.data() + b.offset, b.size());
}

struct SgdConfig {
  double lr = 0.01;
  double weight_decay = 0.0;
  double momentum = 0.0;
};

// One step of SGD with L2 weight decay folded into the gradient and
// Nesterov momentum:
//   g' = g + lambda * theta   (masked by the layout's decay flags)
//   v  = mu * v + g'
//   theta -= lr * (g' + mu * v)
// Throws kNonFiniteGradient naming the offending block; nothing is updated
// in that case.
void sgd_nesterov_step(Vector& theta, const Vector& grad, Vector& velocity,
                       const SgdConfig& config, const ParamLayout& layout);

}  // namespace vdpt
