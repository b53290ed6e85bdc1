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

#include "vdpt/params.hpp"

namespace vdpt {

std::size_t ParamLayout::add(std::string name, Index rows, Index cols, bool weight_decay) {
  blocks_.push_back({std::move(name), size_, rows, cols, weight_decay});
  size_ += rows * cols;
  return blocks_.size() - 1;
}

const ParamBlock& ParamLayout::block_of(Index i) const {
  for (const auto& b : blocks_) {
    if (i >= b.offset && i < b.offset + b.size()) return b;
  }
  throw Error(ErrorCode::kInvalidArgument, "ParamLayout::block_of: index out of range");
}

Vector ParamLayout::decay_mask() const {
  Vector mask(size_);
  for (const auto& b : blocks_) {
    mask.segment(b.offset, b.size()).setConstant(b.weight_decay ? 1.0 : 0.0);
  }
  return mask;
}

void sgd_nesterov_step(Vector& theta, const Vector& grad, Vector& velocity,
                       const SgdConfig& config, const ParamLayout& layout) {
  if (theta.size() != grad.size() || theta.size() != velocity.size() ||
      theta.size() != layout.size()) {
    throw Error(ErrorCode::kShapeMismatch, "sgd_nesterov_step: shape mismatch");
  }
  for (Index i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad(i))) {
      throw Error(ErrorCode::kNonFiniteGradient,
                  "non-finite gradient in block '" + layout.block_of(i).name + "'");
    }
  }
  Vector g = grad;
  if (config.weight_decay != 0.0) {
    for (const auto& b : layout.blocks()) {
      if (b.weight_decay) {
        g.segment(b.offset, b.size()) += config.weight_decay * theta.segment(b.offset, b.size());
      }
    }
  }
  velocity = config.momentum * velocity + g;
  theta -= config.lr * (g + config.momentum * velocity);
}

}  // namespace vdpt
