// Copyright 2026 The ACAE Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <cstdint>
#include <span>

#include "acae/feature_set.hpp"
#include "acae/tensor.hpp"

namespace acae {

struct OimConfig {
  Real temperature = Real(1) / Real(30);
  Real momentum = Real(0.5);
  /// 0 means five slots per identity.
  std::size_t queue_capacity = 0;
};

/// Identity lookup table plus a FIFO queue of unlabeled features. Both act as
/// constants during a step; updates are applied after the gradient.
class OimState {
 public:
  OimState() = default;
  /// Rows of \p lut are normalized on construction.
  OimState(Matrix lut, const OimConfig& config);

  static OimState random(std::size_t identities, std::size_t dim,
                         const OimConfig& config, std::uint64_t seed);

  const Matrix& lut() const { return lut_; }
  std::size_t identities() const { return lut_.rows(); }
  std::size_t dim() const { return lut_.cols(); }
  Real temperature() const { return temperature_; }
  Real momentum() const { return momentum_; }
  std::size_t queue_capacity() const { return capacity_; }
  std::size_t queue_size() const { return count_; }

  /// Queue contents, oldest first.
  Matrix queue() const;

  void push_unlabeled(std::span<const Real> x);
  /// v_t <- normalize(momentum * v_t + (1 - momentum) * x).
  void update_identity(IdentityId id, std::span<const Real> x);

  /// Replaces the queue wholesale (oldest first); used when restoring.
  void restore_queue(const Matrix& oldest_first);

 private:
  Matrix lut_;
  Matrix ring_;
  std::size_t head_ = 0;  // next slot to write
  std::size_t count_ = 0;
  std::size_t capacity_ = 0;
  Real temperature_ = Real(1) / Real(30);
  Real momentum_ = Real(0.5);
};

struct OimLoss {
  Real loss = 0;
  /// d(loss)/d(features), same shape as the input.
  Matrix grad;
  std::size_t labeled_rows = 0;
};

/// Softmax over [lut x; queue x] / temperature.
Vector oim_probabilities(std::span<const Real> x, const OimState& state);

/// Mean negative log-likelihood of the labeled rows. Unlabeled rows contribute
/// neither loss nor gradient. Does not touch \p state.
OimLoss oim_loss(const Matrix& features, std::span<const IdentityId> labels,
                 const OimState& state);

/// LUT momentum update for labeled rows, queue push for unlabeled rows.
void oim_apply_update(OimState& state, const Matrix& features,
                      std::span<const IdentityId> labels);

/// oim_loss followed by oim_apply_update.
OimLoss oim_step(const Matrix& features, std::span<const IdentityId> labels,
                 OimState& state);

}  // namespace acae
