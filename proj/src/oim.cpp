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

#include "acae/oim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "acae/error.hpp"
#include "acae/rng.hpp"

namespace acae {

namespace {

void normalize_in_place(std::span<Real> v) {
  Real n = 0;
  for (Real x : v) n += x * x;
  n = std::sqrt(n);
  if (n > Real(0))
    for (auto& x : v) x /= n;
}

void check_label(IdentityId id, std::size_t identities) {
  ACAE_REQUIRE(id >= 0 && static_cast<std::size_t>(id) < identities,
          ErrorCode::kInvalidArgument,
          "identity " + std::to_string(id) + " outside lookup table of " +
              std::to_string(identities));
}

}  // namespace

OimState::OimState(Matrix lut, const OimConfig& config)
    : lut_(std::move(lut)),
      temperature_(config.temperature),
      momentum_(config.momentum) {
  ACAE_REQUIRE(config.temperature > 0, ErrorCode::kConfig, "oim.temperature must be positive");
  ACAE_REQUIRE(config.momentum >= 0 && config.momentum <= 1, ErrorCode::kConfig,
          "oim.momentum must lie in [0, 1]");
  for (std::size_t i = 0; i < lut_.rows(); ++i) normalize_in_place(lut_.row(i));
  capacity_ = config.queue_capacity == 0 ? 5 * lut_.rows() : config.queue_capacity;
  ring_ = Matrix(capacity_, lut_.cols());
}

OimState OimState::random(std::size_t identities, std::size_t dim,
                          const OimConfig& config, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "oim.lut"));
  std::normal_distribution<double> normal;
  Matrix lut(identities, dim);
  for (auto& v : lut.values()) v = static_cast<Real>(normal(rng));
  return OimState(std::move(lut), config);
}

Matrix OimState::queue() const {
  Matrix out(count_, lut_.cols());
  const std::size_t oldest = (head_ + capacity_ - count_) % std::max<std::size_t>(capacity_, 1);
  for (std::size_t i = 0; i < count_; ++i) {
    auto src = ring_.row((oldest + i) % capacity_);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

void OimState::push_unlabeled(std::span<const Real> x) {
  ACAE_REQUIRE(x.size() == lut_.cols(), ErrorCode::kDimensionMismatch,
          "queue entry width mismatch");
  if (capacity_ == 0) return;
  std::copy(x.begin(), x.end(), ring_.row(head_).begin());
  head_ = (head_ + 1) % capacity_;
  count_ = std::min(count_ + 1, capacity_);
}

void OimState::update_identity(IdentityId id, std::span<const Real> x) {
  check_label(id, lut_.rows());
  ACAE_REQUIRE(x.size() == lut_.cols(), ErrorCode::kDimensionMismatch,
          "lookup-table update width mismatch");
  auto row = lut_.row(static_cast<std::size_t>(id));
  for (std::size_t j = 0; j < row.size(); ++j)
    row[j] = momentum_ * row[j] + (Real(1) - momentum_) * x[j];
  normalize_in_place(row);
}

void OimState::restore_queue(const Matrix& oldest_first) {
  ACAE_REQUIRE(oldest_first.rows() == 0 || oldest_first.cols() == lut_.cols(),
          ErrorCode::kDimensionMismatch, "restored queue width mismatch");
  ACAE_REQUIRE(oldest_first.rows() <= capacity_, ErrorCode::kInvalidArgument,
          "restored queue exceeds capacity");
  ring_ = Matrix(capacity_, lut_.cols());
  head_ = 0;
  count_ = 0;
  for (std::size_t i = 0; i < oldest_first.rows(); ++i) push_unlabeled(oldest_first.row(i));
}

Vector oim_probabilities(std::span<const Real> x, const OimState& state) {
  const Matrix queue = state.queue();
  Matrix logits(1, state.identities() + queue.rows());
  for (std::size_t k = 0; k < state.identities(); ++k)
    logits(0, k) = dot(state.lut().row(k), x) / state.temperature();
  for (std::size_t k = 0; k < queue.rows(); ++k)
    logits(0, state.identities() + k) = dot(queue.row(k), x) / state.temperature();
  Matrix p = softmax_rows(logits);
  return Vector(p.values().begin(), p.values().end());
}

OimLoss oim_loss(const Matrix& features, std::span<const IdentityId> labels,
                 const OimState& state) {
  ACAE_REQUIRE(labels.size() == features.rows(), ErrorCode::kDimensionMismatch,
          "label count does not match feature rows");
  ACAE_REQUIRE(features.rows() == 0 || features.cols() == state.dim(),
          ErrorCode::kDimensionMismatch, "feature width does not match lookup table");
  OimLoss result;
  result.grad = Matrix(features.rows(), features.cols());
  for (IdentityId id : labels)
    if (id != kUnlabeled) {
      check_label(id, state.identities());
      ++result.labeled_rows;
    }
  if (result.labeled_rows == 0) return result;

  const Matrix queue = state.queue();
  const std::size_t classes = state.identities() + queue.rows();
  const Real inv_n = Real(1) / static_cast<Real>(result.labeled_rows);
  Matrix logits(1, classes);
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (labels[i] == kUnlabeled) continue;
    auto x = features.row(i);
    for (std::size_t k = 0; k < state.identities(); ++k)
      logits(0, k) = dot(state.lut().row(k), x) / state.temperature();
    for (std::size_t k = 0; k < queue.rows(); ++k)
      logits(0, state.identities() + k) = dot(queue.row(k), x) / state.temperature();
    const Matrix p = softmax_rows(logits);
    const auto t = static_cast<std::size_t>(labels[i]);
    // log p_t through log-sum-exp keeps very confident rows finite.
    const Real mx = *std::max_element(logits.values().begin(), logits.values().end());
    Real lse = 0;
    for (Real z : logits.values()) lse += std::exp(z - mx);
    result.loss += (mx + std::log(lse) - logits(0, t)) * inv_n;

    auto g = result.grad.row(i);
    for (std::size_t k = 0; k < classes; ++k) {
      const Real dz = (p(0, k) - (k == t ? Real(1) : Real(0))) * inv_n / state.temperature();
      if (dz == Real(0)) continue;
      auto v = k < state.identities() ? state.lut().row(k)
                                      : queue.row(k - state.identities());
      for (std::size_t j = 0; j < g.size(); ++j) g[j] += dz * v[j];
    }
  }
  return result;
}

void oim_apply_update(OimState& state, const Matrix& features,
                      std::span<const IdentityId> labels) {
  ACAE_REQUIRE(labels.size() == features.rows(), ErrorCode::kDimensionMismatch,
          "label count does not match feature rows");
  for (std::size_t i = 0; i < features.rows(); ++i) {
    if (labels[i] == kUnlabeled)
      state.push_unlabeled(features.row(i));
    else
      state.update_identity(labels[i], features.row(i));
  }
}

OimLoss oim_step(const Matrix& features, std::span<const IdentityId> labels,
                 OimState& state) {
  OimLoss result = oim_loss(features, labels, state);
  oim_apply_update(state, features, labels);
  return result;
}

}  // namespace acae
