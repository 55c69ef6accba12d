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

#include "acae/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "acae/error.hpp"
#include "acae/rng.hpp"

namespace acae {

Real TrainSchedule::learning_rate_at(std::size_t epoch) const {
  Real lr = learning_rate;
  for (std::size_t s : lr_steps)
    if (epoch >= s) lr *= lr_decay;
  return lr;
}

void TrainSchedule::validate() const {
  ACAE_REQUIRE(learning_rate >= 0 && std::isfinite(learning_rate), ErrorCode::kConfig,
          "train.lr must be a finite value >= 0");
  ACAE_REQUIRE(loss_weight >= 0, ErrorCode::kConfig, "train.loss_weight must be >= 0");
  ACAE_REQUIRE(lr_decay >= 0, ErrorCode::kConfig, "train.lr_decay must be >= 0");
  ACAE_REQUIRE(batch_size >= 1, ErrorCode::kConfig, "train.batch_size must be >= 1");
  ACAE_REQUIRE(clip_norm >= 0, ErrorCode::kConfig, "train.clip_norm must be >= 0");
}

Trainer::Trainer(AcaeParams params, std::vector<FeatureSet> images,
                 const TrainOptions& options, std::size_t identities)
    : params_(std::move(params)), images_(std::move(images)), options_(options) {
  options_.schedule.validate();
  ACAE_REQUIRE(images_.size() >= 2, ErrorCode::kInvalidArgument,
          "training needs at least two images");
  ACAE_REQUIRE(identities >= 1, ErrorCode::kInvalidArgument,
          "training needs at least one labeled identity");
  for (const auto& img : images_)
    ACAE_REQUIRE(img.dim() == params_.config.dim || img.size() == 0,
            ErrorCode::kDimensionMismatch, "image feature width differs from the head");
  bank_ = ImageMemoryBank(images_, appoint_pairs(images_, derive_seed(options_.seed, "pairs")));
  bank_.set_momentum(options_.imb_momentum);
  oim_ = OimState::random(identities, params_.config.dim, options_.oim,
                          derive_seed(options_.seed, "oim.lut"));
  accum_ = AcaeParams::zeros(params_.config);
}

StepResult Trainer::training_step(std::size_t index) {
  ACAE_REQUIRE(index < images_.size(), ErrorCode::kInvalidArgument, "image index out of range");
  const FeatureSet& image = images_[index];
  StepResult result;
  result.frozen = options_.schedule.freeze_first_epoch && epoch_ == 0;

  std::optional<FeatureSet> pair = bank_.fetch_pair(image.image_id);
  if (!pair) {
    result.cold_pair = true;
  } else if (image.size() > 0) {
    if (!options_.include_unlabeled_pair) {
      std::vector<std::size_t> keep;
      for (std::size_t r = 0; r < pair->size(); ++r)
        if (pair->labels[r] != kUnlabeled) keep.push_back(r);
      pair->features = select_rows(pair->features, keep);
      std::vector<IdentityId> labels(keep.size(), kUnlabeled);
      for (std::size_t i = 0; i < keep.size(); ++i) labels[i] = pair->labels[keep[i]];
      pair->labels = std::move(labels);
    }
    const PairInstance inst{image, *pair};
    Matrix embedding;
    if (result.frozen) {
      const PairForward f = acae_forward(inst.a, inst.b, params_);
      result.loss = pair_oim_loss(params_, inst, oim_, options_.supervision);
      embedding = f.a.out.final;
    } else {
      LossAndGradients lg =
          pair_oim_loss_and_gradients(params_, inst, oim_, options_.supervision);
      result.loss = lg.loss;
      embedding = lg.forward.a.out.final;
      auto acc = param_blocks(accum_);
      auto g = param_blocks(std::as_const(lg.grads.params));
      for (std::size_t b = 0; b < acc.size(); ++b)
        for (std::size_t i = 0; i < acc[b].values.size(); ++i)
          acc[b].values[i] += options_.schedule.loss_weight * g[b].values[i];
      ++accumulated_;
    }
    ACAE_REQUIRE(std::isfinite(result.loss), ErrorCode::kNumerical, "non-finite training loss");
    for (IdentityId id : image.labels) result.labeled_rows += id != kUnlabeled;
    oim_apply_update(oim_, l2_normalize_rows(embedding), image.labels);
  }

  const auto [labeled, unlabeled] = split_labeled(image);
  bank_.update(image.image_id, labeled, unlabeled);

  if (accumulated_ >= options_.schedule.batch_size) flush_batch();
  return result;
}

void Trainer::flush_batch() {
  if (accumulated_ == 0) return;
  const Real lr = options_.schedule.learning_rate_at(epoch_);
  auto p = param_blocks(params_);
  auto acc = param_blocks(accum_);
  Real scale = lr / static_cast<Real>(accumulated_);
  if (options_.schedule.clip_norm > 0) {
    double sq = 0;
    for (const auto& block : acc)
      for (Real g : block.values) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq) / static_cast<double>(accumulated_);
    if (norm > options_.schedule.clip_norm)
      scale *= static_cast<Real>(options_.schedule.clip_norm / norm);
  }
  for (std::size_t b = 0; b < p.size(); ++b) {
    for (std::size_t i = 0; i < p[b].values.size(); ++i) {
      p[b].values[i] -= scale * acc[b].values[i];
      acc[b].values[i] = 0;
    }
  }
  accumulated_ = 0;
  ACAE_REQUIRE(params_.all_finite(), ErrorCode::kNumerical, "parameters became non-finite");
}

EpochStats Trainer::run_epoch() {
  EpochStats stats;
  stats.epoch = epoch_;
  stats.learning_rate = options_.schedule.learning_rate_at(epoch_);
  stats.frozen = options_.schedule.freeze_first_epoch && epoch_ == 0;

  std::vector<std::size_t> order(images_.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(options_.seed, "train.order", epoch_));
  std::shuffle(order.begin(), order.end(), rng);

  double total = 0;
  std::size_t warm = 0;
  for (std::size_t idx : order) {
    const StepResult r = training_step(idx);
    ++stats.steps;
    if (r.cold_pair) {
      ++stats.cold_pairs;
    } else if (images_[idx].size() > 0) {
      total += r.loss;
      ++warm;
    }
  }
  flush_batch();
  stats.mean_loss = warm > 0 ? static_cast<Real>(total / static_cast<double>(warm)) : 0;
  ++epoch_;
  return stats;
}

std::vector<EpochStats> Trainer::run() {
  std::vector<EpochStats> out;
  while (epoch_ < options_.schedule.epochs) out.push_back(run_epoch());
  return out;
}

}  // namespace acae
