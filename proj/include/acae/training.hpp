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
#include <optional>
#include <span>
#include <vector>

#include "acae/autodiff.hpp"
#include "acae/feature_set.hpp"
#include "acae/head.hpp"
#include "acae/memory_bank.hpp"
#include "acae/oim.hpp"

namespace acae {

struct TrainSchedule {
  std::size_t epochs = 30;
  Real learning_rate = Real(1);
  Real loss_weight = Real(0.1);
  /// Epoch 0 computes the loss and refreshes the memories but leaves the
  /// parameters alone.
  bool freeze_first_epoch = true;
  /// Epochs at which the learning rate is multiplied by lr_decay.
  std::vector<std::size_t> lr_steps;
  Real lr_decay = Real(0.1);
  /// Images per parameter update.
  std::size_t batch_size = 4;
  /// Rescales an update whose global gradient norm exceeds this value;
  /// 0 disables clipping.
  Real clip_norm = Real(1);

  Real learning_rate_at(std::size_t epoch) const;
  void validate() const;
};

struct TrainOptions {
  TrainSchedule schedule;
  SupervisionOptions supervision;
  /// Feed the pair image's unlabeled rows into the forward pass as context.
  bool include_unlabeled_pair = true;
  Real imb_momentum = 0;
  OimConfig oim;
  std::uint64_t seed = 1;
};

struct StepResult {
  bool cold_pair = false;
  bool frozen = false;
  Real loss = 0;  // unweighted OIM loss on the pair; 0 when cold
  std::size_t labeled_rows = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  Real learning_rate = 0;
  bool frozen = false;
  std::size_t steps = 0;
  std::size_t cold_pairs = 0;
  /// Mean unweighted loss over warm steps.
  Real mean_loss = 0;
};

/// Owns the head parameters, the image memory bank and the OIM memory for
/// one training run over a fixed list of images. The appearance extractor is
/// frozen, so an image's appearance features are its stored features.
class Trainer {
 public:
  Trainer(AcaeParams params, std::vector<FeatureSet> images, const TrainOptions& options,
          std::size_t identities);

  /// One visit of images()[index]. Parameter updates happen when a batch of
  /// accumulated gradients is complete.
  StepResult training_step(std::size_t index);

  /// Visits every image once in a seeded order, then flushes the batch.
  EpochStats run_epoch();

  std::vector<EpochStats> run();

  const AcaeParams& params() const { return params_; }
  AcaeParams& mutable_params() { return params_; }
  const ImageMemoryBank& bank() const { return bank_; }
  ImageMemoryBank& mutable_bank() { return bank_; }
  const OimState& oim() const { return oim_; }
  OimState& mutable_oim() { return oim_; }
  const std::vector<FeatureSet>& images() const { return images_; }
  std::size_t epoch() const { return epoch_; }
  const TrainOptions& options() const { return options_; }

 private:
  void flush_batch();

  AcaeParams params_;
  std::vector<FeatureSet> images_;
  TrainOptions options_;
  ImageMemoryBank bank_;
  OimState oim_;
  AcaeParams accum_;
  std::size_t accumulated_ = 0;
  std::size_t epoch_ = 0;
};

}  // namespace acae
