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
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "acae/feature_set.hpp"
#include "acae/tensor.hpp"

namespace acae {

using PairMap = std::map<ImageId, ImageId>;

/// For every image, the other image sharing the most labeled identities.
/// Ties go to the smallest image id; an image with no overlap at all gets a
/// seeded uniform pick among the others.
PairMap appoint_pairs(std::span<const FeatureSet> images, std::uint64_t seed);

/// Per-image store of the most recent labeled (L_I) and unlabeled (U_I)
/// features. Each visit replaces the image's entry.
class ImageMemoryBank {
 public:
  struct Entry {
    std::vector<IdentityId> labels;  // ground-truth labeled identities, row order of L_I
    Matrix labeled;
    Matrix unlabeled;
    bool visited = false;
  };

  ImageMemoryBank() = default;
  /// Registers every image with its ground-truth labeled identity list.
  explicit ImageMemoryBank(std::span<const FeatureSet> images, PairMap pairs = {});

  void register_image(ImageId image, std::vector<IdentityId> labeled_ids);
  void set_pairs(PairMap pairs) { pairs_ = std::move(pairs); }
  const PairMap& pairs() const { return pairs_; }

  /// 0 replaces L_I outright; m > 0 blends m * old + (1 - m) * new once the
  /// image has been visited. U_I is always replaced.
  void set_momentum(Real m) { momentum_ = m; }
  Real momentum() const { return momentum_; }

  /// Throws when \p labeled does not have one row per ground-truth labeled
  /// person of \p image.
  void update(ImageId image, const Matrix& labeled, const Matrix& unlabeled);

  /// L_I rows (with identities) followed by U_I rows (kUnlabeled), or
  /// nullopt when the image has not been visited yet.
  std::optional<FeatureSet> fetch(ImageId image) const;

  /// fetch() of the appointed pair image. nullopt signals a cold pair.
  std::optional<FeatureSet> fetch_pair(ImageId image) const;

  const std::map<ImageId, Entry>& entries() const { return entries_; }
  /// Restores a stored entry verbatim (checkpoint loading).
  void restore(ImageId image, Entry entry);

 private:
  std::map<ImageId, Entry> entries_;
  PairMap pairs_;
  Real momentum_ = 0;
};

/// Splits an image's rows into (labeled, unlabeled) feature matrices in row
/// order, as the frozen extractor hands them to the bank.
std::pair<Matrix, Matrix> split_labeled(const FeatureSet& image);

}  // namespace acae
