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
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "acae/feature_set.hpp"

namespace acae {

/// Knobs of a synthetic co-traveler scenario.
struct ScenarioConfig {
  std::size_t n_identities = 40;
  std::size_t dim = 64;
  std::size_t n_images = 400;
  std::size_t persons_min = 2;
  std::size_t persons_max = 5;
  std::size_t group_min = 2;
  std::size_t group_max = 3;
  /// Probability that an image shows its anchor group in full rather than a
  /// single member of it.
  double co_travel_prob = 0.8;
  /// Per-coordinate standard deviation of the observation noise.
  double noise_sigma = 0.1;
  /// Angle in radians between the two identities of a confusable pair.
  double ambiguity_delta = 0.05;
  double confusable_fraction = 0.3;
  /// Probability that a filler slot holds an unlabeled stranger.
  double unlabeled_rate = 0.2;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SyntheticDataset {
  std::size_t dim = 0;
  /// Unit-norm appearance prototype per identity (may be empty for
  /// hand-written files).
  Matrix identity_bases;
  std::vector<std::vector<IdentityId>> groups;
  std::vector<std::pair<IdentityId, IdentityId>> confusable_pairs;
  std::vector<FeatureSet> images;
  /// Index into groups of the anchor group of each image; -1 when unknown.
  std::vector<std::int64_t> anchor_group;

  /// Largest labeled identity + 1.
  std::size_t identity_count() const;

  bool operator==(const SyntheticDataset&) const = default;
};

SyntheticDataset generate(const ScenarioConfig& config);

/// One JSON object per line: an optional scenario header followed by one
/// record per image.
void write_dataset(const SyntheticDataset& dataset, std::ostream& out);
SyntheticDataset read_dataset(std::istream& in);
void save_dataset(const SyntheticDataset& dataset, const std::string& path);
SyntheticDataset load_dataset(const std::string& path);

}  // namespace acae
