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
#include <vector>

#include "acae/tensor.hpp"

namespace acae {

using IdentityId = std::int32_t;
using ImageId = std::int64_t;

inline constexpr IdentityId kUnlabeled = -1;

/// The person instances detected in one image: one appearance vector per row
/// plus the identity of each row (or kUnlabeled).
struct FeatureSet {
  ImageId image_id = 0;
  Matrix features;
  std::vector<IdentityId> labels;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }

  bool operator==(const FeatureSet&) const = default;
};

}  // namespace acae
