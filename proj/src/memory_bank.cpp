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

#include "acae/memory_bank.hpp"

#include <algorithm>
#include <set>
#include <string>

#include "acae/error.hpp"
#include "acae/rng.hpp"

namespace acae {

PairMap appoint_pairs(std::span<const FeatureSet> images, std::uint64_t seed) {
  ACAE_REQUIRE(images.size() >= 2, ErrorCode::kInvalidArgument,
          "pair appointment needs at least two images");
  std::vector<std::set<IdentityId>> ids(images.size());
  for (std::size_t i = 0; i < images.size(); ++i)
    for (IdentityId id : images[i].labels)
      if (id != kUnlabeled) ids[i].insert(id);

  Rng rng(derive_seed(seed, "imb.pairs"));
  PairMap pairs;
  for (std::size_t i = 0; i < images.size(); ++i) {
    std::size_t best_overlap = 0;
    std::optional<ImageId> best;
    for (std::size_t j = 0; j < images.size(); ++j) {
      if (j == i) continue;
      std::size_t overlap = 0;
      for (IdentityId id : ids[i]) overlap += ids[j].count(id);
      const ImageId candidate = images[j].image_id;
      if (overlap == 0) continue;
      if (overlap > best_overlap || (overlap == best_overlap && candidate < *best)) {
        best_overlap = overlap;
        best = candidate;
      }
    }
    if (!best) {
      std::size_t pick = uniform_index(rng, images.size() - 1);
      if (pick >= i) ++pick;
      best = images[pick].image_id;
    }
    pairs[images[i].image_id] = *best;
  }
  return pairs;
}

ImageMemoryBank::ImageMemoryBank(std::span<const FeatureSet> images, PairMap pairs)
    : pairs_(std::move(pairs)) {
  for (const auto& img : images) {
    std::vector<IdentityId> labeled;
    for (IdentityId id : img.labels)
      if (id != kUnlabeled) labeled.push_back(id);
    register_image(img.image_id, std::move(labeled));
  }
}

void ImageMemoryBank::register_image(ImageId image, std::vector<IdentityId> labeled_ids) {
  Entry& e = entries_[image];
  e = Entry{};
  e.labels = std::move(labeled_ids);
}

void ImageMemoryBank::update(ImageId image, const Matrix& labeled,
                             const Matrix& unlabeled) {
  auto it = entries_.find(image);
  ACAE_REQUIRE(it != entries_.end(), ErrorCode::kInvalidArgument,
          "image " + std::to_string(image) + " is not registered in the memory bank");
  Entry& e = it->second;
  ACAE_REQUIRE(labeled.rows() == e.labels.size(), ErrorCode::kDimensionMismatch,
          "image " + std::to_string(image) + " has " + std::to_string(e.labels.size()) +
              " labeled persons, update carries " + std::to_string(labeled.rows()));
  ACAE_REQUIRE(labeled.all_finite() && unlabeled.all_finite(), ErrorCode::kNumerical,
          "non-finite features in memory bank update");
  if (momentum_ > Real(0) && e.visited && e.labeled.rows() == labeled.rows() &&
      e.labeled.cols() == labeled.cols()) {
    auto old = e.labeled.values();
    auto fresh = labeled.values();
    for (std::size_t k = 0; k < old.size(); ++k)
      old[k] = momentum_ * old[k] + (Real(1) - momentum_) * fresh[k];
  } else {
    e.labeled = labeled;
  }
  e.unlabeled = unlabeled;
  e.visited = true;
}

std::optional<FeatureSet> ImageMemoryBank::fetch(ImageId image) const {
  auto it = entries_.find(image);
  if (it == entries_.end() || !it->second.visited) return std::nullopt;
  const Entry& e = it->second;
  FeatureSet out;
  out.image_id = image;
  out.features = vstack(e.labeled, e.unlabeled);
  out.labels = e.labels;
  out.labels.insert(out.labels.end(), e.unlabeled.rows(), kUnlabeled);
  return out;
}

std::optional<FeatureSet> ImageMemoryBank::fetch_pair(ImageId image) const {
  auto it = pairs_.find(image);
  ACAE_REQUIRE(it != pairs_.end(), ErrorCode::kInvalidArgument,
          "image " + std::to_string(image) + " has no appointed pair");
  return fetch(it->second);
}

void ImageMemoryBank::restore(ImageId image, Entry entry) {
  entries_[image] = std::move(entry);
}

std::pair<Matrix, Matrix> split_labeled(const FeatureSet& image) {
  std::vector<std::size_t> lab, unl;
  for (std::size_t i = 0; i < image.labels.size(); ++i)
    (image.labels[i] == kUnlabeled ? unl : lab).push_back(i);
  Matrix l = select_rows(image.features, lab);
  Matrix u = select_rows(image.features, unl);
  if (l.rows() == 0) l = Matrix(0, image.dim());
  if (u.rows() == 0) u = Matrix(0, image.dim());
  return {std::move(l), std::move(u)};
}

}  // namespace acae
