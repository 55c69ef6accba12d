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

#include <span>
#include <string>
#include <vector>

#include "acae/feature_set.hpp"
#include "acae/head.hpp"

namespace acae {

/// Which of the three contextual embeddings enter the contextual score.
struct FeatureSubset {
  bool intra = true;
  bool inter = true;
  bool final = true;

  bool any() const { return intra || inter || final; }
  std::size_t count() const { return std::size_t(intra) + inter + final; }
  /// "overall", "intra-only", "final-excluded", ...
  std::string name() const;

  /// The seven non-empty subsets in a fixed order.
  static std::vector<FeatureSubset> all_nonempty();
};

struct FusionConfig {
  Real lambda = Real(0.4);
  FeatureSubset subset;
  bool rescale = true;
  /// L2-normalize every embedding row before dot products.
  bool normalize = true;

  /// Appearance-only scoring: lambda 0, no rescaling.
  static FusionConfig baseline();
  void validate() const;
};

/// Mean of the enabled embedding dot products, one row per node of \p ea.
Matrix contextual_similarity(const ContextualEmbeddings& ea,
                             const ContextualEmbeddings& eb, const FusionConfig& cfg);

Matrix appearance_similarity(const Matrix& a, const Matrix& b, bool normalize = true);

/// lambda * s_c + (1 - lambda) * s_a
Matrix fuse(const Matrix& s_c, const Matrix& s_a, Real lambda);

/// Per-candidate factor c_j / max_{k in G} c_k where c is the softmax of the
/// scores within each gallery image G. \p groups gives each candidate's image.
Vector rescale_factors(std::span<const Real> scores, std::span<const ImageId> groups);
Vector rescale_gallery(std::span<const Real> scores, std::span<const ImageId> groups);

/// The four query-by-gallery dot-product matrices for one image pair. The
/// contextual ones stay empty when no head is supplied.
struct PairSimilarities {
  Matrix appearance;
  Matrix intra;
  Matrix inter;
  Matrix final;
};

PairSimilarities pair_similarities(const Matrix& query_image, const Matrix& gallery_image,
                                   const AcaeParams* params, bool normalize = true);

struct GalleryImageScores {
  ImageId image_id = 0;
  std::vector<std::size_t> candidates;
  Vector appearance;
  Vector contextual;
  Vector fused;
  Vector rescaled;
};

struct ScoredGallery {
  std::size_t query_row = 0;
  std::vector<GalleryImageScores> images;

  /// Scores used for ranking: rescaled when rescaling is on, else fused.
  Vector final_scores(bool rescaled) const;
};

/// Scores one query row against per-image similarity matrices.
ScoredGallery score_from_similarities(std::size_t query_row,
                                      std::span<const PairSimilarities> per_image,
                                      std::span<const ImageId> gallery_ids,
                                      const FusionConfig& cfg);

/// Pairs the query image with every gallery image through the head and scores
/// one of its rows.
ScoredGallery score_query(const FeatureSet& query_image, std::size_t query_row,
                          std::span<const FeatureSet> gallery, const AcaeParams& params,
                          const FusionConfig& cfg);

}  // namespace acae
