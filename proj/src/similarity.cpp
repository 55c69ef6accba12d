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

#include "acae/similarity.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "acae/error.hpp"

namespace acae {

std::string FeatureSubset::name() const {
  if (intra && inter && final) return "overall";
  if (!intra && !inter && !final) return "none";
  if (count() == 1) return intra ? "intra-only" : inter ? "inter-only" : "final-only";
  return !intra ? "intra-excluded" : !inter ? "inter-excluded" : "final-excluded";
}

std::vector<FeatureSubset> FeatureSubset::all_nonempty() {
  return {{true, false, false}, {false, true, false}, {false, false, true},
          {false, true, true},  {true, false, true},  {true, true, false},
          {true, true, true}};
}

FusionConfig FusionConfig::baseline() {
  FusionConfig cfg;
  cfg.lambda = 0;
  cfg.rescale = false;
  return cfg;
}

void FusionConfig::validate() const {
  ACAE_REQUIRE(lambda >= 0 && lambda <= 1, ErrorCode::kConfig,
          "fusion.lambda must lie in [0, 1]");
  ACAE_REQUIRE(lambda == 0 || subset.any(), ErrorCode::kConfig,
          "fusion needs at least one contextual feature when lambda > 0");
}

namespace {

Matrix dots(const Matrix& a, const Matrix& b, bool normalize) {
  if (a.rows() == 0 || b.rows() == 0) return Matrix(a.rows(), b.rows());
  return normalize ? matmul_transposed(l2_normalize_rows(a), l2_normalize_rows(b))
                   : matmul_transposed(a, b);
}

}  // namespace

Matrix contextual_similarity(const ContextualEmbeddings& ea,
                             const ContextualEmbeddings& eb, const FusionConfig& cfg) {
  ACAE_REQUIRE(cfg.subset.any(), ErrorCode::kInvalidArgument,
          "contextual similarity needs a non-empty feature subset");
  Matrix out(ea.final.rows(), eb.final.rows());
  if (cfg.subset.intra) out += dots(ea.intra, eb.intra, cfg.normalize);
  if (cfg.subset.inter) out += dots(ea.inter, eb.inter, cfg.normalize);
  if (cfg.subset.final) out += dots(ea.final, eb.final, cfg.normalize);
  out *= Real(1) / static_cast<Real>(cfg.subset.count());
  return out;
}

Matrix appearance_similarity(const Matrix& a, const Matrix& b, bool normalize) {
  return dots(a, b, normalize);
}

Matrix fuse(const Matrix& s_c, const Matrix& s_a, Real lambda) {
  ACAE_REQUIRE(s_c.rows() == s_a.rows() && s_c.cols() == s_a.cols(),
          ErrorCode::kDimensionMismatch, "fusion of differently shaped score matrices");
  Matrix out(s_a.rows(), s_a.cols());
  auto c = s_c.values();
  auto a = s_a.values();
  auto o = out.values();
  for (std::size_t k = 0; k < o.size(); ++k)
    o[k] = lambda * c[k] + (Real(1) - lambda) * a[k];
  return out;
}

Vector rescale_factors(std::span<const Real> scores, std::span<const ImageId> groups) {
  ACAE_REQUIRE(scores.size() == groups.size(), ErrorCode::kDimensionMismatch,
          "every candidate needs a gallery image");
  std::map<ImageId, std::vector<std::size_t>> members;
  for (std::size_t j = 0; j < groups.size(); ++j) members[groups[j]].push_back(j);
  Vector factors(scores.size(), Real(1));
  for (const auto& [image, idx] : members) {
    Matrix s(1, idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) s(0, k) = scores[idx[k]];
    const Matrix c = softmax_rows(s);
    const Real c_max = *std::max_element(c.values().begin(), c.values().end());
    for (std::size_t k = 0; k < idx.size(); ++k) factors[idx[k]] = c(0, k) / c_max;
  }
  return factors;
}

Vector rescale_gallery(std::span<const Real> scores, std::span<const ImageId> groups) {
  Vector out = rescale_factors(scores, groups);
  for (std::size_t j = 0; j < out.size(); ++j) out[j] *= scores[j];
  return out;
}

PairSimilarities pair_similarities(const Matrix& query_image, const Matrix& gallery_image,
                                   const AcaeParams* params, bool normalize) {
  PairSimilarities out;
  out.appearance = appearance_similarity(query_image, gallery_image, normalize);
  if (params != nullptr) {
    const PairForward f = acae_forward(query_image, gallery_image, *params);
    out.intra = dots(f.a.out.intra, f.b.out.intra, normalize);
    out.inter = dots(f.a.out.inter, f.b.out.inter, normalize);
    out.final = dots(f.a.out.final, f.b.out.final, normalize);
  }
  return out;
}

Vector ScoredGallery::final_scores(bool rescaled) const {
  Vector out;
  for (const auto& img : images) {
    const Vector& src = rescaled ? img.rescaled : img.fused;
    out.insert(out.end(), src.begin(), src.end());
  }
  return out;
}

ScoredGallery score_from_similarities(std::size_t query_row,
                                      std::span<const PairSimilarities> per_image,
                                      std::span<const ImageId> gallery_ids,
                                      const FusionConfig& cfg) {
  cfg.validate();
  ACAE_REQUIRE(per_image.size() == gallery_ids.size(), ErrorCode::kDimensionMismatch,
          "one similarity block per gallery image expected");
  ScoredGallery out;
  out.query_row = query_row;
  const Real inv_count =
      cfg.subset.any() ? Real(1) / static_cast<Real>(cfg.subset.count()) : Real(0);
  for (std::size_t g = 0; g < per_image.size(); ++g) {
    const PairSimilarities& s = per_image[g];
    GalleryImageScores img;
    img.image_id = gallery_ids[g];
    const std::size_t m = s.appearance.cols();
    for (std::size_t j = 0; j < m; ++j) {
      const Real a = s.appearance(query_row, j);
      Real c = 0;
      if (cfg.lambda > 0) {
        ACAE_REQUIRE(s.final.rows() > 0, ErrorCode::kInvalidArgument,
                "contextual scores requested without a head");
        if (cfg.subset.intra) c += s.intra(query_row, j);
        if (cfg.subset.inter) c += s.inter(query_row, j);
        if (cfg.subset.final) c += s.final(query_row, j);
        c *= inv_count;
      }
      img.candidates.push_back(j);
      img.appearance.push_back(a);
      img.contextual.push_back(c);
      img.fused.push_back(cfg.lambda * c + (Real(1) - cfg.lambda) * a);
    }
    if (cfg.rescale) {
      std::vector<ImageId> groups(m, img.image_id);
      img.rescaled = rescale_gallery(img.fused, groups);
    } else {
      img.rescaled = img.fused;
    }
    out.images.push_back(std::move(img));
  }
  return out;
}

ScoredGallery score_query(const FeatureSet& query_image, std::size_t query_row,
                          std::span<const FeatureSet> gallery, const AcaeParams& params,
                          const FusionConfig& cfg) {
  ACAE_REQUIRE(query_row < query_image.size(), ErrorCode::kInvalidArgument,
          "query row out of range");
  std::vector<PairSimilarities> sims;
  std::vector<ImageId> ids;
  const bool need_head = cfg.lambda > 0;
  for (const auto& g : gallery) {
    sims.push_back(pair_similarities(query_image.features, g.features,
                                     need_head ? &params : nullptr, cfg.normalize));
    ids.push_back(g.image_id);
  }
  return score_from_similarities(query_row, sims, ids, cfg);
}

}  // namespace acae
