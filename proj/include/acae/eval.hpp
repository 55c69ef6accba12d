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
#include <string>
#include <string_view>
#include <vector>

#include "acae/feature_set.hpp"
#include "acae/head.hpp"
#include "acae/report.hpp"
#include "acae/similarity.hpp"

namespace acae {

/// Mean over relevant positions k of precision@k. nullopt when nothing in the
/// list is relevant.
std::optional<double> average_precision(std::span<const bool> ranked_relevant);

/// True when a relevant item sits within the first k positions.
bool hit_at(std::span<const bool> ranked_relevant, std::size_t k);

struct EvalProtocol {
  std::size_t gallery_size = 100;
  /// Trailing fraction of the image list held out for evaluation; training
  /// uses the rest.
  double test_fraction = 0.5;
  std::uint64_t seed = 1;
  FusionConfig fusion;

  void validate() const;
};

std::vector<std::size_t> train_indices(std::size_t n_images, double test_fraction);
std::vector<std::size_t> test_indices(std::size_t n_images, double test_fraction);

struct Query {
  std::size_t image = 0;  // index into the image list
  std::size_t row = 0;
  IdentityId identity = kUnlabeled;
  std::vector<std::size_t> gallery;  // ascending image indices
};

/// One query per labeled person of a test image whose identity shows up in
/// another test image. The gallery holds at least one true-match image.
std::vector<Query> build_queries(std::span<const FeatureSet> images,
                                 const EvalProtocol& protocol,
                                 std::size_t* skipped = nullptr);

struct NamedConfig {
  std::string name;
  FusionConfig fusion;
};

struct ConfigMetrics {
  std::string name;
  FusionConfig fusion;
  double map = 0;
  double top1 = 0;
  double top5 = 0;
  double top10 = 0;
  std::vector<double> ap;
};

struct EvalReport {
  std::vector<ConfigMetrics> rows;
  std::size_t queries = 0;
  std::size_t skipped = 0;
  std::size_t pairs = 0;
  double appearance_seconds = 0;
  double head_seconds = 0;

  const ConfigMetrics& row(std::string_view name) const;
  Table table() const;
};

/// Scores every query under each configuration. \p params may be null when
/// every configuration has lambda 0.
EvalReport evaluate(std::span<const FeatureSet> images, const AcaeParams* params,
                    const EvalProtocol& protocol, std::span<const NamedConfig> configs);

/// Side by side: appearance-only baseline and protocol.fusion.
EvalReport evaluate(std::span<const FeatureSet> images, const AcaeParams& params,
                    const EvalProtocol& protocol);

/// Baseline row followed by one row per lambda, other fusion settings from
/// the protocol. A lambda of 0 is reported as the baseline itself.
EvalReport sweep_lambda(std::span<const FeatureSet> images, const AcaeParams& params,
                        const EvalProtocol& protocol, std::span<const Real> lambdas);

/// Baseline plus the seven non-empty feature subsets.
EvalReport sweep_subsets(std::span<const FeatureSet> images, const AcaeParams& params,
                         const EvalProtocol& protocol);

/// Side-by-side table with a delta column per metric (second row minus first).
Table delta_table(const EvalReport& report);

/// k-reciprocal re-ranking over Euclidean distances of unit-normalized rows
/// (d^2 = 2 - 2 cos). Returns the (queries x gallery) blended distance
/// lambda_r * d + (1 - lambda_r) * d_jaccard. Neighborhood sizes beyond the
/// probe set are clamped and reported in \p warnings.
Matrix k_reciprocal_rerank(const Matrix& query, const Matrix& gallery, std::size_t k1,
                           std::size_t k2, Real lambda_r,
                           std::vector<std::string>* warnings = nullptr);

struct RerankParams {
  std::size_t k1 = 20;
  std::size_t k2 = 6;
  Real lambda = Real(0.3);

  std::string name() const;
};

std::vector<RerankParams> default_rerank_grid();

/// Appearance-only retrieval re-ranked with k-reciprocal encoding.
ConfigMetrics evaluate_rerank(std::span<const FeatureSet> images,
                              const EvalProtocol& protocol, const RerankParams& rerank);

struct RerankComparison {
  EvalReport report;  // baseline, best k-reciprocal, ACAE
  RerankParams best;
  std::vector<ConfigMetrics> grid;
};

/// Picks the grid point with the best mean of mAP and top-1.
RerankComparison compare_rerank(std::span<const FeatureSet> images,
                                const AcaeParams& params, const EvalProtocol& protocol,
                                std::span<const RerankParams> grid);

struct BenchReport {
  std::size_t repeats = 0;
  std::size_t pairs = 0;
  double appearance_mean_ms = 0;
  double appearance_std_ms = 0;
  double acae_mean_ms = 0;
  double acae_std_ms = 0;

  double delta_ms() const { return acae_mean_ms - appearance_mean_ms; }
  Table table() const;
};

/// Per-pair wall time of appearance scoring alone and with the head added.
BenchReport bench_overhead(std::span<const FeatureSet> images, const AcaeParams& params,
                           const FusionConfig& fusion, std::size_t repeats,
                           std::size_t max_pairs = 64);

}  // namespace acae
