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

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "acae/error.hpp"
#include "acae/eval.hpp"
#include "acae/synth.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_util.hpp"

using acae::EvalProtocol;
using acae::FusionConfig;
using acae::Matrix;
using acae::Real;

namespace {

std::optional<double> ap(const std::vector<int>& flags) {
  const std::unique_ptr<bool[]> raw(new bool[flags.size() + 1]);
  for (std::size_t i = 0; i < flags.size(); ++i) raw[i] = flags[i] != 0;
  return acae::average_precision(std::span<const bool>(raw.get(), flags.size()));
}

const acae::SyntheticDataset& scenario() {
  static const acae::SyntheticDataset ds = [] {
    acae::ScenarioConfig c;
    c.n_identities = 20;
    c.dim = 16;
    c.n_images = 80;
    c.seed = 9;
    return acae::generate(c);
  }();
  return ds;
}

acae::AcaeParams head() {
  acae::AcaeConfig c;
  c.dim = 16;
  c.heads = 2;
  c.ff_dim = 32;
  return acae::AcaeParams::initialize(c, 4);
}

EvalProtocol protocol(std::size_t gallery = 20) {
  EvalProtocol p;
  p.gallery_size = gallery;
  p.seed = 5;
  return p;
}

}  // namespace

TEST_CASE("average precision fixtures") {
  CHECK(ap({1}).value() == 1.0);
  CHECK(ap({1, 0, 0, 0}).value() == 1.0);
  CHECK(ap({0, 1}).value() == 0.5);
  CHECK(ap({1, 0, 1}).value() == 5.0 / 6.0);
  CHECK_FALSE(ap({0, 0}).has_value());
  CHECK_FALSE(ap({}).has_value());
}

TEST_CASE("average precision matches the definition on random lists") {
  acae::Rng rng(3);
  std::bernoulli_distribution coin(0.3);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<int> flags(1 + trial % 17);
    for (auto& f : flags) f = coin(rng);
    flags[trial % flags.size()] = 1;
    const auto got = ap(flags);
    CHECK(std::abs(got.value() - oracle::average_precision(flags)) < 1e-15);
  }
}

TEST_CASE("hit_at") {
  const bool flags[] = {false, false, true};
  CHECK_FALSE(acae::hit_at(flags, 1));
  CHECK_FALSE(acae::hit_at(flags, 2));
  CHECK(acae::hit_at(flags, 3));
  CHECK(acae::hit_at(flags, 10));
}

TEST_CASE("protocol validation and the held-out split") {
  EvalProtocol p;
  p.gallery_size = 0;
  CHECK_THROWS_AS(p.validate(), acae::Error);
  p = EvalProtocol{};
  p.test_fraction = 0;
  CHECK_THROWS_AS(p.validate(), acae::Error);
  const auto train = acae::train_indices(10, 0.5);
  const auto test = acae::test_indices(10, 0.5);
  CHECK(train == std::vector<std::size_t>{0, 1, 2, 3, 4});
  CHECK(test == std::vector<std::size_t>{5, 6, 7, 8, 9});
}

TEST_CASE("queries: galleries hold a true match and exclude the query image") {
  const auto& ds = scenario();
  const auto p = protocol(10);
  const auto queries = acae::build_queries(ds.images, p);
  REQUIRE_FALSE(queries.empty());
  const auto test = acae::test_indices(ds.images.size(), p.test_fraction);
  for (const auto& q : queries) {
    CHECK(q.gallery.size() <= 10);
    CHECK(std::is_sorted(q.gallery.begin(), q.gallery.end()));
    CHECK(std::find(q.gallery.begin(), q.gallery.end(), q.image) == q.gallery.end());
    CHECK(ds.images[q.image].labels[q.row] == q.identity);
    bool match = false;
    for (std::size_t g : q.gallery) {
      CHECK(std::binary_search(test.begin(), test.end(), g));
      for (auto id : ds.images[g].labels) match = match || id == q.identity;
    }
    CHECK(match);
  }
  CHECK(acae::build_queries(ds.images, p).size() == queries.size());
}

TEST_CASE("evaluate: mAP is the mean AP, top-k is monotone, runs repeat exactly") {
  const auto& ds = scenario();
  const auto params = head();
  const auto r1 = acae::evaluate(ds.images, params, protocol());
  const auto r2 = acae::evaluate(ds.images, params, protocol());
  REQUIRE(r1.rows.size() == 2);
  CHECK(r1.rows[0].name == "baseline");
  CHECK(r1.rows[1].name == "acae");
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& m = r1.rows[k];
    CHECK(m.ap.size() == r1.queries);
    CHECK(m.map == std::accumulate(m.ap.begin(), m.ap.end(), 0.0) / double(m.ap.size()));
    CHECK(m.top1 <= m.top5);
    CHECK(m.top5 <= m.top10);
    CHECK(m.map >= 0);
    CHECK(m.map <= 1);
    CHECK(m.map == r2.rows[k].map);
    CHECK(m.ap == r2.rows[k].ap);
  }
}

TEST_CASE("evaluate: lambda 0 equals plain appearance ranking") {
  const auto& ds = scenario();
  const auto p = protocol();
  const std::vector<acae::NamedConfig> configs = {{"baseline", FusionConfig::baseline()}};
  const auto report = acae::evaluate(ds.images, nullptr, p, configs);
  const auto queries = acae::build_queries(ds.images, p);
  REQUIRE(queries.size() == report.queries);
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto& query = queries[q];
    const Matrix probe = acae::l2_normalize_rows(ds.images[query.image].features);
    std::vector<std::pair<double, int>> scored;
    for (std::size_t g : query.gallery) {
      const Matrix cand = acae::l2_normalize_rows(ds.images[g].features);
      for (std::size_t r = 0; r < cand.rows(); ++r) {
        double s = 0;
        for (std::size_t t = 0; t < cand.cols(); ++t) s += probe(query.row, t) * cand(r, t);
        scored.push_back({s, ds.images[g].labels[r] == query.identity});
      }
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<int> flags;
    for (const auto& s : scored) flags.push_back(s.second);
    CHECK(std::abs(report.rows[0].ap[q] - oracle::average_precision(flags)) < 1e-12);
  }
}

TEST_CASE("evaluate: separable data scores perfectly with and without the head") {
  acae::ScenarioConfig c;
  c.n_identities = 20;
  c.dim = 16;
  c.n_images = 80;
  c.noise_sigma = 0;
  c.ambiguity_delta = 1.2;
  c.seed = 2;
  const auto ds = acae::generate(c);
  const auto report = acae::evaluate(ds.images, head(), protocol());
  CHECK(report.rows[0].map == 1.0);
  CHECK(report.rows[1].map == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("evaluate: a dataset without queries is rejected") {
  std::vector<acae::FeatureSet> images = {
      testutil::feature_set(0, testutil::random_matrix(1, 4, 1), {0}),
      testutil::feature_set(1, testutil::random_matrix(1, 4, 2), {1})};
  const std::vector<acae::NamedConfig> configs = {{"baseline", FusionConfig::baseline()}};
  CHECK_THROWS_AS(acae::evaluate(images, nullptr, protocol(), configs), acae::Error);
}

TEST_CASE("sweeps: lambda rows and the eight subset rows") {
  const auto& ds = scenario();
  const auto params = head();
  const std::vector<Real> lambdas = {0, 0.2, 0.4};
  const auto sweep = acae::sweep_lambda(ds.images, params, protocol(), lambdas);
  const auto base = acae::evaluate(ds.images, params, protocol());
  REQUIRE(sweep.rows.size() == lambdas.size() + 1);
  CHECK(sweep.rows[0].name == "baseline");
  CHECK(sweep.rows[1].ap == base.rows[0].ap);
  CHECK(sweep.rows[0].ap == base.rows[0].ap);
  CHECK(sweep.rows[3].ap == base.rows[1].ap);

  const auto subsets = acae::sweep_subsets(ds.images, params, protocol());
  REQUIRE(subsets.rows.size() == 8);
  CHECK(subsets.rows[0].ap == base.rows[0].ap);
  CHECK(subsets.row("overall").ap == base.rows[1].ap);
  CHECK(subsets.table().rows().size() == 8);
}

TEST_CASE("delta table reports the second row minus the first") {
  const auto& ds = scenario();
  const auto report = acae::evaluate(ds.images, head(), protocol());
  const auto t = acae::delta_table(report);
  REQUIRE(t.rows().size() == 4);
  CHECK(t.rows()[0][0] == "mAP");
  CHECK(t.columns() == std::vector<std::string>{"metric", "baseline", "acae", "delta"});
}

TEST_CASE("k-reciprocal: lambda 1 returns the original distances exactly") {
  const Matrix q = testutil::random_matrix(2, 5, 10);
  const Matrix g = testutil::random_matrix(7, 5, 11);
  const Matrix d = acae::k_reciprocal_rerank(q, g, 4, 2, 1);
  const Matrix all = acae::l2_normalize_rows(acae::vstack(q, g));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      CHECK(d(i, j) == Real(2) - Real(2) * acae::dot(all.row(i), all.row(2 + j)));
}

TEST_CASE("k-reciprocal: six-point instance matches the set oracle") {
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    const Matrix q = testutil::random_matrix(1, 3, seed);
    const Matrix g = testutil::random_matrix(5, 3, seed + 100);
    for (auto [k1, k2] : {std::pair<std::size_t, std::size_t>{3, 1}, {3, 2}, {4, 3}, {5, 2}})
      for (double lr : {0.0, 0.3, 0.7}) {
        const Matrix got = acae::k_reciprocal_rerank(q, g, k1, k2, lr);
        const auto expect = oracle::k_reciprocal(q, g, k1, k2, lr);
        CAPTURE(seed);
        CAPTURE(k1);
        CAPTURE(k2);
        CHECK(testutil::max_abs_diff(got, expect) < 1e-9);
      }
  }
}

TEST_CASE("k-reciprocal: multi-query instance matches the set oracle") {
  const Matrix q = testutil::random_matrix(3, 4, 40);
  const Matrix g = testutil::random_matrix(9, 4, 41);
  const Matrix got = acae::k_reciprocal_rerank(q, g, 6, 3, 0.3);
  CHECK(testutil::max_abs_diff(got, oracle::k_reciprocal(q, g, 6, 3, 0.3)) < 1e-9);
}

TEST_CASE("k-reciprocal: a single candidate keeps its rank; bounds are clamped") {
  const Matrix q = testutil::random_matrix(1, 4, 50);
  const Matrix g = testutil::random_matrix(1, 4, 51);
  std::vector<std::string> warnings;
  const Matrix d = acae::k_reciprocal_rerank(q, g, 20, 6, 0.3, &warnings);
  CHECK(d.rows() == 1);
  CHECK(d.cols() == 1);
  CHECK(std::isfinite(d(0, 0)));
  CHECK(warnings.size() == 2);
  CHECK_THROWS_AS(acae::k_reciprocal_rerank(q, g, 3, 3, 0.3), acae::Error);
  CHECK_THROWS_AS(acae::k_reciprocal_rerank(q, g, 3, 0, 0.3), acae::Error);
}

TEST_CASE("k-reciprocal: default grid and comparison report") {
  const auto grid = acae::default_rerank_grid();
  CHECK(grid.size() == 18);
  const auto& ds = scenario();
  const std::vector<acae::RerankParams> small = {{10, 3, Real(0.3)}, {20, 6, Real(0.5)}};
  const auto cmp = acae::compare_rerank(ds.images, head(), protocol(), small);
  REQUIRE(cmp.report.rows.size() == 3);
  CHECK(cmp.grid.size() == 2);
  CHECK(cmp.report.rows[0].name == "baseline");
  CHECK(cmp.report.rows[2].name == "acae");
}

TEST_CASE("bench: zero repeats is empty, otherwise the head costs time") {
  const auto& ds = scenario();
  const auto params = head();
  const auto empty = acae::bench_overhead(ds.images, params, FusionConfig{}, 0);
  CHECK(empty.repeats == 0);
  CHECK(empty.pairs == 0);
  const auto r = acae::bench_overhead(ds.images, params, FusionConfig{}, 5, 16);
  CHECK(r.repeats == 5);
  CHECK(r.pairs == 16);
  CHECK(r.delta_ms() > 0);
  const auto t = r.table();
  REQUIRE(t.rows().size() == 3);
  CHECK(t.rows()[0][0] == "appearance");
  CHECK(t.rows()[1][0] == "appearance+acae");
  CHECK(t.rows()[2][0] == "delta");
}
