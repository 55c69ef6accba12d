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

#include "acae/eval.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <set>
#include <thread>

#include "acae/error.hpp"
#include "acae/rng.hpp"

namespace acae {

std::optional<double> average_precision(std::span<const bool> ranked_relevant) {
  // Extended accumulation so short lists round to the nearest double of the
  // exact rational, e.g. [1, 0, 1] gives 5/6 rather than one ulp below.
  long double sum = 0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < ranked_relevant.size(); ++k) {
    if (!ranked_relevant[k]) continue;
    ++hits;
    sum += static_cast<long double>(hits) / static_cast<long double>(k + 1);
  }
  if (hits == 0) return std::nullopt;
  return static_cast<double>(sum / static_cast<long double>(hits));
}

bool hit_at(std::span<const bool> ranked_relevant, std::size_t k) {
  const std::size_t end = std::min(k, ranked_relevant.size());
  return std::any_of(ranked_relevant.begin(),
                     ranked_relevant.begin() + static_cast<std::ptrdiff_t>(end),
                     [](bool b) { return b; });
}

void EvalProtocol::validate() const {
  ACAE_REQUIRE(gallery_size >= 1, ErrorCode::kConfig, "eval.gallery_size must be at least 1");
  ACAE_REQUIRE(test_fraction > 0 && test_fraction <= 1, ErrorCode::kConfig,
          "eval.test_fraction must lie in (0, 1]");
  fusion.validate();
}

std::vector<std::size_t> train_indices(std::size_t n_images, double test_fraction) {
  const auto n_train = static_cast<std::size_t>(
      std::floor(static_cast<double>(n_images) * (1.0 - test_fraction)));
  std::vector<std::size_t> out(std::min(n_train, n_images));
  std::iota(out.begin(), out.end(), 0);
  return out;
}

std::vector<std::size_t> test_indices(std::size_t n_images, double test_fraction) {
  const std::size_t n_train = train_indices(n_images, test_fraction).size();
  std::vector<std::size_t> out(n_images - n_train);
  std::iota(out.begin(), out.end(), n_train);
  return out;
}

std::vector<Query> build_queries(std::span<const FeatureSet> images,
                                 const EvalProtocol& protocol, std::size_t* skipped) {
  protocol.validate();
  const auto pool = test_indices(images.size(), protocol.test_fraction);
  std::map<IdentityId, std::vector<std::size_t>> images_of;
  for (std::size_t idx : pool) {
    std::set<IdentityId> seen;
    for (IdentityId id : images[idx].labels)
      if (id != kUnlabeled && seen.insert(id).second) images_of[id].push_back(idx);
  }

  std::vector<Query> queries;
  std::size_t skip = 0;
  for (std::size_t idx : pool) {
    for (std::size_t r = 0; r < images[idx].size(); ++r) {
      const IdentityId id = images[idx].labels[r];
      if (id == kUnlabeled) continue;
      std::vector<std::size_t> matches;
      for (std::size_t j : images_of[id])
        if (j != idx) matches.push_back(j);
      if (matches.empty()) {
        ++skip;
        continue;
      }
      Rng rng(derive_seed(protocol.seed, "gallery", queries.size()));
      Query q{idx, r, id, {}};
      const std::size_t forced = matches[uniform_index(rng, matches.size())];
      std::vector<std::size_t> rest;
      for (std::size_t j : pool)
        if (j != idx && j != forced) rest.push_back(j);
      std::shuffle(rest.begin(), rest.end(), rng);
      rest.resize(std::min(rest.size(), protocol.gallery_size - 1));
      q.gallery = std::move(rest);
      q.gallery.push_back(forced);
      std::sort(q.gallery.begin(), q.gallery.end());
      queries.push_back(std::move(q));
    }
  }
  if (skipped != nullptr) *skipped = skip;
  return queries;
}

const ConfigMetrics& EvalReport::row(std::string_view name) const {
  for (const auto& r : rows)
    if (r.name == name) return r;
  fail(ErrorCode::kInvalidArgument, "no report row named " + std::string(name));
}

Table EvalReport::table() const {
  Table t({"config", "lambda", "intra", "inter", "final", "rescale", "mAP", "top1",
           "top5", "top10", "queries"});
  for (const auto& r : rows) {
    const bool ctx = r.fusion.lambda > 0;
    auto flag = [&](bool b) { return std::string(ctx && b ? "1" : "0"); };
    t.add_row({r.name, fmt_real(r.fusion.lambda, 2), flag(r.fusion.subset.intra),
               flag(r.fusion.subset.inter), flag(r.fusion.subset.final),
               r.fusion.rescale ? "1" : "0", fmt_real(100 * r.map, 2),
               fmt_real(100 * r.top1, 2), fmt_real(100 * r.top5, 2),
               fmt_real(100 * r.top10, 2), std::to_string(r.ap.size())});
  }
  return t;
}

namespace {

struct QueryOutcome {
  double ap = 0;
  bool top1 = false;
  bool top5 = false;
  bool top10 = false;
};

/// Ranks candidates by descending score; ties keep candidate order.
std::vector<bool> rank_relevance(std::span<const Real> scores,
                                 std::span<const bool> relevant) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return scores[x] > scores[y]; });
  std::vector<bool> ranked(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) ranked[k] = relevant[order[k]];
  return ranked;
}

QueryOutcome outcome(const std::vector<bool>& ranked) {
  std::vector<char> flags(ranked.begin(), ranked.end());
  std::span<const bool> view(reinterpret_cast<const bool*>(flags.data()), flags.size());
  return {average_precision(view).value_or(0.0), hit_at(view, 1), hit_at(view, 5),
          hit_at(view, 10)};
}

template <typename Fn>
void parallel_for(std::size_t count, Fn&& fn) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(std::thread::hardware_concurrency(), count));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  for (auto& t : pool) t.join();
}

ConfigMetrics aggregate(std::string name, const FusionConfig& fusion,
                        const std::vector<QueryOutcome>& outcomes) {
  ConfigMetrics m;
  m.name = std::move(name);
  m.fusion = fusion;
  for (const auto& o : outcomes) {
    m.ap.push_back(o.ap);
    m.top1 += o.top1;
    m.top5 += o.top5;
    m.top10 += o.top10;
  }
  const double n = static_cast<double>(outcomes.size());
  m.map = std::accumulate(m.ap.begin(), m.ap.end(), 0.0) / n;
  m.top1 /= n;
  m.top5 /= n;
  m.top10 /= n;
  return m;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

EvalReport evaluate(std::span<const FeatureSet> images, const AcaeParams* params,
                    const EvalProtocol& protocol, std::span<const NamedConfig> configs) {
  bool need_head = false;
  for (const auto& c : configs) {
    c.fusion.validate();
    need_head = need_head || c.fusion.lambda > 0;
  }
  ACAE_REQUIRE(!need_head || params != nullptr, ErrorCode::kInvalidArgument,
          "contextual configurations need a model");
  const bool normalize = configs.empty() || configs.front().fusion.normalize;

  EvalReport report;
  std::vector<Query> queries = build_queries(images, protocol, &report.skipped);
  ACAE_REQUIRE(!queries.empty(), ErrorCode::kInvalidArgument,
          "dataset has no valid queries in the evaluation split");
  report.queries = queries.size();

  std::map<std::size_t, std::vector<std::size_t>> by_image;
  for (std::size_t q = 0; q < queries.size(); ++q) by_image[queries[q].image].push_back(q);
  std::vector<std::size_t> query_images;
  for (const auto& [img, _] : by_image) query_images.push_back(img);

  std::vector<std::vector<QueryOutcome>> outcomes(
      configs.size(), std::vector<QueryOutcome>(queries.size()));
  std::vector<double> t_app(query_images.size()), t_head(query_images.size());
  std::vector<std::size_t> n_pairs(query_images.size());

  parallel_for(query_images.size(), [&](std::size_t slot) {
    const std::size_t qi = query_images[slot];
    const FeatureSet& query_image = images[qi];
    std::map<std::size_t, PairSimilarities> cache;
    for (std::size_t q : by_image[qi]) {
      const Query& query = queries[q];
      std::vector<PairSimilarities> sims;
      std::vector<ImageId> ids;
      std::vector<bool> relevant;
      for (std::size_t g : query.gallery) {
        auto it = cache.find(g);
        if (it == cache.end()) {
          PairSimilarities s;
          auto t0 = std::chrono::steady_clock::now();
          s.appearance =
              appearance_similarity(query_image.features, images[g].features, normalize);
          t_app[slot] += seconds_since(t0);
          if (need_head) {
            t0 = std::chrono::steady_clock::now();
            PairSimilarities ctx = pair_similarities(query_image.features,
                                                     images[g].features, params, normalize);
            s.intra = std::move(ctx.intra);
            s.inter = std::move(ctx.inter);
            s.final = std::move(ctx.final);
            t_head[slot] += seconds_since(t0);
          }
          ++n_pairs[slot];
          it = cache.emplace(g, std::move(s)).first;
        }
        sims.push_back(it->second);
        ids.push_back(images[g].image_id);
        for (IdentityId id : images[g].labels) relevant.push_back(id == query.identity);
      }
      std::vector<char> rel(relevant.begin(), relevant.end());
      for (std::size_t c = 0; c < configs.size(); ++c) {
        const ScoredGallery scored =
            score_from_similarities(query.row, sims, ids, configs[c].fusion);
        const Vector scores = scored.final_scores(configs[c].fusion.rescale);
        outcomes[c][q] = outcome(rank_relevance(
            scores, std::span<const bool>(reinterpret_cast<const bool*>(rel.data()),
                                          rel.size())));
      }
    }
  });

  for (std::size_t c = 0; c < configs.size(); ++c)
    report.rows.push_back(aggregate(configs[c].name, configs[c].fusion, outcomes[c]));
  for (std::size_t s = 0; s < query_images.size(); ++s) {
    report.appearance_seconds += t_app[s];
    report.head_seconds += t_head[s];
    report.pairs += n_pairs[s];
  }
  return report;
}

EvalReport evaluate(std::span<const FeatureSet> images, const AcaeParams& params,
                    const EvalProtocol& protocol) {
  FusionConfig base = FusionConfig::baseline();
  base.normalize = protocol.fusion.normalize;
  const std::vector<NamedConfig> configs = {{"baseline", base}, {"acae", protocol.fusion}};
  return evaluate(images, &params, protocol, configs);
}

EvalReport sweep_lambda(std::span<const FeatureSet> images, const AcaeParams& params,
                        const EvalProtocol& protocol, std::span<const Real> lambdas) {
  FusionConfig base = FusionConfig::baseline();
  base.normalize = protocol.fusion.normalize;
  std::vector<NamedConfig> configs = {{"baseline", base}};
  for (Real l : lambdas) {
    if (l == Real(0)) {
      configs.push_back({"lambda=" + fmt_real(l, 2), base});
      continue;
    }
    FusionConfig f = protocol.fusion;
    f.lambda = l;
    configs.push_back({"lambda=" + fmt_real(l, 2), f});
  }
  return evaluate(images, &params, protocol, configs);
}

EvalReport sweep_subsets(std::span<const FeatureSet> images, const AcaeParams& params,
                         const EvalProtocol& protocol) {
  FusionConfig base = FusionConfig::baseline();
  base.normalize = protocol.fusion.normalize;
  std::vector<NamedConfig> configs = {{"baseline", base}};
  for (const auto& subset : FeatureSubset::all_nonempty()) {
    FusionConfig f = protocol.fusion;
    f.subset = subset;
    configs.push_back({subset.name(), f});
  }
  return evaluate(images, &params, protocol, configs);
}

Table delta_table(const EvalReport& report) {
  ACAE_REQUIRE(report.rows.size() >= 2, ErrorCode::kInvalidArgument,
          "delta table needs a baseline row and a comparison row");
  const ConfigMetrics& b = report.rows[0];
  Table t({"metric", b.name, report.rows[1].name, "delta"});
  const ConfigMetrics& a = report.rows[1];
  auto add = [&](const char* name, double x, double y) {
    t.add_row({name, fmt_real(100 * x, 2), fmt_real(100 * y, 2),
               (y >= x ? "+" : "") + fmt_real(100 * (y - x), 2)});
  };
  add("mAP", b.map, a.map);
  add("top1", b.top1, a.top1);
  add("top5", b.top5, a.top5);
  add("top10", b.top10, a.top10);
  return t;
}

Matrix k_reciprocal_rerank(const Matrix& query, const Matrix& gallery, std::size_t k1,
                           std::size_t k2, Real lambda_r,
                           std::vector<std::string>* warnings) {
  ACAE_REQUIRE(k2 >= 1 && k1 > k2, ErrorCode::kInvalidArgument,
          "k-reciprocal needs k1 > k2 >= 1");
  ACAE_REQUIRE(lambda_r >= 0 && lambda_r <= 1, ErrorCode::kInvalidArgument,
          "k-reciprocal lambda must lie in [0, 1]");
  const std::size_t nq = query.rows();
  const std::size_t n = nq + gallery.rows();
  if (gallery.rows() == 0) return Matrix(nq, 0);
  const Matrix all = l2_normalize_rows(vstack(query, gallery));
  Matrix dist = matmul_transposed(all, all);
  for (auto& v : dist.values()) v = Real(2) - Real(2) * v;

  if (k1 + 1 > n) {
    if (warnings) warnings->push_back("k1 clamped from " + std::to_string(k1) + " to " +
                                      std::to_string(n - 1));
    k1 = n - 1;
  }
  if (k2 > n) {
    if (warnings) warnings->push_back("k2 clamped from " + std::to_string(k2) + " to " +
                                      std::to_string(n));
    k2 = n;
  }

  std::vector<std::vector<std::size_t>> rank(n, std::vector<std::size_t>(n));
  for (std::size_t i = 0; i < n; ++i) {
    std::iota(rank[i].begin(), rank[i].end(), 0);
    std::stable_sort(rank[i].begin(), rank[i].end(), [&](std::size_t a, std::size_t b) {
      return dist(i, a) < dist(i, b);
    });
  }
  auto in_top = [&](std::size_t of, std::size_t who, std::size_t k) {
    const auto end = rank[of].begin() + static_cast<std::ptrdiff_t>(std::min(k + 1, n));
    return std::find(rank[of].begin(), end, who) != end;
  };
  auto reciprocal = [&](std::size_t i, std::size_t k) {
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t <= std::min(k, n - 1); ++t)
      if (in_top(rank[i][t], i, k)) out.push_back(rank[i][t]);
    return out;
  };

  const auto half = static_cast<std::size_t>(std::nearbyint(static_cast<double>(k1) / 2.0));
  Matrix v(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::vector<std::size_t> r = reciprocal(i, k1);
    std::vector<char> member(n, 0);
    for (std::size_t c : r) member[c] = 1;
    std::vector<char> expanded = member;
    for (std::size_t c : r) {
      const std::vector<std::size_t> rc = reciprocal(c, half);
      std::size_t common = 0;
      for (std::size_t x : rc) common += member[x];
      if (3 * common > 2 * rc.size())
        for (std::size_t x : rc) expanded[x] = 1;
    }
    Real total = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (expanded[j]) total += (v(i, j) = std::exp(-dist(i, j)));
    for (std::size_t j = 0; j < n; ++j) v(i, j) /= total;
  }
  if (k2 != 1) {
    Matrix qe(n, n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < k2; ++t) {
        auto src = v.row(rank[i][t]);
        auto dst = qe.row(i);
        for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
      }
      for (auto& x : qe.row(i)) x /= static_cast<Real>(k2);
    }
    v = std::move(qe);
  }

  Matrix out(nq, gallery.rows());
  for (std::size_t i = 0; i < nq; ++i) {
    for (std::size_t g = 0; g < gallery.rows(); ++g) {
      const std::size_t j = nq + g;
      Real shared = 0;
      for (std::size_t k = 0; k < n; ++k) shared += std::min(v(i, k), v(j, k));
      const Real jaccard = Real(1) - shared / (Real(2) - shared);
      out(i, g) = (Real(1) - lambda_r) * jaccard + lambda_r * dist(i, j);
    }
  }
  return out;
}

std::string RerankParams::name() const {
  return "k1=" + std::to_string(k1) + ",k2=" + std::to_string(k2) +
         ",lambda=" + fmt_real(lambda, 2);
}

std::vector<RerankParams> default_rerank_grid() {
  std::vector<RerankParams> grid;
  for (std::size_t k1 : {10, 20, 30})
    for (std::size_t k2 : {3, 6})
      for (Real l : {Real(0.3), Real(0.5), Real(0.7)}) grid.push_back({k1, k2, l});
  return grid;
}

ConfigMetrics evaluate_rerank(std::span<const FeatureSet> images,
                              const EvalProtocol& protocol, const RerankParams& rerank) {
  std::vector<Query> queries = build_queries(images, protocol);
  ACAE_REQUIRE(!queries.empty(), ErrorCode::kInvalidArgument,
          "dataset has no valid queries in the evaluation split");
  std::vector<QueryOutcome> outcomes(queries.size());
  parallel_for(queries.size(), [&](std::size_t q) {
    const Query& query = queries[q];
    Matrix probe(1, images[query.image].dim());
    std::copy(images[query.image].features.row(query.row).begin(),
              images[query.image].features.row(query.row).end(), probe.row(0).begin());
    Matrix candidates(0, probe.cols());
    std::vector<char> rel;
    for (std::size_t g : query.gallery) {
      candidates = vstack(candidates, images[g].features);
      for (IdentityId id : images[g].labels) rel.push_back(id == query.identity);
    }
    const Matrix d =
        k_reciprocal_rerank(probe, candidates, rerank.k1, rerank.k2, rerank.lambda);
    Vector scores(d.cols());
    for (std::size_t j = 0; j < d.cols(); ++j) scores[j] = -d(0, j);
    outcomes[q] = outcome(rank_relevance(
        scores, std::span<const bool>(reinterpret_cast<const bool*>(rel.data()), rel.size())));
  });
  FusionConfig f = FusionConfig::baseline();
  return aggregate("k-reciprocal(" + rerank.name() + ")", f, outcomes);
}

RerankComparison compare_rerank(std::span<const FeatureSet> images,
                                const AcaeParams& params, const EvalProtocol& protocol,
                                std::span<const RerankParams> grid) {
  ACAE_REQUIRE(!grid.empty(), ErrorCode::kInvalidArgument, "empty k-reciprocal grid");
  RerankComparison out;
  EvalReport side = evaluate(images, params, protocol);
  double best_score = -1;
  for (const auto& p : grid) {
    ConfigMetrics m = evaluate_rerank(images, protocol, p);
    const double score = 0.5 * (m.map + m.top1);
    if (score > best_score) {
      best_score = score;
      out.best = p;
    }
    out.grid.push_back(std::move(m));
  }
  out.report = side;
  out.report.rows = {side.rows[0]};
  for (const auto& m : out.grid)
    if (m.name == "k-reciprocal(" + out.best.name() + ")") out.report.rows.push_back(m);
  out.report.rows.push_back(side.rows[1]);
  return out;
}

Table BenchReport::table() const {
  Table t({"path", "mean_ms_per_pair", "std_ms", "repeats", "pairs"});
  if (repeats == 0) return t;
  t.add_row({"appearance", fmt_real(appearance_mean_ms, 6), fmt_real(appearance_std_ms, 6),
             std::to_string(repeats), std::to_string(pairs)});
  t.add_row({"appearance+acae", fmt_real(acae_mean_ms, 6), fmt_real(acae_std_ms, 6),
             std::to_string(repeats), std::to_string(pairs)});
  t.add_row({"delta", fmt_real(delta_ms(), 6), "", std::to_string(repeats),
             std::to_string(pairs)});
  return t;
}

BenchReport bench_overhead(std::span<const FeatureSet> images, const AcaeParams& params,
                           const FusionConfig& fusion, std::size_t repeats,
                           std::size_t max_pairs) {
  BenchReport report;
  report.repeats = repeats;
  if (repeats == 0 || images.size() < 2) {
    report.repeats = 0;
    return report;
  }
  report.pairs = std::min(max_pairs, images.size() - 1);
  FusionConfig ctx = fusion;
  if (ctx.lambda == 0) ctx.lambda = Real(0.4);

  volatile double sink = 0;
  auto appearance_pass = [&] {
    for (std::size_t p = 0; p < report.pairs; ++p) {
      const Matrix s = appearance_similarity(images[p].features, images[p + 1].features,
                                             fusion.normalize);
      if (s.size() > 0) sink = sink + s.values()[0];
    }
  };
  auto acae_pass = [&] {
    for (std::size_t p = 0; p < report.pairs; ++p) {
      const Matrix s_a = appearance_similarity(images[p].features, images[p + 1].features,
                                               fusion.normalize);
      const PairForward f = acae_forward(images[p].features, images[p + 1].features, params);
      const Matrix s_c = contextual_similarity(f.a.out, f.b.out, ctx);
      const Matrix s = fuse(s_c, s_a, ctx.lambda);
      for (std::size_t i = 0; i < s.rows(); ++i) {
        std::vector<ImageId> groups(s.cols(), images[p + 1].image_id);
        const Vector r = rescale_gallery(s.row(i), groups);
        if (!r.empty()) sink = sink + r[0];
      }
    }
  };
  appearance_pass();
  acae_pass();

  std::vector<double> app, head;
  for (std::size_t r = 0; r < repeats; ++r) {
    auto t0 = std::chrono::steady_clock::now();
    appearance_pass();
    app.push_back(1e3 * seconds_since(t0) / double(report.pairs));
    t0 = std::chrono::steady_clock::now();
    acae_pass();
    head.push_back(1e3 * seconds_since(t0) / double(report.pairs));
  }
  auto stats = [](const std::vector<double>& xs, double& mean, double& sd) {
    mean = std::accumulate(xs.begin(), xs.end(), 0.0) / double(xs.size());
    double ss = 0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    sd = xs.size() > 1 ? std::sqrt(ss / double(xs.size() - 1)) : 0.0;
  };
  stats(app, report.appearance_mean_ms, report.appearance_std_ms);
  stats(head, report.acae_mean_ms, report.acae_std_ms);
  return report;
}

}  // namespace acae
