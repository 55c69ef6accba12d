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

// End-to-end acceptance checks. Prints one line per criterion and exits
// nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "acae/autodiff.hpp"
#include "acae/config.hpp"
#include "acae/eval.hpp"
#include "acae/head.hpp"
#include "acae/oim.hpp"
#include "acae/similarity.hpp"
#include "acae/synth.hpp"
#include "acae/training.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using acae::AcaeConfig;
using acae::AcaeParams;
using acae::Matrix;
using acae::Real;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int n, const Outcome& o) {
  std::printf("criterion %d: %s %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

template <typename F>
void run(int n, F&& f) {
  Outcome o;
  try {
    o = f();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  report(n, o);
}

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

AcaeConfig head_config(std::size_t d, std::size_t h) {
  AcaeConfig c;
  c.dim = d;
  c.heads = h;
  c.ff_dim = 2 * d;
  return c;
}

bool same_params(const AcaeParams& a, const AcaeParams& b) {
  const auto ba = acae::param_blocks(a);
  const auto bb = acae::param_blocks(b);
  if (ba.size() != bb.size()) return false;
  for (std::size_t k = 0; k < ba.size(); ++k)
    if (!std::equal(ba[k].values.begin(), ba[k].values.end(), bb[k].values.begin()))
      return false;
  return true;
}

const acae::SyntheticDataset& small_scenario() {
  static const acae::SyntheticDataset ds = [] {
    acae::ScenarioConfig c;
    c.n_identities = 16;
    c.dim = 16;
    c.n_images = 60;
    c.seed = 21;
    return acae::generate(c);
  }();
  return ds;
}

AcaeParams small_head() { return AcaeParams::initialize(head_config(16, 2), 3); }

// Forward pass against the loop oracle.
Outcome criterion1() {
  const std::size_t sizes[] = {1, 2, 5};
  const auto t0 = Clock::now();
  double worst = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const std::size_t n = sizes[i % 3], m = sizes[(i / 3) % 3];
    const std::size_t d = (i / 9) % 2 ? 8 : 4, h = (i / 18) % 2 ? 2 : 1;
    AcaeConfig c = head_config(d, h);
    c.scaled_logits = (i / 36) % 2;
    c.share_qkv = (i / 72) % 2;
    const AcaeParams p = testutil::random_params(c, 500 + i);
    const Matrix a = testutil::random_matrix(n, d, 2 * i + 1);
    const Matrix b = testutil::random_matrix(m, d, 2 * i + 2);
    const auto got = acae::acae_forward(a, b, p);
    const auto [ea, eb] = oracle::forward(a, b, p);
    for (const auto& [g, e] : {std::pair{&got.a.out, &ea}, std::pair{&got.b.out, &eb}}) {
      worst = std::max(worst, testutil::max_abs_diff(g->intra, e->intra));
      worst = std::max(worst, testutil::max_abs_diff(g->inter, e->inter));
      worst = std::max(worst, testutil::max_abs_diff(g->final, e->final));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 10,
          "100 instances, max abs diff " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

// Analytic gradients against central differences.
Outcome criterion2() {
  const std::size_t sizes[] = {1, 2, 5};
  const auto t0 = Clock::now();
  double worst = 0;
  std::size_t count = 0;
  std::uint64_t seed = 7000;
  for (std::size_t n : sizes)
    for (std::size_t m : sizes)
      for (std::size_t h : {1u, 2u})
        for (bool scaled : {false, true}) {
          AcaeConfig c = head_config(8, h);
          c.scaled_logits = scaled;
          const auto inst = acae::make_grad_check_instance(c, n, m, 5, ++seed);
          const auto r = acae::grad_check(inst.params, inst.pair, inst.oim);
          worst = std::max(worst, double(r.max_rel_error));
          ++count;
        }
  const double secs = seconds_since(t0);
  return {count >= 20 && worst < 1e-4 && secs < 60,
          std::to_string(count) + " instances, max rel error " + fmt("%.3g", worst) + ", " +
              fmt("%.2f", secs) + " s"};
}

// Fusion endpoints and rescaling invariants.
Outcome criterion3() {
  const auto& ds = small_scenario();
  const AcaeParams p = small_head();
  const std::vector<acae::FeatureSet> gallery(ds.images.begin() + 1, ds.images.begin() + 9);
  std::size_t checked = 0;
  for (std::size_t row = 0; row < ds.images[0].features.rows(); ++row) {
    acae::FusionConfig f;
    f.rescale = false;
    f.lambda = 0;
    for (const auto& img : acae::score_query(ds.images[0], row, gallery, p, f).images)
      if (img.fused != img.appearance) return {false, "lambda 0 differs from appearance"};
    f.lambda = 1;
    for (const auto& img : acae::score_query(ds.images[0], row, gallery, p, f).images)
      if (img.fused != img.contextual) return {false, "lambda 1 differs from contextual"};
    ++checked;
  }
  acae::Rng rng(77);
  std::normal_distribution<double> normal(0, 1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + trial % 9;
    std::vector<Real> s(len);
    for (auto& v : s) v = normal(rng);
    std::vector<acae::ImageId> groups(len);
    for (std::size_t k = 0; k < len; ++k) groups[k] = acae::ImageId(k % 3);
    const auto r = acae::rescale_gallery(s, groups);
    for (acae::ImageId g = 0; g < 3; ++g) {
      std::size_t best = len, members = 0;
      for (std::size_t k = 0; k < len; ++k)
        if (groups[k] == g) {
          ++members;
          if (best == len || s[k] > s[best]) best = k;
        }
      if (members == 0) continue;
      if (r[best] != s[best]) return {false, "group maximum changed"};
      if (members == 1 && r[best] != s[best]) return {false, "singleton changed"};
    }
    const std::vector<Real> tied(len, s[0]);
    const auto rt = acae::rescale_gallery(tied, groups);
    if (std::vector<Real>(rt.begin(), rt.end()) != tied) return {false, "tied group changed"};
  }
  return {true, std::to_string(checked) + " query rows at both endpoints, 200 rescale trials"};
}

struct Pipeline {
  acae::EvalReport lambdas;
  acae::EvalReport subsets;
  double seconds = 0;
};

const Pipeline& default_pipeline() {
  static const Pipeline result = [] {
    const auto t0 = Clock::now();
    const acae::RunConfig cfg;
    const auto ds = acae::generate(cfg.scenario());
    const auto protocol = cfg.protocol();
    std::vector<acae::FeatureSet> train;
    for (std::size_t i : acae::train_indices(ds.images.size(), protocol.test_fraction))
      train.push_back(ds.images[i]);
    acae::Trainer trainer(AcaeParams::initialize(cfg.head(), cfg.seed_for("acae.init")),
                          std::move(train), cfg.train(), ds.identity_count());
    trainer.run();
    Pipeline p;
    const std::vector<Real> lambdas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6};
    p.lambdas = acae::sweep_lambda(ds.images, trainer.params(), protocol, lambdas);
    p.subsets = acae::sweep_subsets(ds.images, trainer.params(), protocol);
    p.seconds = seconds_since(t0);
    return p;
  }();
  return result;
}

// Default scenario: trained head beats appearance-only retrieval.
Outcome criterion4() {
  const auto& p = default_pipeline();
  const double base = 100 * p.lambdas.rows[0].map;
  const double at04 = 100 * p.lambdas.row("lambda=0.40").map;
  bool all_above = true;
  std::string sweep;
  for (std::size_t k = 1; k < p.lambdas.rows.size(); ++k) {
    const double v = 100 * p.lambdas.rows[k].map;
    all_above = all_above && v >= base;
    sweep += " " + fmt("%.2f", v);
  }
  return {at04 >= base + 2 && all_above,
          "baseline " + fmt("%.2f", base) + ", lambda 0.4 " + fmt("%.2f", at04) +
              ", sweep 0.1..0.6:" + sweep + " (" + fmt("%.1f", p.seconds) + " s)"};
}

// Feature subsets on the same trained head.
Outcome criterion5() {
  const auto& r = default_pipeline().subsets;
  const double base = 100 * r.rows[0].map;
  const double overall = 100 * r.row("overall").map;
  bool pass = true;
  std::string detail = "baseline " + fmt("%.2f", base) + ", overall " + fmt("%.2f", overall);
  for (std::size_t k = 1; k < r.rows.size(); ++k) {
    const double v = 100 * r.rows[k].map;
    pass = pass && v > base;
    if (r.rows[k].fusion.subset.count() == 1) {
      pass = pass && overall >= v - 0.5;
      detail += ", " + r.rows[k].name + " " + fmt("%.2f", v);
    }
  }
  return {pass, detail};
}

// Memory bank replacement and the frozen first epoch.
Outcome criterion6() {
  const auto& ds = small_scenario();
  acae::TrainOptions opt;
  opt.schedule.freeze_first_epoch = false;
  opt.schedule.learning_rate = 0;
  acae::Trainer t(small_head(), ds.images, opt, ds.identity_count());
  const AcaeParams before = t.params();
  t.run_epoch();
  if (!same_params(t.params(), before)) return {false, "lr 0 moved the parameters"};
  for (const auto& img : t.images()) {
    const auto& entry = t.bank().entries().at(img.image_id);
    const auto [labeled, unlabeled] = acae::split_labeled(img);
    if (!entry.visited || !(entry.labeled == labeled) || !(entry.unlabeled == unlabeled))
      return {false, "bank entry differs from the image features"};
  }
  acae::Trainer frozen(small_head(), ds.images, acae::TrainOptions{}, ds.identity_count());
  const auto stats = frozen.run_epoch();
  if (!stats.frozen || !same_params(frozen.params(), before))
    return {false, "frozen epoch moved the parameters"};
  return {true, "bank bit-equal after an lr 0 epoch over " + std::to_string(ds.images.size()) +
                    " images; frozen epoch left parameters unchanged"};
}

// OIM loss properties.
Outcome criterion7() {
  acae::OimState s = acae::OimState::random(6, 8, acae::OimConfig{}, 9);
  for (int k = 0; k < 10; ++k)
    s.push_unlabeled(acae::l2_normalize_rows(testutil::random_matrix(1, 8, 100 + k)).row(0));
  double worst_sum = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix x = acae::l2_normalize_rows(testutil::random_matrix(1, 8, 200 + trial));
    const auto probs = acae::oim_probabilities(x.row(0), s);
    worst_sum = std::max(worst_sum, std::abs(std::accumulate(probs.begin(), probs.end(), 0.0) - 1));
  }
  acae::OimConfig unit;
  unit.temperature = 1;
  const acae::OimState ortho(Matrix{{1, 0}, {0, 1}}, unit);
  const std::vector<acae::IdentityId> labels = {0};
  const double loss = acae::oim_loss(Matrix{{1, 0}}, labels, ortho).loss;
  const double expect = -std::log(std::exp(1.0) / (std::exp(1.0) + 1));
  acae::OimState lut = acae::OimState::random(5, 6, acae::OimConfig{}, 21);
  acae::Rng rng(22);
  std::uniform_int_distribution<int> id(0, 4);
  for (int k = 0; k < 1000; ++k)
    lut.update_identity(id(rng), testutil::random_matrix(1, 6, 1000 + k, 1 + k % 7).row(0));
  double worst_norm = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    double n = 0;
    for (Real v : lut.lut().row(i)) n += v * v;
    worst_norm = std::max(worst_norm, std::abs(std::sqrt(n) - 1));
  }
  return {worst_sum < 1e-9 && std::abs(loss - expect) < 1e-9 && worst_norm < 1e-6,
          "prob sum err " + fmt("%.2g", worst_sum) + ", fixture loss " + fmt("%.6f", loss) +
              ", lut norm err " + fmt("%.2g", worst_norm)};
}

// k-reciprocal re-ranking.
Outcome criterion8() {
  const Matrix q = testutil::random_matrix(2, 5, 10);
  const Matrix g = testutil::random_matrix(7, 5, 11);
  const Matrix d = acae::k_reciprocal_rerank(q, g, 4, 2, 1);
  const Matrix all = acae::l2_normalize_rows(acae::vstack(q, g));
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 7; ++j)
      if (d(i, j) != Real(2) - Real(2) * acae::dot(all.row(i), all.row(2 + j)))
        return {false, "lambda 1 is not the original distance"};
  double worst = 0;
  for (std::uint64_t seed = 20; seed < 26; ++seed) {
    const Matrix qq = testutil::random_matrix(1, 3, seed);
    const Matrix gg = testutil::random_matrix(5, 3, seed + 100);
    for (auto [k1, k2] : {std::pair<std::size_t, std::size_t>{3, 1}, {3, 2}, {4, 3}, {5, 2}})
      for (double lr : {0.0, 0.3, 0.7})
        worst = std::max(worst, testutil::max_abs_diff(acae::k_reciprocal_rerank(qq, gg, k1, k2, lr),
                                                       oracle::k_reciprocal(qq, gg, k1, k2, lr)));
  }
  return {worst < 1e-9, "lambda 1 exact, six-point oracle max diff " + fmt("%.3g", worst)};
}

// Retrieval metrics.
Outcome criterion9() {
  const bool f101[] = {true, false, true};
  const bool f01[] = {false, true};
  const bool f0[] = {false};
  const auto a = acae::average_precision(f101);
  const auto b = acae::average_precision(f01);
  if (!a || *a != 5.0 / 6.0 || !b || *b != 0.5 || acae::average_precision(f0))
    return {false, "AP fixtures"};
  const auto& ds = small_scenario();
  acae::EvalProtocol protocol;
  protocol.gallery_size = 20;
  protocol.seed = 5;
  const auto r = acae::evaluate(ds.images, small_head(), protocol);
  for (const auto& m : r.rows) {
    if (m.map != std::accumulate(m.ap.begin(), m.ap.end(), 0.0) / double(m.ap.size()))
      return {false, "mAP is not the mean AP for " + m.name};
    if (!(m.top1 <= m.top5 && m.top5 <= m.top10)) return {false, "top-k not monotone"};
  }
  return {true, "AP fixtures exact; mAP = mean AP and top-k monotone over " +
                    std::to_string(r.queries) + " queries"};
}

// Overhead benchmark.
Outcome criterion10() {
  const auto& ds = small_scenario();
  const auto r = acae::bench_overhead(ds.images, small_head(), acae::FusionConfig{}, 5, 16);
  const auto t = r.table();
  const bool well_formed = r.repeats == 5 && r.pairs == 16 && t.rows().size() == 3 &&
                           std::isfinite(r.appearance_mean_ms) && std::isfinite(r.acae_mean_ms);
  return {well_formed && r.delta_ms() > 0,
          "appearance " + fmt("%.3f", r.appearance_mean_ms) + " ms, acae " +
              fmt("%.3f", r.acae_mean_ms) + " ms, delta " + fmt("%.3f", r.delta_ms()) + " ms"};
}

}  // namespace

int main() {
  run(1, criterion1);
  run(2, criterion2);
  run(3, criterion3);
  run(4, criterion4);
  run(5, criterion5);
  run(6, criterion6);
  run(7, criterion7);
  run(8, criterion8);
  run(9, criterion9);
  run(10, criterion10);
  return failures == 0 ? 0 : 1;
}
