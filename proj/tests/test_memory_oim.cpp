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

#include <cmath>
#include <deque>
#include <numeric>

#include "acae/error.hpp"
#include "acae/memory_bank.hpp"
#include "acae/oim.hpp"
#include "doctest.h"
#include "test_util.hpp"

using acae::IdentityId;
using acae::ImageMemoryBank;
using acae::kUnlabeled;
using acae::Matrix;
using acae::OimConfig;
using acae::OimState;
using acae::Real;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<Real>> r) {
  Matrix m(r.size(), r.begin()->size());
  std::size_t i = 0;
  for (const auto& row : r) {
    std::size_t j = 0;
    for (Real v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

acae::FeatureSet image(acae::ImageId id, std::vector<IdentityId> labels, std::uint64_t seed = 1) {
  return testutil::feature_set(id, testutil::random_matrix(labels.size(), 4, seed), labels);
}

OimConfig unit_temperature() {
  OimConfig c;
  c.temperature = 1;
  return c;
}

}  // namespace

TEST_CASE("oim: single identity with an empty queue has zero loss") {
  const OimState s(rows({{0, 1}}), OimConfig{});
  const std::vector<IdentityId> labels = {0};
  const auto r = acae::oim_loss(rows({{0, 1}}), labels, s);
  CHECK(r.loss == 0.0);
}

TEST_CASE("oim: two orthonormal identities at unit temperature") {
  const OimState s(rows({{1, 0}, {0, 1}}), unit_temperature());
  const std::vector<IdentityId> labels = {0};
  const auto r = acae::oim_loss(rows({{1, 0}}), labels, s);
  CHECK(r.loss == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1))).epsilon(1e-14));
  CHECK(r.loss == doctest::Approx(0.31326).epsilon(1e-5));
  CHECK(r.labeled_rows == 1);
}

TEST_CASE("oim: lookup table update follows the normalized momentum rule") {
  OimConfig cfg;
  cfg.momentum = 0.5;
  OimState s(rows({{0, 1}}), cfg);
  const std::vector<Real> x = {1, 0};
  s.update_identity(0, x);
  CHECK(s.lut()(0, 0) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(s.lut()(0, 1) == doctest::Approx(1 / std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("oim: unlabeled rows add no loss and no gradient") {
  const OimState s = OimState::random(3, 4, OimConfig{}, 7);
  const Matrix x = acae::l2_normalize_rows(testutil::random_matrix(3, 4, 8));
  const std::vector<IdentityId> labels = {kUnlabeled, 1, kUnlabeled};
  const auto r = acae::oim_loss(x, labels, s);
  CHECK(r.labeled_rows == 1);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(r.grad(0, j) == 0.0);
    CHECK(r.grad(2, j) == 0.0);
  }
  const std::vector<IdentityId> none = {kUnlabeled, kUnlabeled, kUnlabeled};
  CHECK(acae::oim_loss(x, none, s).loss == 0.0);
}

TEST_CASE("oim: label outside the table is rejected") {
  const OimState s = OimState::random(3, 4, OimConfig{}, 7);
  const Matrix x = acae::l2_normalize_rows(testutil::random_matrix(1, 4, 8));
  const std::vector<IdentityId> labels = {3};
  CHECK_THROWS_AS(acae::oim_loss(x, labels, s), acae::Error);
}

TEST_CASE("oim: probabilities sum to one and the loss is nonnegative") {
  OimState s = OimState::random(6, 8, OimConfig{}, 9);
  for (int k = 0; k < 10; ++k) {
    const Matrix u = acae::l2_normalize_rows(testutil::random_matrix(1, 8, 100 + k));
    s.push_unlabeled(u.row(0));
  }
  for (int trial = 0; trial < 50; ++trial) {
    const Matrix x = acae::l2_normalize_rows(testutil::random_matrix(1, 8, 200 + trial));
    const auto p = acae::oim_probabilities(x.row(0), s);
    CHECK(p.size() == 16);
    CHECK(std::abs(std::accumulate(p.begin(), p.end(), 0.0) - 1) < 1e-9);
    const std::vector<IdentityId> labels = {IdentityId(trial % 6)};
    CHECK(acae::oim_loss(x, labels, s).loss >= 0);
  }
}

TEST_CASE("oim: feature gradient agrees with central differences") {
  OimState s = OimState::random(4, 5, OimConfig{}, 11);
  for (int k = 0; k < 3; ++k)
    s.push_unlabeled(acae::l2_normalize_rows(testutil::random_matrix(1, 5, 300 + k)).row(0));
  const Matrix x = testutil::random_matrix(3, 5, 12, 0.3);
  const std::vector<IdentityId> labels = {2, kUnlabeled, 0};
  const auto r = acae::oim_loss(x, labels, s);
  const double h = 1e-6;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j) {
      Matrix plus = x, minus = x;
      plus(i, j) += h;
      minus(i, j) -= h;
      const double num =
          (acae::oim_loss(plus, labels, s).loss - acae::oim_loss(minus, labels, s).loss) / (2 * h);
      CHECK(std::abs(num - r.grad(i, j)) < 1e-6);
    }
}

TEST_CASE("oim: the loss leaves the state untouched") {
  const OimState s = OimState::random(4, 5, OimConfig{}, 13);
  const Matrix before = s.lut();
  const Matrix x = acae::l2_normalize_rows(testutil::random_matrix(2, 5, 14));
  const std::vector<IdentityId> labels = {1, kUnlabeled};
  (void)acae::oim_loss(x, labels, s);
  CHECK(s.lut() == before);
  CHECK(s.queue_size() == 0);
}

TEST_CASE("oim: queue is FIFO and bounded") {
  OimConfig cfg;
  cfg.queue_capacity = 3;
  OimState s(rows({{1, 0}}), cfg);
  std::deque<Real> model;
  for (int k = 0; k < 10; ++k) {
    const std::vector<Real> x = {Real(k), 1};
    s.push_unlabeled(x);
    model.push_back(k);
    if (model.size() > 3) model.pop_front();
    CHECK(s.queue_size() == model.size());
    const Matrix q = s.queue();
    for (std::size_t i = 0; i < model.size(); ++i) CHECK(q(i, 0) == model[i]);
  }
}

TEST_CASE("oim: default queue holds five slots per identity") {
  const OimState s = OimState::random(7, 4, OimConfig{}, 1);
  CHECK(s.queue_capacity() == 35);
  CHECK(s.temperature() == doctest::Approx(1.0 / 30));
  CHECK(s.momentum() == 0.5);
}

TEST_CASE("oim: lookup rows stay unit norm over a thousand updates") {
  OimState s = OimState::random(5, 6, OimConfig{}, 21);
  acae::Rng rng(22);
  std::uniform_int_distribution<int> id(0, 4);
  for (int k = 0; k < 1000; ++k) {
    const Matrix x = testutil::random_matrix(1, 6, 1000 + k, 1 + (k % 7));
    s.update_identity(id(rng), x.row(0));
  }
  for (std::size_t i = 0; i < 5; ++i) {
    double n = 0;
    for (Real v : s.lut().row(i)) n += v * v;
    CHECK(std::abs(std::sqrt(n) - 1) < 1e-6);
  }
}

TEST_CASE("oim: step applies updates after the loss") {
  OimState s(rows({{1, 0}, {0, 1}}), unit_temperature());
  const Matrix x = rows({{0, 1}, {1, 0}});
  const std::vector<IdentityId> labels = {0, kUnlabeled};
  const auto r = acae::oim_step(x, labels, s);
  CHECK(r.loss == doctest::Approx(-std::log(1 / (1 + std::exp(1.0)))).epsilon(1e-14));
  CHECK(s.lut()(0, 0) == doctest::Approx(1 / std::sqrt(2.0)));
  CHECK(s.queue_size() == 1);
}

TEST_CASE("appoint_pairs: most shared identities wins") {
  const std::vector<acae::FeatureSet> images = {image(0, {1, 2}), image(1, {1, 2, 3}),
                                                image(2, {2, 5})};
  const auto pairs = acae::appoint_pairs(images, 1);
  CHECK(pairs.at(0) == 1);
  CHECK(pairs.at(1) == 0);
  CHECK(pairs.at(2) == 0);
}

TEST_CASE("appoint_pairs: ties go to the smallest image id") {
  const std::vector<acae::FeatureSet> images = {image(4, {9}), image(2, {1, 9}), image(3, {1, 9})};
  const auto pairs = acae::appoint_pairs(images, 1);
  CHECK(pairs.at(4) == 2);
  CHECK(pairs.at(2) == 3);
  CHECK(pairs.at(3) == 2);
}

TEST_CASE("appoint_pairs: no overlap gives a seeded, repeatable pick") {
  std::vector<acae::FeatureSet> images;
  for (int i = 0; i < 6; ++i) images.push_back(image(i, {IdentityId(i)}));
  const auto a = acae::appoint_pairs(images, 7);
  const auto b = acae::appoint_pairs(images, 7);
  CHECK(a == b);
  for (const auto& [img, partner] : a) CHECK(img != partner);
  bool differs = false;
  for (std::uint64_t seed = 8; seed < 20 && !differs; ++seed) differs = acae::appoint_pairs(images, seed) != a;
  CHECK(differs);
}

TEST_CASE("appoint_pairs: a single image is rejected") {
  const std::vector<acae::FeatureSet> images = {image(0, {1})};
  CHECK_THROWS_AS(acae::appoint_pairs(images, 1), acae::Error);
}

TEST_CASE("bank: update is a direct replacement and round-trips exactly") {
  const std::vector<acae::FeatureSet> images = {image(0, {1, 2, kUnlabeled}), image(1, {1})};
  ImageMemoryBank bank(images, acae::appoint_pairs(images, 1));
  CHECK_FALSE(bank.fetch_pair(1).has_value());

  const Matrix l1 = testutil::random_matrix(2, 4, 31);
  const Matrix u1 = testutil::random_matrix(1, 4, 32);
  bank.update(0, l1, u1);
  const auto fetched = bank.fetch_pair(1);
  REQUIRE(fetched.has_value());
  CHECK(fetched->features.rows() == 3);
  CHECK(fetched->labels == std::vector<IdentityId>{1, 2, kUnlabeled});
  CHECK(bank.entries().at(0).labeled == l1);
  CHECK(bank.entries().at(0).unlabeled == u1);

  const Matrix l2 = testutil::random_matrix(2, 4, 33);
  bank.update(0, l2, Matrix(0, 4));
  const auto again = bank.fetch(0);
  REQUIRE(again.has_value());
  CHECK(again->features == l2);
  CHECK(again->labels == std::vector<IdentityId>{1, 2});
}

TEST_CASE("bank: labeled row count must match the ground truth") {
  const std::vector<acae::FeatureSet> images = {image(0, {1, 2}), image(1, {1})};
  ImageMemoryBank bank(images, acae::appoint_pairs(images, 1));
  CHECK_THROWS_AS(bank.update(0, testutil::random_matrix(1, 4, 1), Matrix(0, 4)), acae::Error);
}

TEST_CASE("bank: momentum blends after the first visit") {
  const std::vector<acae::FeatureSet> images = {image(0, {1}), image(1, {1})};
  ImageMemoryBank bank(images, acae::appoint_pairs(images, 1));
  bank.set_momentum(0.25);
  bank.update(0, rows({{4, 0, 0, 0}}), Matrix(0, 4));
  CHECK(bank.entries().at(0).labeled(0, 0) == 4.0);
  bank.update(0, rows({{0, 0, 0, 0}}), Matrix(0, 4));
  CHECK(bank.entries().at(0).labeled(0, 0) == 1.0);
}

TEST_CASE("split_labeled keeps row order") {
  const auto img = image(0, {kUnlabeled, 3, kUnlabeled, 4}, 40);
  const auto [l, u] = acae::split_labeled(img);
  CHECK(l.rows() == 2);
  CHECK(u.rows() == 2);
  for (std::size_t j = 0; j < 4; ++j) {
    CHECK(l(0, j) == img.features(1, j));
    CHECK(l(1, j) == img.features(3, j));
    CHECK(u(0, j) == img.features(0, j));
    CHECK(u(1, j) == img.features(2, j));
  }
}
