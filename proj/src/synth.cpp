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

#include "acae/synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "acae/error.hpp"
#include "acae/rng.hpp"
#include "json.hpp"

namespace acae {

void ScenarioConfig::validate() const {
  auto prob = [](double p, const char* key) {
    ACAE_REQUIRE(p >= 0 && p <= 1, ErrorCode::kConfig, std::string(key) + " must lie in [0, 1]");
  };
  ACAE_REQUIRE(dim >= 2, ErrorCode::kConfig, "data.dim must be at least 2");
  ACAE_REQUIRE(n_identities >= 2, ErrorCode::kConfig, "data.identities must be at least 2");
  ACAE_REQUIRE(n_images >= 2, ErrorCode::kConfig, "data.images must be at least 2");
  ACAE_REQUIRE(persons_min >= 1 && persons_min <= persons_max, ErrorCode::kConfig,
          "data.persons_min must lie in [1, data.persons_max]");
  ACAE_REQUIRE(group_min >= 1 && group_min <= group_max, ErrorCode::kConfig,
          "data.group_min must lie in [1, data.group_max]");
  ACAE_REQUIRE(group_max <= persons_max, ErrorCode::kConfig,
          "data.group_max exceeds data.persons_max: a group cannot fit in one image");
  ACAE_REQUIRE(group_min <= n_identities, ErrorCode::kConfig,
          "data.group_min exceeds data.identities");
  prob(co_travel_prob, "data.co_travel_prob");
  prob(confusable_fraction, "data.confusable_fraction");
  prob(unlabeled_rate, "data.unlabeled_rate");
  ACAE_REQUIRE(noise_sigma >= 0, ErrorCode::kConfig, "data.noise_sigma must be non-negative");
  ACAE_REQUIRE(ambiguity_delta >= 0, ErrorCode::kConfig,
          "data.ambiguity_delta must be non-negative");
}

std::size_t SyntheticDataset::identity_count() const {
  IdentityId top = -1;
  for (const auto& img : images)
    for (IdentityId id : img.labels) top = std::max(top, id);
  return static_cast<std::size_t>(top + 1);
}

namespace {

Vector gaussian_vector(Rng& rng, std::size_t d) {
  std::normal_distribution<double> normal;
  Vector v(d);
  for (auto& x : v) x = static_cast<Real>(normal(rng));
  return v;
}

void normalize(std::span<Real> v) {
  Real n = std::sqrt(dot(v, v));
  if (n > Real(0))
    for (auto& x : v) x /= n;
}

std::vector<std::vector<IdentityId>> partition_groups(const ScenarioConfig& cfg,
                                                      std::vector<IdentityId> order,
                                                      Rng& rng) {
  std::vector<std::vector<IdentityId>> groups;
  std::size_t pos = 0;
  while (order.size() - pos >= cfg.group_min) {
    const std::size_t span = cfg.group_max - cfg.group_min + 1;
    std::size_t size = cfg.group_min + uniform_index(rng, span);
    size = std::min(size, order.size() - pos);
    groups.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                        order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    pos += size;
  }
  // Leftovers join groups with spare room, else form their own group.
  for (; pos < order.size(); ++pos) {
    auto room = std::find_if(groups.begin(), groups.end(), [&](const auto& g) {
      return g.size() < cfg.group_max;
    });
    if (room != groups.end())
      room->push_back(order[pos]);
    else
      groups.push_back({order[pos]});
  }
  return groups;
}

bool twins_separated(const std::vector<std::vector<IdentityId>>& groups,
                     const std::vector<std::pair<IdentityId, IdentityId>>& twins) {
  std::map<IdentityId, std::size_t> group_of;
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (IdentityId id : groups[g]) group_of[id] = g;
  return std::none_of(twins.begin(), twins.end(), [&](const auto& t) {
    return group_of[t.first] == group_of[t.second];
  });
}

}  // namespace

SyntheticDataset generate(const ScenarioConfig& cfg) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "synth"));
  std::normal_distribution<double> normal;
  const std::size_t d = cfg.dim;
  SyntheticDataset ds;
  ds.dim = d;

  ds.identity_bases = Matrix(cfg.n_identities, d);
  for (std::size_t i = 0; i < cfg.n_identities; ++i) {
    Vector v = gaussian_vector(rng, d);
    normalize(v);
    std::copy(v.begin(), v.end(), ds.identity_bases.row(i).begin());
  }

  std::vector<IdentityId> order(cfg.n_identities);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_confusable =
      static_cast<std::size_t>(std::floor(cfg.confusable_fraction * double(cfg.n_identities)));
  for (std::size_t k = 0; k + 1 < n_confusable; k += 2) {
    const IdentityId a = order[k];
    const IdentityId b = order[k + 1];
    ds.confusable_pairs.emplace_back(std::min(a, b), std::max(a, b));
    // b = cos(delta) a + sin(delta) u with u a unit vector orthogonal to a.
    auto base = ds.identity_bases.row(static_cast<std::size_t>(a));
    Vector u = gaussian_vector(rng, d);
    const Real proj = dot(u, base);
    for (std::size_t j = 0; j < d; ++j) u[j] -= proj * base[j];
    normalize(u);
    auto twin = ds.identity_bases.row(static_cast<std::size_t>(b));
    const Real c = static_cast<Real>(std::cos(cfg.ambiguity_delta));
    const Real s = static_cast<Real>(std::sin(cfg.ambiguity_delta));
    for (std::size_t j = 0; j < d; ++j) twin[j] = c * base[j] + s * u[j];
  }

  for (int attempt = 0; attempt < 100; ++attempt) {
    std::vector<IdentityId> shuffled(cfg.n_identities);
    std::iota(shuffled.begin(), shuffled.end(), 0);
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    ds.groups = partition_groups(cfg, std::move(shuffled), rng);
    if (twins_separated(ds.groups, ds.confusable_pairs)) break;
  }

  std::vector<std::size_t> cycle(ds.groups.size());
  std::iota(cycle.begin(), cycle.end(), 0);

  auto observe = [&](std::span<const Real> base) {
    Vector v(base.begin(), base.end());
    for (auto& x : v) x += static_cast<Real>(cfg.noise_sigma * normal(rng));
    normalize(v);
    return v;
  };

  for (std::size_t i = 0; i < cfg.n_images; ++i) {
    if (i % cycle.size() == 0) std::shuffle(cycle.begin(), cycle.end(), rng);
    const std::size_t anchor = cycle[i % cycle.size()];
    const auto& group = ds.groups[anchor];
    std::vector<IdentityId> present;
    if (uniform01(rng) < cfg.co_travel_prob) {
      present = group;
    } else {
      present.push_back(group[uniform_index(rng, group.size())]);
    }
    const std::size_t target = std::max(
        present.size(),
        cfg.persons_min + uniform_index(rng, cfg.persons_max - cfg.persons_min + 1));

    // Remaining slots hold strangers or further groups. A further group
    // travels jointly with the same probability as the anchor, so every
    // appearance of a group follows co_travel_prob; only groups that fit the
    // remaining room are candidates.
    std::vector<char> placed(ds.groups.size(), 0);
    placed[anchor] = 1;
    std::size_t strangers = 0;
    while (present.size() + strangers < target) {
      const std::size_t room = target - present.size() - strangers;
      std::vector<std::size_t> fits;
      for (std::size_t g = 0; g < ds.groups.size(); ++g)
        if (!placed[g] && ds.groups[g].size() <= room) fits.push_back(g);
      if (fits.empty() || uniform01(rng) < cfg.unlabeled_rate) {
        ++strangers;
        continue;
      }
      const std::size_t g = fits[uniform_index(rng, fits.size())];
      placed[g] = 1;
      if (uniform01(rng) < cfg.co_travel_prob) {
        present.insert(present.end(), ds.groups[g].begin(), ds.groups[g].end());
      } else {
        present.push_back(ds.groups[g][uniform_index(rng, ds.groups[g].size())]);
      }
    }

    std::vector<std::pair<IdentityId, Vector>> persons;
    for (IdentityId id : present)
      persons.emplace_back(id, observe(ds.identity_bases.row(static_cast<std::size_t>(id))));
    for (std::size_t s = 0; s < strangers; ++s) {
      Vector base = gaussian_vector(rng, d);
      normalize(base);
      persons.emplace_back(kUnlabeled, observe(base));
    }
    std::shuffle(persons.begin(), persons.end(), rng);

    FeatureSet img;
    img.image_id = static_cast<ImageId>(i);
    img.features = Matrix(persons.size(), d);
    for (std::size_t r = 0; r < persons.size(); ++r) {
      img.labels.push_back(persons[r].first);
      std::copy(persons[r].second.begin(), persons[r].second.end(),
                img.features.row(r).begin());
    }
    ds.images.push_back(std::move(img));
    ds.anchor_group.push_back(static_cast<std::int64_t>(anchor));
  }

  // A labeled identity needs a second image to be searchable; otherwise the
  // observation is demoted to unlabeled.
  std::map<IdentityId, std::size_t> image_count;
  for (const auto& img : ds.images)
    for (IdentityId id : img.labels)
      if (id != kUnlabeled) ++image_count[id];
  for (auto& img : ds.images)
    for (auto& id : img.labels)
      if (id != kUnlabeled && image_count[id] < 2) id = kUnlabeled;
  return ds;
}

namespace {

using nlohmann::json;

json matrix_rows(const Matrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i)
    rows.push_back(std::vector<Real>(m.row(i).begin(), m.row(i).end()));
  return rows;
}

[[noreturn]] void parse_error(std::size_t line, const std::string& what) {
  fail(ErrorCode::kParse, "dataset line " + std::to_string(line) + ": " + what);
}

Vector read_vector(const json& j, std::size_t line) {
  if (!j.is_array()) parse_error(line, "expected a numeric array");
  Vector v;
  for (const auto& x : j) {
    if (!x.is_number()) parse_error(line, "non-numeric feature entry");
    v.push_back(x.get<Real>());
  }
  return v;
}

}  // namespace

void write_dataset(const SyntheticDataset& ds, std::ostream& out) {
  json header = {{"type", "scenario"}, {"dim", ds.dim}};
  header["identities"] = matrix_rows(ds.identity_bases);
  header["groups"] = ds.groups;
  header["confusable"] = json::array();
  for (const auto& [a, b] : ds.confusable_pairs) header["confusable"].push_back({a, b});
  out << header.dump() << '\n';
  for (std::size_t i = 0; i < ds.images.size(); ++i) {
    const FeatureSet& img = ds.images[i];
    json rec = {{"image_id", img.image_id}};
    if (i < ds.anchor_group.size() && ds.anchor_group[i] >= 0)
      rec["anchor_group"] = ds.anchor_group[i];
    json persons = json::array();
    for (std::size_t r = 0; r < img.size(); ++r) {
      json p;
      p["id"] = img.labels[r] == kUnlabeled ? json(nullptr) : json(img.labels[r]);
      p["feature"] = std::vector<Real>(img.features.row(r).begin(), img.features.row(r).end());
      persons.push_back(std::move(p));
    }
    rec["persons"] = std::move(persons);
    out << rec.dump() << '\n';
  }
}

SyntheticDataset read_dataset(std::istream& in) {
  SyntheticDataset ds;
  std::string text;
  std::size_t line = 0;
  bool any_anchor = false;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(text);
    } catch (const json::parse_error& e) {
      parse_error(line, e.what());
    }
    if (!rec.is_object()) parse_error(line, "expected a JSON object");
    try {
      if (rec.value("type", std::string()) == "scenario") {
        ds.dim = rec.at("dim").get<std::size_t>();
        const auto& ids = rec.at("identities");
        ds.identity_bases = Matrix(ids.size(), ds.dim);
        for (std::size_t i = 0; i < ids.size(); ++i) {
          Vector v = read_vector(ids[i], line);
          if (v.size() != ds.dim) parse_error(line, "identity vector width mismatch");
          std::copy(v.begin(), v.end(), ds.identity_bases.row(i).begin());
        }
        ds.groups = rec.at("groups").get<std::vector<std::vector<IdentityId>>>();
        for (const auto& p : rec.at("confusable"))
          ds.confusable_pairs.emplace_back(p.at(0).get<IdentityId>(),
                                           p.at(1).get<IdentityId>());
        continue;
      }
      FeatureSet img;
      img.image_id = rec.at("image_id").get<ImageId>();
      std::vector<Vector> rows;
      for (const auto& p : rec.at("persons")) {
        const auto& id = p.at("id");
        if (id.is_null())
          img.labels.push_back(kUnlabeled);
        else if (id.is_number_integer() && id.get<IdentityId>() >= 0)
          img.labels.push_back(id.get<IdentityId>());
        else
          parse_error(line, "identity must be a non-negative integer or null");
        rows.push_back(read_vector(p.at("feature"), line));
      }
      if (ds.dim == 0 && !rows.empty()) ds.dim = rows.front().size();
      img.features = Matrix(rows.size(), ds.dim);
      for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != ds.dim)
          parse_error(line, "feature width " + std::to_string(rows[r].size()) +
                                " differs from dataset width " + std::to_string(ds.dim));
        std::copy(rows[r].begin(), rows[r].end(), img.features.row(r).begin());
      }
      if (rec.contains("anchor_group")) any_anchor = true;
      ds.anchor_group.push_back(rec.value("anchor_group", std::int64_t{-1}));
      ds.images.push_back(std::move(img));
    } catch (const json::exception& e) {
      parse_error(line, e.what());
    }
  }
  if (!in.eof() && in.fail()) fail(ErrorCode::kIo, "failed reading dataset stream");
  if (!any_anchor) ds.anchor_group.clear();
  return ds;
}

void save_dataset(const SyntheticDataset& dataset, const std::string& path) {
  std::ofstream out(path);
  ACAE_REQUIRE(static_cast<bool>(out), ErrorCode::kIo, "cannot write " + path);
  out.precision(17);
  write_dataset(dataset, out);
  ACAE_REQUIRE(static_cast<bool>(out), ErrorCode::kIo, "failed writing " + path);
}

SyntheticDataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  ACAE_REQUIRE(static_cast<bool>(in), ErrorCode::kIo, "cannot open " + path);
  return read_dataset(in);
}

}  // namespace acae
