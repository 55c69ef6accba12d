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

#include "acae/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "acae/error.hpp"
#include "acae/rng.hpp"

namespace acae {
namespace {

std::string real_text(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string bool_text(bool b) { return b ? "true" : "false"; }

template <typename T>
std::string list_text(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ",";
    if constexpr (std::is_floating_point_v<T>) {
      out += real_text(static_cast<double>(xs[i]));
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table = [] {
    const ScenarioConfig sc;
    const AcaeConfig ac;
    const FusionConfig fc;
    const OimConfig oc;
    const TrainOptions to;
    const EvalProtocol ep;
    const GradCheckSettings gc;
    const BenchSettings bs;
    std::map<std::string, std::string> t = {
        {"seed", "1"},
        {"data.n_identities", std::to_string(sc.n_identities)},
        {"data.dim", std::to_string(sc.dim)},
        {"data.n_images", std::to_string(sc.n_images)},
        {"data.persons_min", std::to_string(sc.persons_min)},
        {"data.persons_max", std::to_string(sc.persons_max)},
        {"data.group_min", std::to_string(sc.group_min)},
        {"data.group_max", std::to_string(sc.group_max)},
        {"data.co_travel_prob", real_text(sc.co_travel_prob)},
        {"data.noise_sigma", real_text(sc.noise_sigma)},
        {"data.ambiguity_delta", real_text(sc.ambiguity_delta)},
        {"data.confusable_fraction", real_text(sc.confusable_fraction)},
        {"data.unlabeled_rate", real_text(sc.unlabeled_rate)},
        {"acae.dim", std::to_string(ac.dim)},
        {"acae.heads", std::to_string(ac.heads)},
        {"acae.ff_dim", std::to_string(ac.ff_dim)},
        {"acae.scaled_logits", bool_text(ac.scaled_logits)},
        {"acae.share_qkv", bool_text(ac.share_qkv)},
        {"acae.ln_epsilon", real_text(ac.ln_epsilon)},
        {"fusion.lambda", real_text(fc.lambda)},
        {"fusion.use_intra", bool_text(fc.subset.intra)},
        {"fusion.use_inter", bool_text(fc.subset.inter)},
        {"fusion.use_final", bool_text(fc.subset.final)},
        {"fusion.rescale", bool_text(fc.rescale)},
        {"fusion.normalize", bool_text(fc.normalize)},
        {"oim.temperature", real_text(oc.temperature)},
        {"oim.momentum", real_text(oc.momentum)},
        {"oim.queue_capacity", std::to_string(oc.queue_capacity)},
        {"train.epochs", std::to_string(to.schedule.epochs)},
        {"train.lr", real_text(to.schedule.learning_rate)},
        {"train.loss_weight", real_text(to.schedule.loss_weight)},
        {"train.freeze_first_epoch", bool_text(to.schedule.freeze_first_epoch)},
        {"train.lr_steps", list_text(to.schedule.lr_steps)},
        {"train.lr_decay", real_text(to.schedule.lr_decay)},
        {"train.batch_size", std::to_string(to.schedule.batch_size)},
        {"train.clip_norm", real_text(to.schedule.clip_norm)},
        {"train.supervise_intra", bool_text(to.supervision.intra)},
        {"train.supervise_inter", bool_text(to.supervision.inter)},
        {"train.supervise_final", bool_text(to.supervision.final)},
        {"train.include_unlabeled_pair", bool_text(to.include_unlabeled_pair)},
        {"train.imb_momentum", real_text(to.imb_momentum)},
        {"eval.gallery_size", std::to_string(ep.gallery_size)},
        {"eval.test_fraction", real_text(ep.test_fraction)},
        {"sweep.lambdas", "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"},
        {"rerank.k1", "10,20,30"},
        {"rerank.k2", "3,6"},
        {"rerank.lambda", "0.3,0.5,0.7"},
        {"bench.repeats", std::to_string(bs.repeats)},
        {"bench.max_pairs", std::to_string(bs.max_pairs)},
        {"gradcheck.instances", std::to_string(gc.instances)},
        {"gradcheck.tolerance", real_text(gc.tolerance)},
        {"gradcheck.step", real_text(gc.step)},
        {"gradcheck.dim", std::to_string(gc.head.dim)},
        {"gradcheck.heads", std::to_string(gc.head.heads)},
        {"gradcheck.ff_dim", std::to_string(gc.head.ff_dim)},
        {"gradcheck.identities", std::to_string(gc.identities)},
    };
    return t;
  }();
  return table;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value,
                            const char* expected) {
  fail(ErrorCode::kConfig,
       "config key " + key + ": expected " + expected + ", got '" + value + "'");
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size())
    bad_value(key, s, "a non-negative integer");
  return v;
}

double parse_real(const std::string& key, const std::string& s) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    bad_value(key, s, "a finite number");
  return v;
}

bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  bad_value(key, s, "true or false");
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

bool RunConfig::known(const std::string& key) { return defaults().count(key) > 0; }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const auto& [k, _] : defaults()) out.push_back(k);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  ACAE_REQUIRE(known(key), ErrorCode::kConfig, "unknown config key " + key);
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  ACAE_REQUIRE(it != values_.end(), ErrorCode::kConfig, "unknown config key " + key);
  return it->second;
}

void RunConfig::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  ACAE_REQUIRE(eq != std::string::npos, ErrorCode::kConfig,
               "expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const Error& e) {
      fail(ErrorCode::kConfig, origin + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

void RunConfig::merge_file(const std::string& path) {
  std::ifstream in(path);
  ACAE_REQUIRE(in.is_open(), ErrorCode::kIo, "cannot open config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  merge_text(ss.str(), path);
}

std::string RunConfig::effective_text() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  return parse_u64(key, get(key));
}

std::size_t RunConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

double RunConfig::get_real(const std::string& key) const { return parse_real(key, get(key)); }

bool RunConfig::get_bool(const std::string& key) const { return parse_bool(key, get(key)); }

std::vector<double> RunConfig::get_reals(const std::string& key) const {
  std::vector<double> out;
  const std::string& v = get(key);
  if (trim(v).empty()) return out;
  for (const auto& item : split_list(v)) out.push_back(parse_real(key, item));
  return out;
}

std::vector<std::size_t> RunConfig::get_sizes(const std::string& key) const {
  std::vector<std::size_t> out;
  const std::string& v = get(key);
  if (trim(v).empty()) return out;
  for (const auto& item : split_list(v))
    out.push_back(static_cast<std::size_t>(parse_u64(key, item)));
  return out;
}

std::uint64_t RunConfig::root_seed() const { return get_u64("seed"); }

std::uint64_t RunConfig::seed_for(const std::string& stream) const {
  return derive_seed(root_seed(), stream);
}

ScenarioConfig RunConfig::scenario() const {
  ScenarioConfig c;
  c.n_identities = get_size("data.n_identities");
  c.dim = get_size("data.dim");
  c.n_images = get_size("data.n_images");
  c.persons_min = get_size("data.persons_min");
  c.persons_max = get_size("data.persons_max");
  c.group_min = get_size("data.group_min");
  c.group_max = get_size("data.group_max");
  c.co_travel_prob = get_real("data.co_travel_prob");
  c.noise_sigma = get_real("data.noise_sigma");
  c.ambiguity_delta = get_real("data.ambiguity_delta");
  c.confusable_fraction = get_real("data.confusable_fraction");
  c.unlabeled_rate = get_real("data.unlabeled_rate");
  c.seed = seed_for("data");
  c.validate();
  return c;
}

AcaeConfig RunConfig::head() const {
  AcaeConfig c;
  c.dim = get_size("acae.dim");
  c.heads = get_size("acae.heads");
  c.ff_dim = get_size("acae.ff_dim");
  c.scaled_logits = get_bool("acae.scaled_logits");
  c.share_qkv = get_bool("acae.share_qkv");
  c.ln_epsilon = static_cast<Real>(get_real("acae.ln_epsilon"));
  try {
    c.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("acae.*: ") + e.what());
  }
  return c;
}

FusionConfig RunConfig::fusion() const {
  FusionConfig f;
  f.lambda = static_cast<Real>(get_real("fusion.lambda"));
  f.subset.intra = get_bool("fusion.use_intra");
  f.subset.inter = get_bool("fusion.use_inter");
  f.subset.final = get_bool("fusion.use_final");
  f.rescale = get_bool("fusion.rescale");
  f.normalize = get_bool("fusion.normalize");
  f.validate();
  return f;
}

OimConfig RunConfig::oim() const {
  OimConfig o;
  o.temperature = static_cast<Real>(get_real("oim.temperature"));
  o.momentum = static_cast<Real>(get_real("oim.momentum"));
  o.queue_capacity = get_size("oim.queue_capacity");
  ACAE_REQUIRE(o.temperature > 0, ErrorCode::kConfig, "oim.temperature must be positive");
  ACAE_REQUIRE(o.momentum >= 0 && o.momentum <= 1, ErrorCode::kConfig,
               "oim.momentum must lie in [0, 1]");
  return o;
}

TrainOptions RunConfig::train() const {
  TrainOptions t;
  t.schedule.epochs = get_size("train.epochs");
  t.schedule.learning_rate = static_cast<Real>(get_real("train.lr"));
  t.schedule.loss_weight = static_cast<Real>(get_real("train.loss_weight"));
  t.schedule.freeze_first_epoch = get_bool("train.freeze_first_epoch");
  t.schedule.lr_steps = get_sizes("train.lr_steps");
  t.schedule.lr_decay = static_cast<Real>(get_real("train.lr_decay"));
  t.schedule.batch_size = get_size("train.batch_size");
  t.schedule.clip_norm = static_cast<Real>(get_real("train.clip_norm"));
  t.supervision.intra = get_bool("train.supervise_intra");
  t.supervision.inter = get_bool("train.supervise_inter");
  t.supervision.final = get_bool("train.supervise_final");
  ACAE_REQUIRE(t.supervision.intra || t.supervision.inter || t.supervision.final,
               ErrorCode::kConfig, "train.supervise_*: at least one embedding must be supervised");
  t.include_unlabeled_pair = get_bool("train.include_unlabeled_pair");
  t.imb_momentum = static_cast<Real>(get_real("train.imb_momentum"));
  ACAE_REQUIRE(t.imb_momentum >= 0 && t.imb_momentum < 1, ErrorCode::kConfig,
               "train.imb_momentum must lie in [0, 1)");
  t.oim = oim();
  t.seed = seed_for("train");
  t.schedule.validate();
  return t;
}

EvalProtocol RunConfig::protocol() const {
  EvalProtocol p;
  p.gallery_size = get_size("eval.gallery_size");
  p.test_fraction = get_real("eval.test_fraction");
  p.seed = seed_for("eval");
  p.fusion = fusion();
  p.validate();
  return p;
}

std::vector<Real> RunConfig::lambdas() const {
  std::vector<Real> out;
  for (double l : get_reals("sweep.lambdas")) {
    ACAE_REQUIRE(l >= 0 && l <= 1, ErrorCode::kConfig,
                 "sweep.lambdas: every value must lie in [0, 1]");
    out.push_back(static_cast<Real>(l));
  }
  ACAE_REQUIRE(!out.empty(), ErrorCode::kConfig, "sweep.lambdas must not be empty");
  return out;
}

std::vector<RerankParams> RunConfig::rerank_grid() const {
  std::vector<RerankParams> grid;
  const auto k1s = get_sizes("rerank.k1");
  const auto k2s = get_sizes("rerank.k2");
  const auto ls = get_reals("rerank.lambda");
  for (std::size_t k1 : k1s)
    for (std::size_t k2 : k2s)
      for (double l : ls) {
        ACAE_REQUIRE(k2 >= 1 && k1 > k2, ErrorCode::kConfig,
                     "rerank.k1/rerank.k2: need k1 > k2 >= 1");
        ACAE_REQUIRE(l >= 0 && l <= 1, ErrorCode::kConfig,
                     "rerank.lambda: values must lie in [0, 1]");
        grid.push_back({k1, k2, static_cast<Real>(l)});
      }
  ACAE_REQUIRE(!grid.empty(), ErrorCode::kConfig, "rerank grid is empty");
  return grid;
}

BenchSettings RunConfig::bench() const {
  BenchSettings b;
  b.repeats = get_size("bench.repeats");
  b.max_pairs = get_size("bench.max_pairs");
  ACAE_REQUIRE(b.max_pairs >= 1, ErrorCode::kConfig, "bench.max_pairs must be >= 1");
  return b;
}

GradCheckSettings RunConfig::gradcheck() const {
  GradCheckSettings g;
  g.instances = get_size("gradcheck.instances");
  g.tolerance = static_cast<Real>(get_real("gradcheck.tolerance"));
  g.step = static_cast<Real>(get_real("gradcheck.step"));
  g.head.dim = get_size("gradcheck.dim");
  g.head.heads = get_size("gradcheck.heads");
  g.head.ff_dim = get_size("gradcheck.ff_dim");
  g.head.scaled_logits = get_bool("acae.scaled_logits");
  g.head.share_qkv = get_bool("acae.share_qkv");
  g.head.ln_epsilon = static_cast<Real>(get_real("acae.ln_epsilon"));
  g.identities = get_size("gradcheck.identities");
  ACAE_REQUIRE(g.tolerance > 0 && g.step > 0, ErrorCode::kConfig,
               "gradcheck.tolerance and gradcheck.step must be positive");
  ACAE_REQUIRE(g.identities >= 1, ErrorCode::kConfig, "gradcheck.identities must be >= 1");
  try {
    g.head.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfig, std::string("gradcheck.*: ") + e.what());
  }
  return g;
}

}  // namespace acae
