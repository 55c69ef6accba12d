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
#include <map>
#include <string>
#include <vector>

#include "acae/eval.hpp"
#include "acae/head.hpp"
#include "acae/oim.hpp"
#include "acae/similarity.hpp"
#include "acae/synth.hpp"
#include "acae/training.hpp"

namespace acae {

struct GradCheckSettings {
  std::size_t instances = 20;
  Real tolerance = Real(1e-4);
  Real step = Real(1e-5);
  AcaeConfig head{8, 2, 16};
  std::size_t identities = 5;
};

struct BenchSettings {
  std::size_t repeats = 20;
  std::size_t max_pairs = 64;
};

/// Flat key=value settings with section prefixes ("acae.heads=4"). Every key
/// has a default; unknown keys are rejected with kConfig.
class RunConfig {
 public:
  RunConfig();

  /// Applies "key=value" lines; '#' starts a comment, blank lines are skipped.
  void merge_text(const std::string& text, const std::string& origin = "config");
  void merge_file(const std::string& path);
  /// Accepts "key=value".
  void set_assignment(const std::string& assignment);
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;

  static bool known(const std::string& key);
  static std::vector<std::string> keys();

  /// Sorted "key=value" lines of every setting, defaults included.
  std::string effective_text() const;

  std::uint64_t root_seed() const;
  ScenarioConfig scenario() const;
  AcaeConfig head() const;
  FusionConfig fusion() const;
  OimConfig oim() const;
  TrainOptions train() const;
  EvalProtocol protocol() const;
  std::vector<Real> lambdas() const;
  std::vector<RerankParams> rerank_grid() const;
  BenchSettings bench() const;
  GradCheckSettings gradcheck() const;

  /// Child seed for a named consumer of the root seed.
  std::uint64_t seed_for(const std::string& stream) const;

 private:
  std::uint64_t get_u64(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_real(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_reals(const std::string& key) const;
  std::vector<std::size_t> get_sizes(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

}  // namespace acae
