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
#include <iosfwd>
#include <string>
#include <vector>

#include "acae/head.hpp"
#include "acae/memory_bank.hpp"
#include "acae/oim.hpp"

namespace acae {

inline constexpr std::uint32_t kModelFormatVersion = 1;

/// One named row-major block as stored on disk (values are 32-bit floats).
struct StoredBlock {
  std::string name;
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::vector<float> values;
};

struct ModelFile {
  AcaeConfig config;
  std::vector<StoredBlock> blocks;

  const StoredBlock* find(const std::string& name) const;
};

/// Layout, all integers little-endian u32:
///   "ACAE" version d h d_ff flags   (flags bit 0: scaled logits, bit 1: shared QKV)
///   then until EOF: name_len name rows cols rows*cols f32
void write_model_file(std::ostream& out, const ModelFile& file);
ModelFile read_model_file(std::istream& in);

ModelFile to_model_file(const AcaeParams& params);
/// Builds parameters from the parameter blocks of \p file. Blocks under the
/// "bank.", "oim." and "train." prefixes are ignored; any other unexpected
/// or missing block is an error.
AcaeParams from_model_file(const ModelFile& file);

void save_model(const AcaeParams& params, const std::string& path);
AcaeParams load_model(const std::string& path);

struct Checkpoint {
  AcaeParams params;
  ImageMemoryBank bank;
  OimState oim;
  std::size_t epoch = 0;
};

void save_checkpoint(const Checkpoint& checkpoint, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace acae
