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

#include "acae/model_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <set>

#include "acae/error.hpp"

namespace acae {
namespace {

constexpr char kMagic[4] = {'A', 'C', 'A', 'E'};
constexpr std::uint32_t kFlagScaledLogits = 1u << 0;
constexpr std::uint32_t kFlagShareQkv = 1u << 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

/// Returns false on a clean EOF before the first byte.
bool get_u32(std::istream& in, std::uint32_t& v, const char* what, bool eof_ok = false) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (in.gcount() == 0 && eof_ok) return false;
  ACAE_REQUIRE(in.gcount() == 4, ErrorCode::kParse,
               std::string("model file truncated while reading ") + what);
  v = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
      std::uint32_t(b[3]) << 24;
  return true;
}

std::uint32_t narrow(std::size_t v, const char* what) {
  ACAE_REQUIRE(v <= 0xffffffffu, ErrorCode::kInvalidArgument,
               std::string(what) + " does not fit the file format");
  return static_cast<std::uint32_t>(v);
}

StoredBlock make_block(std::string name, std::size_t rows, std::size_t cols,
                       std::span<const Real> values) {
  StoredBlock b{std::move(name), narrow(rows, "row count"), narrow(cols, "column count"), {}};
  b.values.reserve(values.size());
  for (Real v : values) b.values.push_back(static_cast<float>(v));
  return b;
}

StoredBlock scalar_block(std::string name, double v) {
  const Real r = static_cast<Real>(v);
  return make_block(std::move(name), 1, 1, std::span<const Real>(&r, 1));
}

Matrix to_matrix(const StoredBlock& b) {
  Matrix m(b.rows, b.cols);
  for (std::size_t i = 0; i < b.values.size(); ++i) m.values()[i] = b.values[i];
  return m;
}

const StoredBlock& need(const ModelFile& file, const std::string& name) {
  const StoredBlock* b = file.find(name);
  ACAE_REQUIRE(b != nullptr, ErrorCode::kParse, "model file lacks block " + name);
  return *b;
}

double scalar(const ModelFile& file, const std::string& name) {
  const StoredBlock& b = need(file, name);
  ACAE_REQUIRE(b.values.size() == 1, ErrorCode::kParse, "block " + name + " is not a scalar");
  return b.values[0];
}

bool auxiliary(const std::string& name) {
  return name.starts_with("bank.") || name.starts_with("oim.") ||
         name.starts_with("train.") || name.starts_with("config.");
}

}  // namespace

const StoredBlock* ModelFile::find(const std::string& name) const {
  for (const auto& b : blocks)
    if (b.name == name) return &b;
  return nullptr;
}

void write_model_file(std::ostream& out, const ModelFile& file) {
  static_assert(sizeof(float) == 4 && std::numeric_limits<float>::is_iec559);
  out.write(kMagic, 4);
  put_u32(out, kModelFormatVersion);
  put_u32(out, narrow(file.config.dim, "dim"));
  put_u32(out, narrow(file.config.heads, "heads"));
  put_u32(out, narrow(file.config.ff_dim, "ff_dim"));
  put_u32(out, (file.config.scaled_logits ? kFlagScaledLogits : 0u) |
                   (file.config.share_qkv ? kFlagShareQkv : 0u));
  for (const auto& b : file.blocks) {
    ACAE_REQUIRE(b.values.size() == std::size_t(b.rows) * b.cols, ErrorCode::kInvalidArgument,
                 "block " + b.name + " has inconsistent size");
    put_u32(out, narrow(b.name.size(), "block name"));
    out.write(b.name.data(), static_cast<std::streamsize>(b.name.size()));
    put_u32(out, b.rows);
    put_u32(out, b.cols);
    for (float f : b.values) put_u32(out, std::bit_cast<std::uint32_t>(f));
  }
  ACAE_REQUIRE(out.good(), ErrorCode::kIo, "failed writing model file");
}

ModelFile read_model_file(std::istream& in) {
  char magic[4] = {};
  in.read(magic, 4);
  ACAE_REQUIRE(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0, ErrorCode::kParse,
               "not an ACAE model file (bad magic)");
  std::uint32_t version = 0, d = 0, h = 0, ff = 0, flags = 0;
  get_u32(in, version, "version");
  ACAE_REQUIRE(version == kModelFormatVersion, ErrorCode::kParse,
               "unsupported model format version " + std::to_string(version));
  get_u32(in, d, "dim");
  get_u32(in, h, "heads");
  get_u32(in, ff, "ff_dim");
  get_u32(in, flags, "flags");
  ACAE_REQUIRE((flags & ~(kFlagScaledLogits | kFlagShareQkv)) == 0, ErrorCode::kParse,
               "unknown model flags " + std::to_string(flags));
  ModelFile file;
  file.config.dim = d;
  file.config.heads = h;
  file.config.ff_dim = ff;
  file.config.scaled_logits = (flags & kFlagScaledLogits) != 0;
  file.config.share_qkv = (flags & kFlagShareQkv) != 0;
  try {
    file.config.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kParse, std::string("model header: ") + e.what());
  }

  std::set<std::string> seen;
  std::uint32_t name_len = 0;
  while (get_u32(in, name_len, "block name length", true)) {
    ACAE_REQUIRE(name_len > 0 && name_len <= 4096, ErrorCode::kParse,
                 "implausible block name length " + std::to_string(name_len));
    StoredBlock b;
    b.name.resize(name_len);
    in.read(b.name.data(), name_len);
    ACAE_REQUIRE(in.gcount() == std::streamsize(name_len), ErrorCode::kParse,
                 "model file truncated inside a block name");
    ACAE_REQUIRE(seen.insert(b.name).second, ErrorCode::kParse,
                 "duplicate block " + b.name);
    get_u32(in, b.rows, "block rows");
    get_u32(in, b.cols, "block cols");
    const std::uint64_t count = std::uint64_t(b.rows) * b.cols;
    ACAE_REQUIRE(count <= (std::uint64_t(1) << 28), ErrorCode::kParse,
                 "block " + b.name + " is implausibly large");
    b.values.resize(static_cast<std::size_t>(count));
    for (auto& f : b.values) {
      std::uint32_t bits = 0;
      get_u32(in, bits, "block values");
      f = std::bit_cast<float>(bits);
    }
    file.blocks.push_back(std::move(b));
  }
  return file;
}

ModelFile to_model_file(const AcaeParams& params) {
  ModelFile file;
  file.config = params.config;
  for (const auto& b : param_blocks(params))
    file.blocks.push_back(make_block(b.name, b.rows, b.cols, b.values));
  file.blocks.push_back(scalar_block("config.ln_epsilon", params.config.ln_epsilon));
  return file;
}

AcaeParams from_model_file(const ModelFile& file) {
  AcaeConfig cfg = file.config;
  if (const StoredBlock* eps = file.find("config.ln_epsilon")) {
    ACAE_REQUIRE(eps->values.size() == 1 && eps->values[0] > 0, ErrorCode::kParse,
                 "config.ln_epsilon must be a positive scalar");
    cfg.ln_epsilon = eps->values[0];
  }
  AcaeParams params = AcaeParams::zeros(cfg);
  std::set<std::string> expected;
  for (auto& b : param_blocks(params)) {
    expected.insert(b.name);
    const StoredBlock& s = need(file, b.name);
    ACAE_REQUIRE(s.rows == b.rows && s.cols == b.cols, ErrorCode::kParse,
                 "block " + b.name + " is " + std::to_string(s.rows) + "x" +
                     std::to_string(s.cols) + ", header implies " + std::to_string(b.rows) +
                     "x" + std::to_string(b.cols));
    for (std::size_t i = 0; i < b.values.size(); ++i) b.values[i] = s.values[i];
  }
  for (const auto& b : file.blocks)
    ACAE_REQUIRE(expected.count(b.name) > 0 || auxiliary(b.name), ErrorCode::kParse,
                 "unexpected block " + b.name);
  ACAE_REQUIRE(params.all_finite(), ErrorCode::kParse, "model file holds non-finite values");
  return params;
}

void save_model(const AcaeParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  ACAE_REQUIRE(out.is_open(), ErrorCode::kIo, "cannot open " + path + " for writing");
  write_model_file(out, to_model_file(params));
}

AcaeParams load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ACAE_REQUIRE(in.is_open(), ErrorCode::kIo, "cannot open model file " + path);
  return from_model_file(read_model_file(in));
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  ModelFile file = to_model_file(ck.params);
  const std::size_t d = ck.params.config.dim;
  auto add = [&](std::string name, const Matrix& m) {
    file.blocks.push_back(make_block(std::move(name), m.rows(), m.rows() == 0 ? d : m.cols(),
                                     m.values()));
  };
  for (const auto& [id, e] : ck.bank.entries()) {
    const std::string prefix = "bank." + std::to_string(id) + ".";
    add(prefix + "labeled", e.labeled);
    add(prefix + "unlabeled", e.unlabeled);
    Vector labels(e.labels.begin(), e.labels.end());
    file.blocks.push_back(make_block(prefix + "labels", 1, labels.size(), labels));
    file.blocks.push_back(scalar_block(prefix + "visited", e.visited ? 1 : 0));
  }
  Matrix pairs(ck.bank.pairs().size(), 2);
  std::size_t r = 0;
  for (const auto& [img, partner] : ck.bank.pairs()) {
    pairs(r, 0) = static_cast<Real>(img);
    pairs(r, 1) = static_cast<Real>(partner);
    ++r;
  }
  file.blocks.push_back(make_block("bank.pairs", pairs.rows(), 2, pairs.values()));
  file.blocks.push_back(scalar_block("bank.momentum", ck.bank.momentum()));
  add("oim.lut", ck.oim.lut());
  add("oim.queue", ck.oim.queue());
  file.blocks.push_back(scalar_block("oim.temperature", ck.oim.temperature()));
  file.blocks.push_back(scalar_block("oim.momentum", ck.oim.momentum()));
  file.blocks.push_back(
      scalar_block("oim.queue_capacity", static_cast<double>(ck.oim.queue_capacity())));
  file.blocks.push_back(scalar_block("train.epoch", static_cast<double>(ck.epoch)));

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  ACAE_REQUIRE(out.is_open(), ErrorCode::kIo, "cannot open " + path + " for writing");
  write_model_file(out, file);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  ACAE_REQUIRE(in.is_open(), ErrorCode::kIo, "cannot open checkpoint " + path);
  const ModelFile file = read_model_file(in);
  Checkpoint ck;
  ck.params = from_model_file(file);

  std::map<ImageId, ImageMemoryBank::Entry> entries;
  for (const auto& b : file.blocks) {
    if (!b.name.starts_with("bank.") || b.name == "bank.pairs" || b.name == "bank.momentum")
      continue;
    const auto dot = b.name.find('.', 5);
    ACAE_REQUIRE(dot != std::string::npos, ErrorCode::kParse, "malformed block " + b.name);
    ImageId id = 0;
    try {
      id = std::stoll(b.name.substr(5, dot - 5));
    } catch (const std::exception&) {
      fail(ErrorCode::kParse, "malformed block " + b.name);
    }
    const std::string field = b.name.substr(dot + 1);
    auto& e = entries[id];
    if (field == "labeled") {
      e.labeled = to_matrix(b);
    } else if (field == "unlabeled") {
      e.unlabeled = to_matrix(b);
    } else if (field == "labels") {
      for (float f : b.values) e.labels.push_back(static_cast<IdentityId>(f));
    } else if (field == "visited") {
      e.visited = !b.values.empty() && b.values[0] != 0;
    } else {
      fail(ErrorCode::kParse, "unexpected block " + b.name);
    }
  }
  for (auto& [id, e] : entries) {
    ACAE_REQUIRE(e.labeled.rows() == e.labels.size(), ErrorCode::kParse,
                 "bank entry " + std::to_string(id) + " has mismatched label count");
    ck.bank.restore(id, std::move(e));
  }
  PairMap pairs;
  if (const StoredBlock* p = file.find("bank.pairs")) {
    ACAE_REQUIRE(p->cols == 2 || p->rows == 0, ErrorCode::kParse, "bank.pairs must be n x 2");
    for (std::uint32_t i = 0; i < p->rows; ++i)
      pairs[static_cast<ImageId>(p->values[2 * i])] = static_cast<ImageId>(p->values[2 * i + 1]);
  }
  ck.bank.set_pairs(std::move(pairs));
  if (file.find("bank.momentum")) ck.bank.set_momentum(static_cast<Real>(scalar(file, "bank.momentum")));

  if (file.find("oim.lut")) {
    OimConfig cfg;
    cfg.temperature = static_cast<Real>(scalar(file, "oim.temperature"));
    cfg.momentum = static_cast<Real>(scalar(file, "oim.momentum"));
    cfg.queue_capacity = static_cast<std::size_t>(scalar(file, "oim.queue_capacity"));
    ck.oim = OimState(to_matrix(need(file, "oim.lut")), cfg);
    if (const StoredBlock* q = file.find("oim.queue"); q && q->rows > 0)
      ck.oim.restore_queue(to_matrix(*q));
  }
  if (file.find("train.epoch"))
    ck.epoch = static_cast<std::size_t>(scalar(file, "train.epoch"));
  return ck;
}

}  // namespace acae
