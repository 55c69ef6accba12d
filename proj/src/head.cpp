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

#include "acae/head.hpp"

#include <cmath>
#include <random>

#include "acae/error.hpp"
#include "acae/rng.hpp"

namespace acae {

void AcaeConfig::validate() const {
  ACAE_REQUIRE(dim > 0, ErrorCode::kConfig, "acae.dim must be positive");
  ACAE_REQUIRE(heads > 0 && dim % heads == 0, ErrorCode::kConfig,
          "acae.dim (" + std::to_string(dim) + ") must be divisible by acae.heads (" +
              std::to_string(heads) + ")");
  ACAE_REQUIRE(ff_dim > 0, ErrorCode::kConfig, "acae.ff_dim must be positive");
  ACAE_REQUIRE(ln_epsilon > 0, ErrorCode::kConfig, "acae.ln_epsilon must be positive");
}

namespace {

LinearMap zero_linear(std::size_t out, std::size_t in) {
  return {Matrix(out, in), Vector(out, Real(0))};
}

// Keys carry no bias: it adds the same q.b_k to every logit of a row, which
// the softmax cancels, so it would be a parameter with identically zero
// gradient.
AttentionParams zero_attention(std::size_t d) {
  return {zero_linear(d, d), {Matrix(d, d), {}}, zero_linear(d, d), zero_linear(d, d)};
}

void fill_uniform(LinearMap& map, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(map.in_dim()));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& w : map.weight.values()) w = static_cast<Real>(dist(rng));
}

void push_linear(std::vector<ParamBlock>& out, const std::string& name, LinearMap& m) {
  out.push_back({name + ".weight", m.weight.rows(), m.weight.cols(), m.weight.values()});
  if (!m.bias.empty()) out.push_back({name + ".bias", 1, m.bias.size(), m.bias});
}

void push_attention(std::vector<ParamBlock>& out, const std::string& name,
                    AttentionParams& a) {
  push_linear(out, name + ".query", a.query);
  push_linear(out, name + ".key", a.key);
  push_linear(out, name + ".value", a.value);
  push_linear(out, name + ".output", a.output);
}

void push_ln(std::vector<ParamBlock>& out, const std::string& name, LayerNormParams& p) {
  out.push_back({name + ".gain", 1, p.gain.size(), p.gain});
  out.push_back({name + ".bias", 1, p.bias.size(), p.bias});
}

}  // namespace

AcaeParams AcaeParams::zeros(const AcaeConfig& config) {
  config.validate();
  const std::size_t d = config.dim;
  AcaeParams p;
  p.config = config;
  p.intra = zero_attention(d);
  if (!config.share_qkv) p.inter = zero_attention(d);
  p.mlp_in = zero_linear(config.ff_dim, d);
  p.mlp_out = zero_linear(d, config.ff_dim);
  p.ln_intra = LayerNormParams::unit(d, config.ln_epsilon);
  p.ln_inter = LayerNormParams::unit(d, config.ln_epsilon);
  p.ln_final = LayerNormParams::unit(d, config.ln_epsilon);
  return p;
}

AcaeParams AcaeParams::initialize(const AcaeConfig& config, std::uint64_t seed) {
  AcaeParams p = zeros(config);
  Rng rng(derive_seed(seed, "acae.init"));
  for (auto* block : {&p.intra, &p.inter}) {
    if (block == &p.inter && config.share_qkv) continue;
    fill_uniform(block->query, rng);
    fill_uniform(block->key, rng);
    fill_uniform(block->value, rng);
    fill_uniform(block->output, rng);
  }
  fill_uniform(p.mlp_in, rng);
  fill_uniform(p.mlp_out, rng);
  return p;
}

bool AcaeParams::all_finite() const {
  for (const auto& b : param_blocks(*this))
    for (Real v : b.values)
      if (!std::isfinite(v)) return false;
  return true;
}

std::vector<ParamBlock> param_blocks(AcaeParams& params) {
  std::vector<ParamBlock> out;
  push_attention(out, "intra", params.intra);
  if (!params.config.share_qkv) push_attention(out, "inter", params.inter);
  push_linear(out, "mlp.in", params.mlp_in);
  push_linear(out, "mlp.out", params.mlp_out);
  push_ln(out, "ln.intra", params.ln_intra);
  push_ln(out, "ln.inter", params.ln_inter);
  push_ln(out, "ln.final", params.ln_final);
  return out;
}

std::vector<ConstParamBlock> param_blocks(const AcaeParams& params) {
  std::vector<ConstParamBlock> out;
  for (auto& b : param_blocks(const_cast<AcaeParams&>(params)))
    out.push_back({std::move(b.name), b.rows, b.cols, b.values});
  return out;
}

Matrix attention_block(const Matrix& queries_in, const Matrix& kv_in,
                       const AttentionParams& block, const LayerNormParams& ln,
                       const AcaeConfig& config, AttentionCache* cache) {
  const std::size_t d = config.dim;
  ACAE_REQUIRE(queries_in.rows() == 0 || queries_in.cols() == d,
          ErrorCode::kDimensionMismatch,
          "attention queries have width " + std::to_string(queries_in.cols()) +
              ", head expects " + std::to_string(d));
  ACAE_REQUIRE(kv_in.rows() == 0 || kv_in.cols() == d, ErrorCode::kDimensionMismatch,
          "attention keys have width " + std::to_string(kv_in.cols()) +
              ", head expects " + std::to_string(d));
  AttentionCache local;
  AttentionCache& c = cache != nullptr ? *cache : local;
  c = AttentionCache{};
  c.queries_in = queries_in;
  c.kv_in = kv_in;
  if (queries_in.rows() == 0) return Matrix(0, d);
  if (kv_in.rows() == 0) {
    c.trace.passthrough = true;
    return queries_in;
  }

  c.q = linear(queries_in, block.query);
  c.k = linear(kv_in, block.key);
  c.v = linear(kv_in, block.value);
  const std::size_t dh = config.head_dim();
  const Real scale =
      config.scaled_logits ? Real(1) / std::sqrt(static_cast<Real>(dh)) : Real(1);
  c.attended = Matrix(queries_in.rows(), d);
  for (std::size_t h = 0; h < config.heads; ++h) {
    Matrix logits =
        matmul_transposed(column_slice(c.q, h * dh, dh), column_slice(c.k, h * dh, dh));
    if (scale != Real(1)) logits *= scale;
    Matrix weights = softmax_rows(logits);
    set_column_slice(c.attended, h * dh, matmul(weights, column_slice(c.v, h * dh, dh)));
    c.trace.logits.push_back(std::move(logits));
    c.trace.weights.push_back(std::move(weights));
  }
  Matrix sum = linear(c.attended, block.output);
  sum += queries_in;
  return layer_norm_rows(sum, ln, &c.ln);
}

Matrix final_block(const Matrix& inter, const AcaeParams& params, SideForward* side) {
  Matrix pre = linear(inter, params.mlp_in);
  Matrix hidden = relu(pre);
  Matrix sum = linear(hidden, params.mlp_out);
  sum += inter;
  LayerNormCache ln;
  Matrix out = layer_norm_rows(sum, params.ln_final, &ln);
  if (side != nullptr) {
    side->mlp_pre = std::move(pre);
    side->mlp_hidden = std::move(hidden);
    side->ln_final = std::move(ln);
  }
  return out;
}

BlockResult intra_attention(const Matrix& features, const AcaeParams& params) {
  AttentionCache cache;
  Matrix out = attention_block(features, features, params.intra, params.ln_intra,
                               params.config, &cache);
  return {std::move(out), std::move(cache.trace)};
}

BlockResult intra_attention(const FeatureSet& feats, const AcaeParams& params) {
  return intra_attention(feats.features, params);
}

BlockResult inter_attention(const Matrix& intra, const Matrix& gallery,
                            const AcaeParams& params) {
  AttentionCache cache;
  Matrix out = attention_block(intra, gallery, params.inter_block(), params.ln_inter,
                               params.config, &cache);
  return {std::move(out), std::move(cache.trace)};
}

Matrix final_transform(const Matrix& inter, const AcaeParams& params) {
  if (inter.rows() == 0) return Matrix(0, params.config.dim);
  return final_block(inter, params, nullptr);
}

PairForward acae_forward(const Matrix& a, const Matrix& b, const AcaeParams& params) {
  const std::size_t d = params.config.dim;
  ACAE_REQUIRE(a.rows() == 0 || a.cols() == d, ErrorCode::kDimensionMismatch,
          "image A features have width " + std::to_string(a.cols()) +
              ", head expects " + std::to_string(d));
  ACAE_REQUIRE(b.rows() == 0 || b.cols() == d, ErrorCode::kDimensionMismatch,
          "image B features have width " + std::to_string(b.cols()) +
              ", head expects " + std::to_string(d));
  PairForward f;
  f.a.out.intra =
      attention_block(a, a, params.intra, params.ln_intra, params.config, &f.a.intra);
  f.b.out.intra =
      attention_block(b, b, params.intra, params.ln_intra, params.config, &f.b.intra);
  const AttentionParams& cross = params.inter_block();
  f.a.out.inter = attention_block(f.a.out.intra, b, cross, params.ln_inter,
                                  params.config, &f.a.inter);
  f.b.out.inter = attention_block(f.b.out.intra, a, cross, params.ln_inter,
                                  params.config, &f.b.inter);
  f.a.out.final = a.rows() == 0 ? Matrix(0, d) : final_block(f.a.out.inter, params, &f.a);
  f.b.out.final = b.rows() == 0 ? Matrix(0, d) : final_block(f.b.out.inter, params, &f.b);
  return f;
}

PairForward acae_forward(const FeatureSet& a, const FeatureSet& b,
                         const AcaeParams& params) {
  return acae_forward(a.features, b.features, params);
}

}  // namespace acae
