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
#include <span>
#include <string>
#include <vector>

#include "acae/feature_set.hpp"
#include "acae/tensor.hpp"

namespace acae {

struct AcaeConfig {
  std::size_t dim = 64;
  std::size_t heads = 4;
  std::size_t ff_dim = 128;
  /// Divide attention logits by sqrt(head width). Off reproduces the plain
  /// dot-product logits.
  bool scaled_logits = false;
  /// Reuse the intra-image Q/K/V/output maps for the inter-image block.
  bool share_qkv = false;
  Real ln_epsilon = Real(1e-5);

  std::size_t head_dim() const { return dim / heads; }
  void validate() const;
};

/// One attention block. The per-head query/key/value maps are stacked along
/// the output axis: head h owns output rows [h * head_dim, (h + 1) * head_dim).
struct AttentionParams {
  LinearMap query;
  LinearMap key;
  LinearMap value;
  LinearMap output;
};

struct AcaeParams {
  AcaeConfig config;
  AttentionParams intra;
  AttentionParams inter;
  LinearMap mlp_in;
  LinearMap mlp_out;
  LayerNormParams ln_intra;
  LayerNormParams ln_inter;
  LayerNormParams ln_final;

  const AttentionParams& inter_block() const { return config.share_qkv ? intra : inter; }
  AttentionParams& inter_block() { return config.share_qkv ? intra : inter; }

  /// All weights zero, layer norms at unit gain / zero bias.
  static AcaeParams zeros(const AcaeConfig& config);
  /// Fan-in scaled uniform weights, zero biases, unit layer norms.
  static AcaeParams initialize(const AcaeConfig& config, std::uint64_t seed);

  bool all_finite() const;
};

/// A named, flat view of one parameter tensor. Bias and gain vectors are
/// exposed as 1 x n blocks.
struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<Real> values;
};

struct ConstParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::span<const Real> values;
};

/// Blocks in a fixed order. Inter-image blocks are omitted when share_qkv is
/// set.
std::vector<ParamBlock> param_blocks(AcaeParams& params);
std::vector<ConstParamBlock> param_blocks(const AcaeParams& params);

/// Attention weights and logits of one block, one matrix per head.
struct AttentionTrace {
  std::vector<Matrix> logits;
  std::vector<Matrix> weights;
  /// Set when the key/value set was empty and the block returned its query
  /// input unchanged.
  bool passthrough = false;
};

struct AttentionCache {
  Matrix queries_in;
  Matrix kv_in;
  Matrix q;
  Matrix k;
  Matrix v;
  Matrix attended;  // concatenated head outputs, before the output map
  AttentionTrace trace;
  LayerNormCache ln;
};

/// Per-node triplet for one image of a pair.
struct ContextualEmbeddings {
  Matrix intra;
  Matrix inter;
  Matrix final;
};

struct SideForward {
  AttentionCache intra;
  AttentionCache inter;
  Matrix mlp_pre;
  Matrix mlp_hidden;
  LayerNormCache ln_final;
  ContextualEmbeddings out;
};

struct PairForward {
  SideForward a;
  SideForward b;
};

struct BlockResult {
  Matrix out;
  AttentionTrace trace;
};

BlockResult intra_attention(const Matrix& features, const AcaeParams& params);
BlockResult intra_attention(const FeatureSet& feats, const AcaeParams& params);

/// \p intra holds the querying image's intra features, \p gallery the other
/// image's raw appearance rows. An empty gallery passes \p intra through.
BlockResult inter_attention(const Matrix& intra, const Matrix& gallery,
                            const AcaeParams& params);

Matrix final_transform(const Matrix& inter, const AcaeParams& params);

/// Symmetric pair forward with shared parameters: intra on each image, inter
/// in both directions, then the final transform.
PairForward acae_forward(const Matrix& a, const Matrix& b, const AcaeParams& params);
PairForward acae_forward(const FeatureSet& a, const FeatureSet& b,
                         const AcaeParams& params);

// Lower-level pieces shared with the backward pass.
Matrix attention_block(const Matrix& queries_in, const Matrix& kv_in,
                       const AttentionParams& block, const LayerNormParams& ln,
                       const AcaeConfig& config, AttentionCache* cache);
Matrix final_block(const Matrix& inter, const AcaeParams& params, SideForward* side);

}  // namespace acae
