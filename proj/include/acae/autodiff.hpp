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
#include <functional>
#include <string>
#include <vector>

#include "acae/feature_set.hpp"
#include "acae/head.hpp"
#include "acae/oim.hpp"

namespace acae {

/// Gradient blocks shaped like AcaeParams, plus gradients of the two input
/// feature sets.
struct Gradients {
  AcaeParams params;
  Matrix d_a;
  Matrix d_b;

  static Gradients zeros_like(const AcaeParams& params, std::size_t n_a, std::size_t n_b);
};

/// Loss gradients arriving at each embedding of one image. Empty matrices
/// mean no gradient from that output.
struct EmbeddingGrads {
  Matrix intra;
  Matrix inter;
  Matrix final;
};

/// Per-head logit gradients, recorded on request for inspection.
struct LogitGrads {
  std::vector<Matrix> a_intra;
  std::vector<Matrix> a_inter;
  std::vector<Matrix> b_intra;
  std::vector<Matrix> b_inter;
};

/// Reverse pass through a recorded acae_forward.
Gradients backward(const PairForward& forward, const AcaeParams& params,
                   const EmbeddingGrads& upstream_a, const EmbeddingGrads& upstream_b,
                   LogitGrads* logit_grads = nullptr);

/// Which embeddings receive OIM supervision. Each supervised embedding is
/// L2-normalized before the loss.
struct SupervisionOptions {
  bool intra = false;
  bool inter = false;
  bool final = true;
};

struct PairInstance {
  FeatureSet a;
  FeatureSet b;
};

struct LossAndGradients {
  Real loss = 0;
  Gradients grads;
  PairForward forward;
};

/// Sum over both images and the supervised embeddings of the OIM loss.
/// The OIM state is a constant here.
Real pair_oim_loss(const AcaeParams& params, const PairInstance& instance,
                   const OimState& oim, const SupervisionOptions& options = {});

/// The same loss from a loop-level long double forward that shares no code
/// with acae_forward. The finite-difference checker differentiates this, so
/// its central differences are not swamped by double rounding.
long double pair_oim_loss_extended(const AcaeParams& params, const PairInstance& instance,
                                   const OimState& oim, const SupervisionOptions& options = {});

LossAndGradients pair_oim_loss_and_gradients(const AcaeParams& params,
                                             const PairInstance& instance,
                                             const OimState& oim,
                                             const SupervisionOptions& options = {});

Real central_difference(const std::function<Real(Real)>& f, Real x, Real step);

struct GradCheckBlock {
  std::string name;
  std::size_t count = 0;
  Real max_rel_error = 0;
  std::string worst_entry;
  bool pass = true;
};

struct GradCheckReport {
  std::vector<GradCheckBlock> blocks;
  Real tolerance = 0;
  Real max_rel_error = 0;
  std::string worst_entry;
  bool pass = true;
};

/// r = |g_ad - g_fd| / max(1e-8, |g_ad| + |g_fd|)
Real relative_error(Real analytic, Real numeric);

/// Central-difference check of every parameter entry and every input feature
/// entry against reverse-mode gradients.
GradCheckReport grad_check(const AcaeParams& params, const PairInstance& instance,
                           const OimState& oim, const SupervisionOptions& options = {},
                           Real tolerance = Real(1e-4), Real step = Real(1e-5));

/// Same check against caller-supplied analytic gradients.
GradCheckReport grad_check_against(const AcaeParams& params,
                                   const PairInstance& instance, const OimState& oim,
                                   const SupervisionOptions& options,
                                   const Gradients& analytic, Real tolerance,
                                   Real step);

struct GradCheckInstance {
  AcaeParams params;
  PairInstance pair;
  OimState oim;
};

/// Smallest |pre-activation| of the final MLP's hidden layer over both sides.
Real min_abs_preactivation(const AcaeParams& params, const PairInstance& pair);

/// Seeded instance with perturbed biases and layer norms so every parameter
/// path carries gradient. Inputs are redrawn until no hidden unit sits within
/// 1e-3 of its ReLU kink.
GradCheckInstance make_grad_check_instance(const AcaeConfig& config, std::size_t n,
                                           std::size_t m, std::size_t identities,
                                           std::uint64_t seed);

}  // namespace acae
