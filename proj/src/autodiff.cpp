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

#include "acae/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "acae/error.hpp"
#include "acae/rng.hpp"

namespace acae {

namespace {

struct BlockInputGrads {
  Matrix d_queries_in;
  Matrix d_kv_in;
};

Matrix or_zeros(const Matrix& m, std::size_t rows, std::size_t cols) {
  if (m.rows() == 0 && rows > 0) return Matrix(rows, cols);
  ACAE_REQUIRE(m.rows() == rows && m.cols() == cols, ErrorCode::kDimensionMismatch,
          "upstream gradient shape mismatch");
  return m;
}

BlockInputGrads attention_block_backward(const AttentionCache& c, const Matrix& d_out,
                                         const AttentionParams& block,
                                         const LayerNormParams& ln,
                                         const AcaeConfig& config, AttentionParams* g,
                                         LayerNormParams* g_ln,
                                         std::vector<Matrix>* d_logits) {
  const std::size_t d = config.dim;
  const std::size_t n = c.queries_in.rows();
  const std::size_t m = c.kv_in.rows();
  if (n == 0) return {Matrix(0, d), Matrix(m, d)};
  if (c.trace.passthrough) return {d_out, Matrix(0, d)};

  Matrix d_sum = layer_norm_rows_backward(d_out, c.ln, ln, &g_ln->gain, &g_ln->bias);
  BlockInputGrads out;
  out.d_queries_in = d_sum;
  const Matrix d_attended = linear_backward(c.attended, d_sum, block.output, &g->output);

  const std::size_t dh = config.head_dim();
  const Real scale =
      config.scaled_logits ? Real(1) / std::sqrt(static_cast<Real>(dh)) : Real(1);
  Matrix dq(n, d), dk(m, d), dv(m, d);
  for (std::size_t h = 0; h < config.heads; ++h) {
    const Matrix& w = c.trace.weights[h];
    const Matrix d_head = column_slice(d_attended, h * dh, dh);
    const Matrix d_w = matmul_transposed(d_head, column_slice(c.v, h * dh, dh));
    set_column_slice(dv, h * dh, transposed_matmul(w, d_head));
    Matrix d_e = softmax_rows_backward(w, d_w);
    if (d_logits != nullptr) d_logits->push_back(d_e);
    if (scale != Real(1)) d_e *= scale;
    set_column_slice(dq, h * dh, matmul(d_e, column_slice(c.k, h * dh, dh)));
    set_column_slice(dk, h * dh, transposed_matmul(d_e, column_slice(c.q, h * dh, dh)));
  }
  out.d_queries_in += linear_backward(c.queries_in, dq, block.query, &g->query);
  out.d_kv_in = linear_backward(c.kv_in, dk, block.key, &g->key);
  out.d_kv_in += linear_backward(c.kv_in, dv, block.value, &g->value);
  return out;
}

/// Returns (d own input, d other image's raw features).
std::pair<Matrix, Matrix> side_backward(const SideForward& s, const EmbeddingGrads& up,
                                        const AcaeParams& params, Gradients& grads,
                                        std::vector<Matrix>* rec_intra,
                                        std::vector<Matrix>* rec_inter) {
  const std::size_t d = params.config.dim;
  const std::size_t n = s.out.intra.rows();
  Matrix d_inter = or_zeros(up.inter, n, d);
  if (up.final.rows() > 0 && n > 0) {
    const Matrix d_sum = layer_norm_rows_backward(
        or_zeros(up.final, n, d), s.ln_final, params.ln_final,
        &grads.params.ln_final.gain, &grads.params.ln_final.bias);
    d_inter += d_sum;
    const Matrix d_hidden =
        linear_backward(s.mlp_hidden, d_sum, params.mlp_out, &grads.params.mlp_out);
    const Matrix d_pre = relu_backward(s.mlp_pre, d_hidden);
    d_inter += linear_backward(s.out.inter, d_pre, params.mlp_in, &grads.params.mlp_in);
  }
  BlockInputGrads inter = attention_block_backward(
      s.inter, d_inter, params.inter_block(), params.ln_inter, params.config,
      &grads.params.inter_block(), &grads.params.ln_inter, rec_inter);
  Matrix d_intra = or_zeros(up.intra, n, d);
  d_intra += inter.d_queries_in;
  BlockInputGrads intra = attention_block_backward(
      s.intra, d_intra, params.intra, params.ln_intra, params.config,
      &grads.params.intra, &grads.params.ln_intra, rec_intra);
  Matrix d_self = std::move(intra.d_queries_in);
  d_self += intra.d_kv_in;
  return {std::move(d_self), std::move(inter.d_kv_in)};
}

void zero_params(AcaeParams& p) {
  for (auto& b : param_blocks(p)) std::fill(b.values.begin(), b.values.end(), Real(0));
}

}  // namespace

Gradients Gradients::zeros_like(const AcaeParams& params, std::size_t n_a,
                                std::size_t n_b) {
  Gradients g;
  g.params = params;
  zero_params(g.params);
  g.d_a = Matrix(n_a, params.config.dim);
  g.d_b = Matrix(n_b, params.config.dim);
  return g;
}

Gradients backward(const PairForward& forward, const AcaeParams& params,
                   const EmbeddingGrads& upstream_a, const EmbeddingGrads& upstream_b,
                   LogitGrads* logit_grads) {
  const std::size_t n_a = forward.a.out.intra.rows();
  const std::size_t n_b = forward.b.out.intra.rows();
  Gradients g = Gradients::zeros_like(params, n_a, n_b);
  auto [da_self, db_cross] =
      side_backward(forward.a, upstream_a, params, g,
                    logit_grads ? &logit_grads->a_intra : nullptr,
                    logit_grads ? &logit_grads->a_inter : nullptr);
  auto [db_self, da_cross] =
      side_backward(forward.b, upstream_b, params, g,
                    logit_grads ? &logit_grads->b_intra : nullptr,
                    logit_grads ? &logit_grads->b_inter : nullptr);
  g.d_a += da_self;
  if (da_cross.rows() > 0) g.d_a += da_cross;
  g.d_b += db_self;
  if (db_cross.rows() > 0) g.d_b += db_cross;
  return g;
}

namespace {

Real supervised_side(const ContextualEmbeddings& e, const std::vector<IdentityId>& labels,
                     const OimState& oim, const SupervisionOptions& options,
                     EmbeddingGrads* up) {
  Real loss = 0;
  auto term = [&](const Matrix& emb, Matrix* grad_slot) {
    if (emb.rows() == 0) return;
    OimLoss r = oim_loss(l2_normalize_rows(emb), labels, oim);
    loss += r.loss;
    if (grad_slot != nullptr) *grad_slot = l2_normalize_rows_backward(emb, r.grad);
  };
  if (options.intra) term(e.intra, up ? &up->intra : nullptr);
  if (options.inter) term(e.inter, up ? &up->inter : nullptr);
  if (options.final) term(e.final, up ? &up->final : nullptr);
  return loss;
}

using Ld = long double;
using LdRow = std::vector<Ld>;
using LdRows = std::vector<LdRow>;

LdRows ld_rows(const Matrix& m) {
  LdRows out(m.rows(), LdRow(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

LdRow ld_affine(const LinearMap& map, const LdRow& x) {
  LdRow y(map.out_dim());
  for (std::size_t o = 0; o < y.size(); ++o) {
    Ld s = map.bias.empty() ? Ld(0) : Ld(map.bias[o]);
    for (std::size_t i = 0; i < x.size(); ++i) s += Ld(map.weight(o, i)) * x[i];
    y[o] = s;
  }
  return y;
}

LdRow ld_layer_norm(const LdRow& x, const LayerNormParams& p) {
  const Ld n = Ld(x.size());
  Ld mean = 0;
  for (Ld v : x) mean += v;
  mean /= n;
  Ld var = 0;
  for (Ld v : x) var += (v - mean) * (v - mean);
  var /= n;
  const Ld inv = 1 / std::sqrt(var + Ld(p.epsilon));
  LdRow y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = Ld(p.gain[i]) * (x[i] - mean) * inv + Ld(p.bias[i]);
  return y;
}

LdRows ld_attention(const LdRows& xq, const LdRows& xkv, const AttentionParams& p,
                    const LayerNormParams& ln, const AcaeConfig& cfg) {
  if (xkv.empty()) return xq;
  const std::size_t d = cfg.dim, heads = cfg.heads, dh = cfg.head_dim();
  const Ld scale = cfg.scaled_logits ? 1 / std::sqrt(Ld(dh)) : Ld(1);
  LdRows q, k, v;
  for (const auto& x : xq) q.push_back(ld_affine(p.query, x));
  for (const auto& x : xkv) k.push_back(ld_affine(p.key, x));
  for (const auto& x : xkv) v.push_back(ld_affine(p.value, x));
  LdRows out;
  LdRow e(xkv.size());
  for (std::size_t i = 0; i < xq.size(); ++i) {
    LdRow concat(d, 0);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < xkv.size(); ++j) {
        Ld s = 0;
        for (std::size_t t = h * dh; t < (h + 1) * dh; ++t) s += q[i][t] * k[j][t];
        e[j] = scale * s;
      }
      const Ld mx = *std::max_element(e.begin(), e.end());
      Ld z = 0;
      for (Ld x : e) z += std::exp(x - mx);
      for (std::size_t j = 0; j < xkv.size(); ++j) {
        const Ld w = std::exp(e[j] - mx) / z;
        for (std::size_t t = h * dh; t < (h + 1) * dh; ++t) concat[t] += w * v[j][t];
      }
    }
    LdRow o = ld_affine(p.output, concat);
    for (std::size_t t = 0; t < d; ++t) o[t] += xq[i][t];
    out.push_back(ld_layer_norm(o, ln));
  }
  return out;
}

LdRows ld_final(const LdRows& x, const AcaeParams& p) {
  LdRows out;
  for (const auto& row : x) {
    LdRow hidden = ld_affine(p.mlp_in, row);
    for (Ld& h : hidden) h = h > 0 ? h : Ld(0);
    LdRow y = ld_affine(p.mlp_out, hidden);
    for (std::size_t t = 0; t < y.size(); ++t) y[t] += row[t];
    out.push_back(ld_layer_norm(y, p.ln_final));
  }
  return out;
}

Ld ld_oim(const LdRows& emb, const std::vector<IdentityId>& labels, const OimState& oim) {
  const Matrix queue = oim.queue();
  const Ld inv_tau = 1 / Ld(oim.temperature());
  Ld total = 0;
  std::size_t count = 0;
  LdRow z;
  for (std::size_t i = 0; i < emb.size(); ++i) {
    if (labels[i] == kUnlabeled) continue;
    ACAE_REQUIRE(labels[i] >= 0 && std::size_t(labels[i]) < oim.identities(),
                 ErrorCode::kInvalidArgument, "label outside the lookup table");
    Ld norm = 0;
    for (Ld v : emb[i]) norm += v * v;
    norm = std::sqrt(norm);
    auto logit = [&](std::span<const Real> row) {
      Ld s = 0;
      for (std::size_t j = 0; j < row.size(); ++j) s += Ld(row[j]) * emb[i][j];
      return s / norm * inv_tau;
    };
    z.clear();
    for (std::size_t k = 0; k < oim.identities(); ++k) z.push_back(logit(oim.lut().row(k)));
    for (std::size_t k = 0; k < queue.rows(); ++k) z.push_back(logit(queue.row(k)));
    const Ld mx = *std::max_element(z.begin(), z.end());
    Ld sum = 0;
    for (Ld v : z) sum += std::exp(v - mx);
    total += mx + std::log(sum) - z[std::size_t(labels[i])];
    ++count;
  }
  return count == 0 ? Ld(0) : total / Ld(count);
}

Ld ld_side_loss(const LdRows& intra, const LdRows& inter, const LdRows& fin,
                const std::vector<IdentityId>& labels, const OimState& oim,
                const SupervisionOptions& options) {
  Ld loss = 0;
  if (options.intra) loss += ld_oim(intra, labels, oim);
  if (options.inter) loss += ld_oim(inter, labels, oim);
  if (options.final) loss += ld_oim(fin, labels, oim);
  return loss;
}

}  // namespace

long double pair_oim_loss_extended(const AcaeParams& params, const PairInstance& instance,
                                   const OimState& oim, const SupervisionOptions& options) {
  params.config.validate();
  const std::size_t d = params.config.dim;
  ACAE_REQUIRE(instance.a.features.cols() == d || instance.a.features.rows() == 0,
               ErrorCode::kDimensionMismatch, "image a width does not match the head");
  ACAE_REQUIRE(instance.b.features.cols() == d || instance.b.features.rows() == 0,
               ErrorCode::kDimensionMismatch, "image b width does not match the head");
  const LdRows a = ld_rows(instance.a.features);
  const LdRows b = ld_rows(instance.b.features);
  const AttentionParams& cross = params.inter_block();
  const LdRows a_intra = ld_attention(a, a, params.intra, params.ln_intra, params.config);
  const LdRows b_intra = ld_attention(b, b, params.intra, params.ln_intra, params.config);
  const LdRows a_inter = ld_attention(a_intra, b, cross, params.ln_inter, params.config);
  const LdRows b_inter = ld_attention(b_intra, a, cross, params.ln_inter, params.config);
  return ld_side_loss(a_intra, a_inter, ld_final(a_inter, params), instance.a.labels, oim,
                      options) +
         ld_side_loss(b_intra, b_inter, ld_final(b_inter, params), instance.b.labels, oim,
                      options);
}

Real pair_oim_loss(const AcaeParams& params, const PairInstance& instance,
                   const OimState& oim, const SupervisionOptions& options) {
  const PairForward f = acae_forward(instance.a, instance.b, params);
  return supervised_side(f.a.out, instance.a.labels, oim, options, nullptr) +
         supervised_side(f.b.out, instance.b.labels, oim, options, nullptr);
}

LossAndGradients pair_oim_loss_and_gradients(const AcaeParams& params,
                                             const PairInstance& instance,
                                             const OimState& oim,
                                             const SupervisionOptions& options) {
  LossAndGradients out;
  out.forward = acae_forward(instance.a, instance.b, params);
  EmbeddingGrads up_a, up_b;
  out.loss = supervised_side(out.forward.a.out, instance.a.labels, oim, options, &up_a) +
             supervised_side(out.forward.b.out, instance.b.labels, oim, options, &up_b);
  ACAE_REQUIRE(std::isfinite(out.loss), ErrorCode::kNumerical, "non-finite ACAE loss");
  out.grads = backward(out.forward, params, up_a, up_b);
  return out;
}

Real central_difference(const std::function<Real(Real)>& f, Real x, Real step) {
  return (f(x + step) - f(x - step)) / (Real(2) * step);
}

Real relative_error(Real analytic, Real numeric) {
  return std::abs(analytic - numeric) /
         std::max(Real(1e-8), std::abs(analytic) + std::abs(numeric));
}

namespace {

void check_entries(GradCheckBlock& block, std::span<Real> values,
                   std::span<const Real> analytic, std::size_t cols, Real step,
                   const std::function<long double()>& loss) {
  block.count = values.size();
  for (std::size_t k = 0; k < values.size(); ++k) {
    const Real saved = values[k];
    values[k] = saved + step;
    const long double up = loss();
    values[k] = saved - step;
    const long double down = loss();
    values[k] = saved;
    // Divide by the step actually taken, which differs from 2 * step by the
    // rounding of saved +/- step.
    const long double taken = static_cast<long double>(saved + step) -
                              static_cast<long double>(saved - step);
    const Real numeric = static_cast<Real>((up - down) / taken);
    const Real r = relative_error(analytic[k], numeric);
    if (k == 0 || r > block.max_rel_error) {
      block.max_rel_error = r;
      block.worst_entry = block.name + "[" + std::to_string(k / cols) + "," +
                          std::to_string(k % cols) + "]";
    }
  }
}

}  // namespace

GradCheckReport grad_check_against(const AcaeParams& params,
                                   const PairInstance& instance, const OimState& oim,
                                   const SupervisionOptions& options,
                                   const Gradients& analytic, Real tolerance,
                                   Real step) {
  GradCheckReport report;
  report.tolerance = tolerance;
  AcaeParams work = params;
  PairInstance inst = instance;
  auto loss = [&] { return pair_oim_loss_extended(work, inst, oim, options); };

  auto work_blocks = param_blocks(work);
  auto grad_blocks = param_blocks(analytic.params);
  ACAE_REQUIRE(work_blocks.size() == grad_blocks.size(), ErrorCode::kDimensionMismatch,
          "gradient blocks do not match parameter blocks");
  for (std::size_t b = 0; b < work_blocks.size(); ++b) {
    GradCheckBlock block;
    block.name = work_blocks[b].name;
    check_entries(block, work_blocks[b].values, grad_blocks[b].values,
                  work_blocks[b].cols, step, loss);
    report.blocks.push_back(std::move(block));
  }
  GradCheckBlock in_a;
  in_a.name = "input.a";
  check_entries(in_a, inst.a.features.values(), analytic.d_a.values(),
                std::max<std::size_t>(inst.a.features.cols(), 1), step, loss);
  report.blocks.push_back(std::move(in_a));
  GradCheckBlock in_b;
  in_b.name = "input.b";
  check_entries(in_b, inst.b.features.values(), analytic.d_b.values(),
                std::max<std::size_t>(inst.b.features.cols(), 1), step, loss);
  report.blocks.push_back(std::move(in_b));

  for (auto& block : report.blocks) {
    block.pass = block.max_rel_error < tolerance;
    if (block.max_rel_error >= report.max_rel_error && block.count > 0) {
      report.max_rel_error = block.max_rel_error;
      report.worst_entry = block.worst_entry;
    }
    report.pass = report.pass && block.pass;
  }
  return report;
}

GradCheckReport grad_check(const AcaeParams& params, const PairInstance& instance,
                           const OimState& oim, const SupervisionOptions& options,
                           Real tolerance, Real step) {
  const auto analytic = pair_oim_loss_and_gradients(params, instance, oim, options);
  return grad_check_against(params, instance, oim, options, analytic.grads, tolerance,
                            step);
}

Real min_abs_preactivation(const AcaeParams& params, const PairInstance& pair) {
  const PairForward fwd = acae_forward(pair.a.features, pair.b.features, params);
  Real m = std::numeric_limits<Real>::infinity();
  for (const Matrix* pre : {&fwd.a.mlp_pre, &fwd.b.mlp_pre})
    for (Real v : pre->values()) m = std::min(m, std::abs(v));
  return m;
}

GradCheckInstance make_grad_check_instance(const AcaeConfig& config, std::size_t n,
                                           std::size_t m, std::size_t identities,
                                           std::uint64_t seed) {
  Rng rng(derive_seed(seed, "gradcheck.instance"));
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::normal_distribution<double> normal;
  GradCheckInstance out{AcaeParams::initialize(config, seed), {}, {}};
  for (auto& block : param_blocks(out.params)) {
    const bool is_bias = block.name.ends_with(".bias");
    const bool is_gain = block.name.ends_with(".gain");
    if (!is_bias && !is_gain) continue;
    for (auto& v : block.values) v += static_cast<Real>(jitter(rng));
  }
  auto random_set = [&](std::size_t rows, ImageId id) {
    FeatureSet fs;
    fs.image_id = id;
    fs.features = Matrix(rows, config.dim);
    for (auto& v : fs.features.values()) v = static_cast<Real>(normal(rng));
    fs.features = l2_normalize_rows(fs.features);
    for (std::size_t i = 0; i < rows; ++i) {
      // Leave the last row of larger sets unlabeled to exercise that path.
      const bool unlabeled = rows > 1 && i + 1 == rows;
      fs.labels.push_back(unlabeled ? kUnlabeled
                                    : static_cast<IdentityId>(uniform_index(rng, identities)));
    }
    return fs;
  };
  // Central differences are meaningless across a ReLU kink, so redraw the
  // inputs until every hidden pre-activation sits clear of zero.
  constexpr Real kKinkMargin = Real(1e-3);
  for (int attempt = 0; attempt < 256; ++attempt) {
    out.pair.a = random_set(n, 0);
    out.pair.b = random_set(m, 1);
    if (min_abs_preactivation(out.params, out.pair) >= kKinkMargin) break;
  }
  OimConfig oim_cfg;
  out.oim = OimState::random(identities, config.dim, oim_cfg, derive_seed(seed, "gc.oim"));
  for (int k = 0; k < 3; ++k) {
    Vector q(config.dim);
    for (auto& v : q) v = static_cast<Real>(normal(rng));
    Matrix qm(1, config.dim, q);
    qm = l2_normalize_rows(qm);
    out.oim.push_unlabeled(qm.row(0));
  }
  return out;
}

}  // namespace acae
