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

// Deliberately naive reference implementations used as test oracles. They
// share no code with the library beyond the parameter containers.

#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <utility>
#include <vector>

#include "acae/head.hpp"
#include "acae/tensor.hpp"

namespace oracle {

using acae::Matrix;
using Rows = std::vector<std::vector<double>>;

inline Rows rows_of(const Matrix& m) {
  Rows out(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out[i][j] = m(i, j);
  return out;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

/// y = W x + b for one vector.
inline std::vector<double> apply(const acae::LinearMap& map, const std::vector<double>& x) {
  std::vector<double> y(map.weight.rows());
  for (std::size_t o = 0; o < y.size(); ++o) {
    double s = map.bias.empty() ? 0.0 : map.bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) s += map.weight(o, i) * x[i];
    y[o] = s;
  }
  return y;
}

inline std::vector<double> layer_norm(const std::vector<double>& x,
                                      const acae::LayerNormParams& p) {
  const double n = static_cast<double>(x.size());
  double mean = 0;
  for (double v : x) mean += v;
  mean /= n;
  double var = 0;
  for (double v : x) var += (v - mean) * (v - mean);
  var /= n;
  std::vector<double> y(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    y[i] = p.gain[i] * (x[i] - mean) / std::sqrt(var + p.epsilon) + p.bias[i];
  return y;
}

struct AttentionOut {
  Rows out;
  /// weights[h][i][j]
  std::vector<Rows> weights;
};

/// out_i = LN(x_i + W_o concat_h(sum_j w^h_ij v^h_j) + b_o) with
/// w^h_ij = softmax_j(q^h_i . k^h_j); queries come from \p xq, keys and values
/// from \p xkv. An empty \p xkv passes \p xq through.
inline AttentionOut attention(const Rows& xq, const Rows& xkv, const acae::AttentionParams& p,
                              const acae::LayerNormParams& ln, const acae::AcaeConfig& cfg) {
  AttentionOut r;
  if (xkv.empty()) {
    r.out = xq;
    return r;
  }
  const std::size_t d = cfg.dim, H = cfg.heads, dh = d / H;
  const double scale = cfg.scaled_logits ? 1.0 / std::sqrt(static_cast<double>(dh)) : 1.0;
  Rows q, k, v;
  for (const auto& x : xq) q.push_back(oracle::apply(p.query, x));
  for (const auto& x : xkv) k.push_back(oracle::apply(p.key, x));
  for (const auto& x : xkv) v.push_back(oracle::apply(p.value, x));
  r.weights.assign(H, Rows(xq.size(), std::vector<double>(xkv.size())));
  for (std::size_t i = 0; i < xq.size(); ++i) {
    std::vector<double> concat(d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      std::vector<double> e(xkv.size());
      for (std::size_t j = 0; j < xkv.size(); ++j) {
        double s = 0;
        for (std::size_t t = 0; t < dh; ++t) s += q[i][h * dh + t] * k[j][h * dh + t];
        e[j] = scale * s;
      }
      const double m = *std::max_element(e.begin(), e.end());
      double z = 0;
      for (double x : e) z += std::exp(x - m);
      for (std::size_t j = 0; j < xkv.size(); ++j) {
        const double w = std::exp(e[j] - m) / z;
        r.weights[h][i][j] = w;
        for (std::size_t t = 0; t < dh; ++t) concat[h * dh + t] += w * v[j][h * dh + t];
      }
    }
    std::vector<double> o = oracle::apply(p.output, concat);
    for (std::size_t t = 0; t < d; ++t) o[t] += xq[i][t];
    r.out.push_back(layer_norm(o, ln));
  }
  return r;
}

inline Rows final_transform(const Rows& x, const acae::AcaeParams& p) {
  Rows out;
  for (const auto& row : x) {
    std::vector<double> hidden = oracle::apply(p.mlp_in, row);
    for (auto& h : hidden) h = h > 0 ? h : 0;
    std::vector<double> y = oracle::apply(p.mlp_out, hidden);
    for (std::size_t t = 0; t < y.size(); ++t) y[t] += row[t];
    out.push_back(layer_norm(y, p.ln_final));
  }
  return out;
}

struct Side {
  Rows intra, inter, final;
  AttentionOut intra_att, inter_att;
};

inline std::pair<Side, Side> forward(const Matrix& a, const Matrix& b, const acae::AcaeParams& p) {
  const Rows ra = rows_of(a), rb = rows_of(b);
  const acae::AttentionParams& inter = p.config.share_qkv ? p.intra : p.inter;
  Side sa, sb;
  sa.intra_att = attention(ra, ra, p.intra, p.ln_intra, p.config);
  sb.intra_att = attention(rb, rb, p.intra, p.ln_intra, p.config);
  sa.intra = sa.intra_att.out;
  sb.intra = sb.intra_att.out;
  sa.inter_att = attention(sa.intra, rb, inter, p.ln_inter, p.config);
  sb.inter_att = attention(sb.intra, ra, inter, p.ln_inter, p.config);
  sa.inter = sa.inter_att.out;
  sb.inter = sb.inter_att.out;
  sa.final = final_transform(sa.inter, p);
  sb.final = final_transform(sb.inter, p);
  return {sa, sb};
}

/// k-reciprocal re-ranking written with explicit sets. Distances are squared
/// Euclidean distances between L2-normalized rows; Jaccard distance is
/// 1 - sum(min)/sum(max).
inline Rows k_reciprocal(const Matrix& query, const Matrix& gallery, std::size_t k1,
                         std::size_t k2, double lambda) {
  Rows pts = rows_of(query);
  for (const auto& r : rows_of(gallery)) pts.push_back(r);
  for (auto& r : pts) {
    double n = 0;
    for (double v : r) n += v * v;
    n = std::sqrt(n);
    for (double& v : r) v /= n;
  }
  const std::size_t N = pts.size(), nq = query.rows();
  Rows dist(N, std::vector<double>(N));
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) {
      double s = 0;
      for (std::size_t t = 0; t < pts[i].size(); ++t) s += pts[i][t] * pts[j][t];
      dist[i][j] = 2.0 - 2.0 * s;
    }
  auto neighbors = [&](std::size_t i, std::size_t k) {
    std::vector<std::pair<double, std::size_t>> order;
    for (std::size_t j = 0; j < N; ++j) order.push_back({dist[i][j], j});
    std::sort(order.begin(), order.end());
    std::vector<std::size_t> out;
    for (std::size_t t = 0; t < std::min(k + 1, N); ++t) out.push_back(order[t].second);
    return out;
  };
  auto reciprocal = [&](std::size_t i, std::size_t k) {
    std::set<std::size_t> out;
    for (std::size_t g : neighbors(i, k)) {
      const auto back = neighbors(g, k);
      if (std::find(back.begin(), back.end(), i) != back.end()) out.insert(g);
    }
    return out;
  };
  const std::size_t half = static_cast<std::size_t>(std::nearbyint(k1 / 2.0));
  Rows V(N, std::vector<double>(N, 0.0));
  for (std::size_t i = 0; i < N; ++i) {
    const std::set<std::size_t> R = reciprocal(i, k1);
    std::set<std::size_t> star = R;
    for (std::size_t c : R) {
      const std::set<std::size_t> Rc = reciprocal(c, half);
      std::vector<std::size_t> common;
      std::set_intersection(Rc.begin(), Rc.end(), R.begin(), R.end(),
                            std::back_inserter(common));
      if (static_cast<double>(common.size()) > (2.0 / 3.0) * static_cast<double>(Rc.size()))
        star.insert(Rc.begin(), Rc.end());
    }
    double z = 0;
    for (std::size_t g : star) z += std::exp(-dist[i][g]);
    for (std::size_t g : star) V[i][g] = std::exp(-dist[i][g]) / z;
  }
  if (k2 > 1) {
    Rows Q(N, std::vector<double>(N, 0.0));
    for (std::size_t i = 0; i < N; ++i) {
      for (std::size_t g : neighbors(i, k2 - 1))
        for (std::size_t j = 0; j < N; ++j) Q[i][j] += V[g][j] / static_cast<double>(k2);
    }
    V = Q;
  }
  Rows out(nq, std::vector<double>(gallery.rows()));
  for (std::size_t i = 0; i < nq; ++i)
    for (std::size_t g = 0; g < gallery.rows(); ++g) {
      const std::size_t j = nq + g;
      double mn = 0, mx = 0;
      for (std::size_t t = 0; t < N; ++t) {
        mn += std::min(V[i][t], V[j][t]);
        mx += std::max(V[i][t], V[j][t]);
      }
      out[i][g] = lambda * dist[i][j] + (1 - lambda) * (1 - mn / mx);
    }
  return out;
}

/// AP = mean over relevant ranks k of precision@k.
inline double average_precision(const std::vector<int>& flags) {
  double hits = 0, sum = 0;
  for (std::size_t k = 0; k < flags.size(); ++k)
    if (flags[k]) {
      hits += 1;
      sum += hits / static_cast<double>(k + 1);
    }
  return hits > 0 ? sum / hits : 0.0;
}

}  // namespace oracle
