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

#include "acae/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "acae/error.hpp"

namespace acae {

namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, Real fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  ACAE_REQUIRE(data_.size() == rows_ * cols_, ErrorCode::kDimensionMismatch,
          "matrix data length does not match " + std::to_string(rows) + "x" +
              std::to_string(cols));
}

Matrix::Matrix(std::initializer_list<std::initializer_list<Real>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    ACAE_REQUIRE(r.size() == cols_, ErrorCode::kDimensionMismatch,
            "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1;
  return m;
}

void Matrix::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

bool Matrix::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](Real v) { return std::isfinite(v); });
}

Matrix& Matrix::operator+=(const Matrix& other) {
  ACAE_REQUIRE(rows_ == other.rows_ && cols_ == other.cols_,
          ErrorCode::kDimensionMismatch,
          "cannot add " + shape(other) + " to " + shape(*this));
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(Real s) {
  for (auto& v : data_) v *= s;
  return *this;
}

LayerNormParams LayerNormParams::unit(std::size_t dim, Real epsilon) {
  return {Vector(dim, Real(1)), Vector(dim, Real(0)), epsilon};
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  ACAE_REQUIRE(a.cols() == b.rows(), ErrorCode::kDimensionMismatch,
          "matmul " + shape(a) + " by " + shape(b));
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real aik = a(i, k);
      if (aik == Real(0)) continue;
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  ACAE_REQUIRE(a.cols() == b.cols(), ErrorCode::kDimensionMismatch,
          "matmul_transposed " + shape(a) + " by " + shape(b) + "^T");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

Matrix transposed_matmul(const Matrix& a, const Matrix& b) {
  ACAE_REQUIRE(a.rows() == b.rows(), ErrorCode::kDimensionMismatch,
          "transposed_matmul " + shape(a) + "^T by " + shape(b));
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto a_row = a.row(k);
    auto b_row = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const Real aki = a_row[i];
      if (aki == Real(0)) continue;
      auto out_row = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aki * b_row[j];
    }
  }
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols(), m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
  return out;
}

Real dot(std::span<const Real> a, std::span<const Real> b) {
  ACAE_REQUIRE(a.size() == b.size(), ErrorCode::kDimensionMismatch,
          "dot of lengths " + std::to_string(a.size()) + " and " +
              std::to_string(b.size()));
  // Four independent partial sums; fixed order keeps results reproducible.
  Real s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  const std::size_t n = a.size();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

Matrix softmax_rows(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i) {
    auto in = m.row(i);
    auto o = out.row(i);
    if (in.empty()) continue;
    const Real mx = *std::max_element(in.begin(), in.end());
    Real total = 0;
    for (std::size_t j = 0; j < in.size(); ++j) {
      o[j] = std::exp(in[j] - mx);
      total += o[j];
    }
    for (auto& v : o) v /= total;
  }
  return out;
}

Matrix softmax_rows_backward(const Matrix& weights, const Matrix& d_weights) {
  ACAE_REQUIRE(weights.rows() == d_weights.rows() && weights.cols() == d_weights.cols(),
          ErrorCode::kDimensionMismatch, "softmax backward shape mismatch");
  Matrix d_logits(weights.rows(), weights.cols());
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    const Real inner = dot(weights.row(i), d_weights.row(i));
    for (std::size_t j = 0; j < weights.cols(); ++j)
      d_logits(i, j) = weights(i, j) * (d_weights(i, j) - inner);
  }
  return d_logits;
}

Vector layer_norm(std::span<const Real> x, const LayerNormParams& p) {
  Matrix m(1, x.size(), Vector(x.begin(), x.end()));
  auto out = layer_norm_rows(m, p);
  return Vector(out.values().begin(), out.values().end());
}

Matrix layer_norm_rows(const Matrix& x, const LayerNormParams& p,
                       LayerNormCache* cache) {
  const std::size_t d = x.cols();
  ACAE_REQUIRE(p.gain.size() == d && p.bias.size() == d, ErrorCode::kDimensionMismatch,
          "layer norm params of length " + std::to_string(p.gain.size()) +
              " applied to width " + std::to_string(d));
  ACAE_REQUIRE(p.epsilon > 0, ErrorCode::kInvalidArgument,
          "layer norm epsilon must be positive");
  Matrix out(x.rows(), d);
  if (cache != nullptr) {
    cache->normalized = Matrix(x.rows(), d);
    cache->inv_sigma.assign(x.rows(), 0);
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    Real mean = 0;
    for (Real v : row) mean += v;
    mean /= Real(d);
    Real var = 0;
    for (Real v : row) var += (v - mean) * (v - mean);
    var /= Real(d);
    const Real inv_sigma = Real(1) / std::sqrt(var + p.epsilon);
    for (std::size_t j = 0; j < d; ++j) {
      const Real xhat = (row[j] - mean) * inv_sigma;
      out(i, j) = p.gain[j] * xhat + p.bias[j];
      if (cache != nullptr) cache->normalized(i, j) = xhat;
    }
    if (cache != nullptr) cache->inv_sigma[i] = inv_sigma;
  }
  return out;
}

Matrix layer_norm_rows_backward(const Matrix& d_out, const LayerNormCache& cache,
                                const LayerNormParams& p, Vector* d_gain,
                                Vector* d_bias) {
  const std::size_t d = d_out.cols();
  Matrix dx(d_out.rows(), d);
  Vector dxhat(d);
  for (std::size_t i = 0; i < d_out.rows(); ++i) {
    Real mean_dxhat = 0;
    Real mean_dxhat_xhat = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const Real g = d_out(i, j);
      const Real xhat = cache.normalized(i, j);
      if (d_gain != nullptr) (*d_gain)[j] += g * xhat;
      if (d_bias != nullptr) (*d_bias)[j] += g;
      dxhat[j] = g * p.gain[j];
      mean_dxhat += dxhat[j];
      mean_dxhat_xhat += dxhat[j] * xhat;
    }
    mean_dxhat /= Real(d);
    mean_dxhat_xhat /= Real(d);
    for (std::size_t j = 0; j < d; ++j) {
      dx(i, j) = cache.inv_sigma[i] *
                 (dxhat[j] - mean_dxhat - cache.normalized(i, j) * mean_dxhat_xhat);
    }
  }
  return dx;
}

Matrix linear(const Matrix& x, const LinearMap& map) {
  Matrix out = matmul_transposed(x, map.weight);
  if (!map.bias.empty()) {
    ACAE_REQUIRE(map.bias.size() == map.out_dim(), ErrorCode::kDimensionMismatch,
            "linear bias length mismatch");
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += map.bias[j];
  }
  return out;
}

Matrix linear_backward(const Matrix& x, const Matrix& d_out, const LinearMap& map,
                       LinearMap* grad) {
  if (grad != nullptr) {
    grad->weight += transposed_matmul(d_out, x);
    if (!grad->bias.empty()) {
      for (std::size_t i = 0; i < d_out.rows(); ++i)
        for (std::size_t j = 0; j < d_out.cols(); ++j) grad->bias[j] += d_out(i, j);
    }
  }
  return matmul(d_out, map.weight);
}

Matrix relu(const Matrix& x) {
  Matrix out = x;
  for (auto& v : out.values()) v = std::max(v, Real(0));
  return out;
}

Matrix relu_backward(const Matrix& pre_activation, const Matrix& d_out) {
  Matrix dx = d_out;
  auto pre = pre_activation.values();
  auto g = dx.values();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(pre[i] > Real(0))) g[i] = 0;
  return dx;
}

Matrix l2_normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const Real norm = std::sqrt(dot(row, row));
    if (norm > Real(0))
      for (auto& v : row) v /= norm;
  }
  return out;
}

Matrix l2_normalize_rows_backward(const Matrix& x, const Matrix& d_out) {
  Matrix dx(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto row = x.row(i);
    const Real norm = std::sqrt(dot(row, row));
    if (!(norm > Real(0))) continue;
    auto g = d_out.row(i);
    Real proj = 0;
    for (std::size_t j = 0; j < row.size(); ++j) proj += row[j] * g[j];
    proj /= norm * norm;
    for (std::size_t j = 0; j < row.size(); ++j)
      dx(i, j) = (g[j] - row[j] * proj) / norm;
  }
  return dx;
}

Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t count) {
  ACAE_REQUIRE(begin + count <= m.cols(), ErrorCode::kDimensionMismatch,
          "column slice out of range");
  Matrix out(m.rows(), count);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = m(i, begin + j);
  return out;
}

void set_column_slice(Matrix& dst, std::size_t begin, const Matrix& src) {
  ACAE_REQUIRE(dst.rows() == src.rows() && begin + src.cols() <= dst.cols(),
          ErrorCode::kDimensionMismatch, "column slice assignment out of range");
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) = src(i, j);
}

void add_column_slice(Matrix& dst, std::size_t begin, const Matrix& src) {
  ACAE_REQUIRE(dst.rows() == src.rows() && begin + src.cols() <= dst.cols(),
          ErrorCode::kDimensionMismatch, "column slice accumulation out of range");
  for (std::size_t i = 0; i < src.rows(); ++i)
    for (std::size_t j = 0; j < src.cols(); ++j) dst(i, begin + j) += src(i, j);
}

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ACAE_REQUIRE(rows[i] < m.rows(), ErrorCode::kDimensionMismatch, "row index out of range");
    std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  }
  return out;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  if (top.rows() == 0) return bottom;
  if (bottom.rows() == 0) return top;
  ACAE_REQUIRE(top.cols() == bottom.cols(), ErrorCode::kDimensionMismatch,
          "vstack width mismatch");
  Matrix out(top.rows() + bottom.rows(), top.cols());
  std::copy(top.values().begin(), top.values().end(), out.values().begin());
  std::copy(bottom.values().begin(), bottom.values().end(),
            out.values().begin() + static_cast<std::ptrdiff_t>(top.size()));
  return out;
}

}  // namespace acae
