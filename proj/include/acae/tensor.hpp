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

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace acae {

#ifdef ACAE_USE_FLOAT32
using Real = float;
#else
using Real = double;
#endif

/// Dense row-major matrix. Rows are contiguous, so a row can be handed out
/// as a span.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real(0));
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data);
  Matrix(std::initializer_list<std::initializer_list<Real>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const {
    return data_[r * cols_ + c];
  }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  void fill(Real v);
  bool all_finite() const;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator*=(Real s);

  bool operator==(const Matrix& other) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

using Vector = std::vector<Real>;

/// y = x W^T + b, applied row-wise. weight is (out x in).
struct LinearMap {
  Matrix weight;
  Vector bias;

  std::size_t in_dim() const { return weight.cols(); }
  std::size_t out_dim() const { return weight.rows(); }
};

struct LayerNormParams {
  Vector gain;
  Vector bias;
  Real epsilon = Real(1e-5);

  static LayerNormParams unit(std::size_t dim, Real epsilon = Real(1e-5));
};

/// Per-row normalization state kept for the backward pass.
struct LayerNormCache {
  Matrix normalized;  // (x - mean) / sigma
  Vector inv_sigma;
};

Matrix matmul(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix transposed_matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

Real dot(std::span<const Real> a, std::span<const Real> b);

/// Row-wise softmax with max subtraction.
Matrix softmax_rows(const Matrix& m);

/// Backward of softmax_rows given its output.
/// de = w * (dw - rowsum(dw * w)).
Matrix softmax_rows_backward(const Matrix& weights, const Matrix& d_weights);

/// Population-variance layer normalization with epsilon inside the root.
Vector layer_norm(std::span<const Real> x, const LayerNormParams& p);
Matrix layer_norm_rows(const Matrix& x, const LayerNormParams& p,
                       LayerNormCache* cache = nullptr);

/// Full-Jacobian layer norm backward. Accumulates into d_gain / d_bias when
/// they are non-null.
Matrix layer_norm_rows_backward(const Matrix& d_out, const LayerNormCache& cache,
                                const LayerNormParams& p, Vector* d_gain,
                                Vector* d_bias);

Matrix linear(const Matrix& x, const LinearMap& map);

/// Returns dx; accumulates dW and db into \p grad (same shapes as \p map).
Matrix linear_backward(const Matrix& x, const Matrix& d_out, const LinearMap& map,
                       LinearMap* grad);

Matrix relu(const Matrix& x);
Matrix relu_backward(const Matrix& pre_activation, const Matrix& d_out);

/// Rows scaled to unit L2 norm. Zero rows stay zero.
Matrix l2_normalize_rows(const Matrix& x);
Matrix l2_normalize_rows_backward(const Matrix& x, const Matrix& d_out);

/// Copy of columns [begin, begin + count).
Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t count);
void set_column_slice(Matrix& dst, std::size_t begin, const Matrix& src);
void add_column_slice(Matrix& dst, std::size_t begin, const Matrix& src);

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);
Matrix vstack(const Matrix& top, const Matrix& bottom);

}  // namespace acae
