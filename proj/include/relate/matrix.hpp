// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace relate {

using Vector = std::vector<double>;

// Dense row-major f64 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator()(std::size_t r, std::size_t c) {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    assert(r < rows_ && c < cols_);
    return data_[r * cols_ + c];
  }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  Vector col(std::size_t c) const;
  void set_col(std::size_t c, std::span<const double> values);
  Matrix transposed() const;

  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Dense linear algebra on top of the active kernel table.
namespace linalg {

double dot(std::span<const double> a, std::span<const double> b);
double norm(std::span<const double> a);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void mul(std::span<const double> a, std::span<const double> b, std::span<double> out);
// out += a ⊙ b
void mul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out);
void scale(double alpha, std::span<double> x);

// out = A x   (A: m×n, x: n, out: m)
void gemv(const Matrix& a, std::span<const double> x, std::span<double> out);
// out = Aᵀ x  (A: m×n, x: m, out: n)
void gemv_t(const Matrix& a, std::span<const double> x, std::span<double> out);
// A += alpha · u vᵀ
void rank1(Matrix& a, double alpha, std::span<const double> u, std::span<const double> v);

Matrix matmul(const Matrix& a, const Matrix& b);
// Aᵀ B
Matrix matmul_tn(const Matrix& a, const Matrix& b);

double max_abs(std::span<const double> a);
double max_abs_diff(std::span<const double> a, std::span<const double> b);
bool all_finite(std::span<const double> a);

}  // namespace linalg
}  // namespace relate
