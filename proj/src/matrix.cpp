// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/matrix.hpp"

#include <algorithm>
#include <cmath>

#include "relate/errors.hpp"
#include "relate/kernels.hpp"

namespace relate {

Vector Matrix::col(std::size_t c) const {
  Vector out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = data_[r * cols_ + c];
  return out;
}

void Matrix::set_col(std::size_t c, std::span<const double> values) {
  assert(values.size() == rows_);
  for (std::size_t r = 0; r < rows_; ++r) data_[r * cols_ + c] = values[r];
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

namespace linalg {

double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  return kernels::active().dot(a.data(), b.data(), a.size());
}

double norm(std::span<const double> a) {
  return std::sqrt(kernels::active().sum_sq(a.data(), a.size()));
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  kernels::active().axpy(alpha, x.data(), y.data(), x.size());
}

void mul(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  assert(a.size() == b.size() && a.size() == out.size());
  kernels::active().mul(a.data(), b.data(), out.data(), a.size());
}

void mul_acc(std::span<const double> a, std::span<const double> b, std::span<double> out) {
  assert(a.size() == b.size() && a.size() == out.size());
  kernels::active().mul_acc(a.data(), b.data(), out.data(), a.size());
}

void scale(double alpha, std::span<double> x) { kernels::active().scale(alpha, x.data(), x.size()); }

void gemv(const Matrix& a, std::span<const double> x, std::span<double> out) {
  assert(x.size() == a.cols() && out.size() == a.rows());
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < a.rows(); ++r) out[r] = k.dot(a.data() + r * a.cols(), x.data(), a.cols());
}

void gemv_t(const Matrix& a, std::span<const double> x, std::span<double> out) {
  assert(x.size() == a.rows() && out.size() == a.cols());
  const auto& k = kernels::active();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    if (x[r] != 0.0) k.axpy(x[r], a.data() + r * a.cols(), out.data(), a.cols());
  }
}

void rank1(Matrix& a, double alpha, std::span<const double> u, std::span<const double> v) {
  assert(u.size() == a.rows() && v.size() == a.cols());
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const double s = alpha * u[r];
    if (s != 0.0) k.axpy(s, v.data(), a.data() + r * a.cols(), a.cols());
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) throw DimensionError("matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  const auto& k = kernels::active();
  for (std::size_t r = 0; r < a.rows(); ++r) {
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double s = a(r, i);
      if (s != 0.0) k.axpy(s, b.data() + i * b.cols(), out.data() + r * out.cols(), b.cols());
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) throw DimensionError("matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t r = 0; r < a.cols(); ++r) {
      const double s = a(i, r);
      if (s != 0.0) k.axpy(s, b.data() + i * b.cols(), out.data() + r * out.cols(), b.cols());
    }
  }
  return out;
}

double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace linalg
}  // namespace relate
