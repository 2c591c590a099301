// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/tensor_core.hpp"

#include <zlib.h>

#include <cmath>
#include <sstream>

#include "binio.hpp"
#include "relate/errors.hpp"
#include "relate/random.hpp"

namespace relate {

std::string to_string(WarpKind kind) {
  switch (kind) {
    case WarpKind::kCyclicShift: return "cyclic-shift";
    case WarpKind::kPermutation: return "permutation";
    case WarpKind::kRotationOrthogonalized: return "rotation-orthogonalized";
    case WarpKind::kCustom: return "custom";
  }
  return "custom";
}

Vector WarpMatrix::apply(std::span<const double> x) const {
  if (x.size() != input_dim()) throw DimensionError("warp: input dimension mismatch");
  Vector y(output_dim());
  linalg::gemv(L, x, y);
  return y;
}

FactoredParams FactoredParams::zeros(std::size_t I, std::size_t J, std::size_t K, std::size_t F) {
  FactoredParams p;
  p.wx = Matrix(I, F);
  p.wy = Matrix(J, F);
  p.wz = Matrix(K, F);
  p.bias_x.assign(I, 0.0);
  p.bias_y.assign(J, 0.0);
  p.bias_z.assign(K, 0.0);
  return p;
}

void FactoredParams::validate() const {
  const std::size_t F = wx.cols();
  if (wy.cols() != F || wz.cols() != F) throw DimensionError("factored params: factor counts differ");
  if (bias_x.size() != wx.rows() || bias_y.size() != wy.rows() || bias_z.size() != wz.rows())
    throw DimensionError("factored params: bias length does not match factor matrix");
  for (const Matrix* m : {&wx, &wy, &wz})
    if (!linalg::all_finite(m->storage())) throw NumericalError("factored params: non-finite weight");
  for (const Vector* b : {&bias_x, &bias_y, &bias_z})
    if (!linalg::all_finite(*b)) throw NumericalError("factored params: non-finite bias");
}

double logistic(double a) {
  if (a >= 0) return 1.0 / (1.0 + std::exp(-a));
  const double e = std::exp(a);
  return e / (1.0 + e);
}

MappingCode make_code(Vector pre_activation) {
  MappingCode code;
  code.z.resize(pre_activation.size());
  for (std::size_t k = 0; k < pre_activation.size(); ++k) code.z[k] = logistic(pre_activation[k]);
  code.pre_activation = std::move(pre_activation);
  return code;
}

namespace {

void check(bool ok, const char* what) {
  if (!ok) throw DimensionError(what);
}

}  // namespace

Vector code_preactivation(const FactorView& p, std::span<const double> x, std::span<const double> y) {
  check(x.size() == p.input_dim() && y.size() == p.output_dim(), "encode: input dimension mismatch");
  const std::size_t F = p.factors();
  Vector fx(F), fy(F);
  linalg::gemv_t(p.wx, x, fx);
  linalg::gemv_t(p.wy, y, fy);
  linalg::mul(fx, fy, fx);
  Vector a(p.code_dim());
  linalg::gemv(p.wz, fx, a);
  for (std::size_t k = 0; k < a.size(); ++k) a[k] += p.bias_z[k];
  return a;
}

Vector predict_output(const FactorView& p, std::span<const double> x, std::span<const double> z) {
  check(x.size() == p.input_dim() && z.size() == p.code_dim(), "decode: input dimension mismatch");
  const std::size_t F = p.factors();
  Vector fx(F), fz(F);
  linalg::gemv_t(p.wx, x, fx);
  linalg::gemv_t(p.wz, z, fz);
  linalg::mul(fx, fz, fx);
  Vector y(p.output_dim());
  linalg::gemv(p.wy, fx, y);
  for (std::size_t j = 0; j < y.size(); ++j) y[j] += p.bias_y[j];
  return y;
}

Vector predict_input(const FactorView& p, std::span<const double> y, std::span<const double> z) {
  check(y.size() == p.output_dim() && z.size() == p.code_dim(), "decode: input dimension mismatch");
  const std::size_t F = p.factors();
  Vector fy(F), fz(F);
  linalg::gemv_t(p.wy, y, fy);
  linalg::gemv_t(p.wz, z, fz);
  linalg::mul(fy, fz, fy);
  Vector x(p.input_dim());
  linalg::gemv(p.wx, fy, x);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += p.bias_x[i];
  return x;
}

double factored_energy(const FactorView& p, std::span<const double> x, std::span<const double> y,
                       std::span<const double> z) {
  check(x.size() == p.input_dim() && y.size() == p.output_dim() && z.size() == p.code_dim(),
        "energy: input dimension mismatch");
  const std::size_t F = p.factors();
  Vector fx(F), fy(F), fz(F);
  linalg::gemv_t(p.wx, x, fx);
  linalg::gemv_t(p.wy, y, fy);
  linalg::gemv_t(p.wz, z, fz);
  linalg::mul(fx, fy, fx);
  return linalg::dot(fx, fz) + linalg::dot(p.bias_x, x) + linalg::dot(p.bias_y, y) + linalg::dot(p.bias_z, z);
}

WarpMatrix factored_warp(const FactorView& p, std::span<const double> z) {
  check(z.size() == p.code_dim(), "warp: code dimension mismatch");
  Vector fz(p.factors());
  linalg::gemv_t(p.wz, z, fz);
  // L[j,i] = Σ_f Wy[j,f] fz_f Wx[i,f]
  Matrix scaled_y = p.wy;
  for (std::size_t j = 0; j < scaled_y.rows(); ++j) linalg::mul(scaled_y.row(j), fz, scaled_y.row(j));
  WarpMatrix warp;
  warp.L = Matrix(p.output_dim(), p.input_dim());
  for (std::size_t j = 0; j < warp.L.rows(); ++j)
    for (std::size_t i = 0; i < warp.L.cols(); ++i) warp.L(j, i) = linalg::dot(scaled_y.row(j), p.wx.row(i));
  return warp;
}

double column_norm(const Matrix& w, std::size_t col) {
  double s = 0.0;
  for (std::size_t r = 0; r < w.rows(); ++r) s += w(r, col) * w(r, col);
  return std::sqrt(s);
}

double mean_column_norm(const Matrix& w) {
  if (w.cols() == 0) return 0.0;
  double s = 0.0;
  for (std::size_t c = 0; c < w.cols(); ++c) s += column_norm(w, c);
  return s / static_cast<double>(w.cols());
}

void rescale_columns(Matrix& w, double target, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 0.01);
  for (std::size_t c = 0; c < w.cols(); ++c) {
    double n = column_norm(w, c);
    if (n <= 1e-300) {
      for (std::size_t r = 0; r < w.rows(); ++r) w(r, c) = gauss(rng);
      n = column_norm(w, c);
    }
    const double s = target / n;
    if (std::abs(s - 1.0) <= 1e-12) continue;
    for (std::size_t r = 0; r < w.rows(); ++r) w(r, c) *= s;
  }
}

DenseTensor expand_factored(const FactorView& p) {
  const std::size_t I = p.input_dim(), J = p.output_dim(), K = p.code_dim(), F = p.factors();
  if (I * J * K > kOracleBudget) {
    std::ostringstream msg;
    msg << "expand_factored: " << I << "x" << J << "x" << K << " exceeds the oracle budget of " << kOracleBudget;
    throw ConfigError(msg.str());
  }
  DenseTensor t;
  t.I = I;
  t.J = J;
  t.K = K;
  t.w.assign(I * J * K, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t k = 0; k < K; ++k) {
        double s = 0.0;
        for (std::size_t f = 0; f < F; ++f) s += p.wx(i, f) * p.wy(j, f) * p.wz(k, f);
        t.at(i, j, k) = s;
      }
  t.bias_x = p.bias_x;
  t.bias_y = p.bias_y;
  t.bias_z = p.bias_z;
  return t;
}

DenseTensor expand_factored(const FactoredParams& p) { return expand_factored(FactorView::of(p)); }

Vector oracle_encode(const DenseTensor& w, std::span<const double> x, std::span<const double> y) {
  check(x.size() == w.I && y.size() == w.J, "oracle_encode: dimension mismatch");
  Vector a(w.bias_z.begin(), w.bias_z.end());
  if (a.empty()) a.assign(w.K, 0.0);
  for (std::size_t k = 0; k < w.K; ++k) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.I; ++i)
      for (std::size_t j = 0; j < w.J; ++j) s += w.at(i, j, k) * x[i] * y[j];
    a[k] += s;
  }
  return a;
}

Vector oracle_decode(const DenseTensor& w, std::span<const double> x, std::span<const double> z) {
  check(x.size() == w.I && z.size() == w.K, "oracle_decode: dimension mismatch");
  Vector y(w.bias_y.begin(), w.bias_y.end());
  if (y.empty()) y.assign(w.J, 0.0);
  for (std::size_t j = 0; j < w.J; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < w.I; ++i)
      for (std::size_t k = 0; k < w.K; ++k) s += w.at(i, j, k) * x[i] * z[k];
    y[j] += s;
  }
  return y;
}

double oracle_energy(const DenseTensor& w, std::span<const double> x, std::span<const double> y,
                     std::span<const double> z) {
  check(x.size() == w.I && y.size() == w.J && z.size() == w.K, "oracle_energy: dimension mismatch");
  double e = 0.0;
  for (std::size_t i = 0; i < w.I; ++i)
    for (std::size_t j = 0; j < w.J; ++j)
      for (std::size_t k = 0; k < w.K; ++k) e += w.at(i, j, k) * x[i] * y[j] * z[k];
  for (std::size_t i = 0; i < w.bias_x.size(); ++i) e += w.bias_x[i] * x[i];
  for (std::size_t j = 0; j < w.bias_y.size(); ++j) e += w.bias_y[j] * y[j];
  for (std::size_t k = 0; k < w.bias_z.size(); ++k) e += w.bias_z[k] * z[k];
  return e;
}

WarpMatrix warp_from_code(const DenseTensor& w, std::span<const double> z) {
  check(z.size() == w.K, "warp_from_code: code dimension mismatch");
  WarpMatrix warp;
  warp.L = Matrix(w.J, w.I);
  for (std::size_t i = 0; i < w.I; ++i)
    for (std::size_t j = 0; j < w.J; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < w.K; ++k) s += w.at(i, j, k) * z[k];
      warp.L(j, i) = s;
    }
  return warp;
}

std::string encode_checkpoint(const FactoredParams& p) {
  p.validate();
  binio::Writer w;
  w.magic("RELW");
  w.u32(kCheckpointVersion);
  w.u64(p.input_dim());
  w.u64(p.output_dim());
  w.u64(p.code_dim());
  w.u64(p.factors());
  w.f64s(p.wx.storage());
  w.f64s(p.wy.storage());
  w.f64s(p.wz.storage());
  w.f64s(p.bias_x);
  w.f64s(p.bias_y);
  w.f64s(p.bias_z);
  const auto& body = w.str();
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size())));
  w.u32(crc);
  return w.str();
}

FactoredParams decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 + 4 + 32 + 4) throw DataError("checkpoint: truncated");
  const std::size_t body = bytes.size() - 4;
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(body)));
  binio::Reader r(bytes, "checkpoint");
  r.expect_magic("RELW");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint64_t I = r.u64(), J = r.u64(), K = r.u64(), F = r.u64();
  const std::uint64_t expected = 4 + 4 + 32 + 8 * (F * (I + J + K) + I + J + K) + 4;
  if (expected != bytes.size()) throw DataError("checkpoint: size does not match header dimensions");
  FactoredParams p = FactoredParams::zeros(I, J, K, F);
  r.f64s(p.wx.storage());
  r.f64s(p.wy.storage());
  r.f64s(p.wz.storage());
  r.f64s(p.bias_x);
  r.f64s(p.bias_y);
  r.f64s(p.bias_z);
  if (r.u32() != crc) throw DataError("checkpoint: CRC32 mismatch");
  p.validate();
  return p;
}

void write_checkpoint(const std::string& path, const FactoredParams& params) {
  binio::write_file(path, encode_checkpoint(params));
}

FactoredParams read_checkpoint(const std::string& path) {
  try {
    return decode_checkpoint(binio::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace relate
