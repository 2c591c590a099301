// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Parameter representations shared by all gated models: the factored
// three-way interaction (production path) and the dense w_ijk tensor, which
// exists only as a reference oracle at small scale.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "relate/matrix.hpp"

namespace relate {

enum class WarpKind { kCyclicShift, kPermutation, kRotationOrthogonalized, kCustom };

std::string to_string(WarpKind kind);

// Linear map y = L x on vectorized images. L is J × I.
struct WarpMatrix {
  Matrix L;
  WarpKind kind = WarpKind::kCustom;

  std::size_t output_dim() const { return L.rows(); }
  std::size_t input_dim() const { return L.cols(); }
  Vector apply(std::span<const double> x) const;
};

// Three factor matrices (columns are factors) plus single-node biases.
// w_ijk = Σ_f Wx[i,f] Wy[j,f] Wz[k,f].
struct FactoredParams {
  Matrix wx;  // I × F
  Matrix wy;  // J × F
  Matrix wz;  // K × F
  Vector bias_x;  // I (kept in the format; conditioned-on inputs never use it)
  Vector bias_y;  // J
  Vector bias_z;  // K

  static FactoredParams zeros(std::size_t I, std::size_t J, std::size_t K, std::size_t F);

  std::size_t input_dim() const { return wx.rows(); }
  std::size_t output_dim() const { return wy.rows(); }
  std::size_t code_dim() const { return wz.rows(); }
  std::size_t factors() const { return wx.cols(); }

  // Throws DimensionError / NumericalError.
  void validate() const;
  bool operator==(const FactoredParams&) const = default;
};

// Non-owning view so tied models (Wx ≡ Wy) can share one matrix.
struct FactorView {
  const Matrix& wx;
  const Matrix& wy;
  const Matrix& wz;
  const Vector& bias_x;
  const Vector& bias_y;
  const Vector& bias_z;

  static FactorView of(const FactoredParams& p) { return {p.wx, p.wy, p.wz, p.bias_x, p.bias_y, p.bias_z}; }
  std::size_t input_dim() const { return wx.rows(); }
  std::size_t output_dim() const { return wy.rows(); }
  std::size_t code_dim() const { return wz.rows(); }
  std::size_t factors() const { return wx.cols(); }
};

struct MappingCode {
  Vector z;               // σ(pre_activation)
  Vector pre_activation;
};

double logistic(double a);
MappingCode make_code(Vector pre_activation);

// ---- factored forward primitives ----

// Wz (Wxᵀx ⊙ Wyᵀy) + bias_z
Vector code_preactivation(const FactorView& p, std::span<const double> x, std::span<const double> y);
// Wy (Wxᵀx ⊙ Wzᵀz) + bias_y
Vector predict_output(const FactorView& p, std::span<const double> x, std::span<const double> z);
// Wx (Wyᵀy ⊙ Wzᵀz) + bias_x
Vector predict_input(const FactorView& p, std::span<const double> y, std::span<const double> z);
// Σ_f (Wxᵀx)_f (Wyᵀy)_f (Wzᵀz)_f + bias_x·x + bias_y·y + bias_z·z
double factored_energy(const FactorView& p, std::span<const double> x, std::span<const double> y,
                       std::span<const double> z);
// L = Wy diag(Wzᵀz) Wxᵀ, so that predict_output(x, z) = L x + bias_y.
WarpMatrix factored_warp(const FactorView& p, std::span<const double> z);

// ---- filter norm constraint ----

double column_norm(const Matrix& w, std::size_t col);
double mean_column_norm(const Matrix& w);
// Rescales every column to target norm. Zero columns are re-randomized
// (Gaussian, seeded) before rescaling; columns already within 1e-12 of the
// target are left untouched.
void rescale_columns(Matrix& w, double target, std::uint64_t seed);

// ---- dense oracle ----

inline constexpr std::size_t kOracleBudget = 1'000'000;

struct DenseTensor {
  std::size_t I = 0, J = 0, K = 0;
  Vector w;  // index (i * J + j) * K + k
  Vector bias_x, bias_y, bias_z;

  double& at(std::size_t i, std::size_t j, std::size_t k) { return w[(i * J + j) * K + k]; }
  double at(std::size_t i, std::size_t j, std::size_t k) const { return w[(i * J + j) * K + k]; }
};

// Refuses (ConfigError) when I·J·K exceeds kOracleBudget.
DenseTensor expand_factored(const FactorView& p);
DenseTensor expand_factored(const FactoredParams& p);

// Σ_ij w_ijk x_i y_j + bias_z[k]
Vector oracle_encode(const DenseTensor& w, std::span<const double> x, std::span<const double> y);
// Σ_ik w_ijk x_i z_k + bias_y[j]
Vector oracle_decode(const DenseTensor& w, std::span<const double> x, std::span<const double> z);
// Σ_ijk w_ijk x_i y_j z_k + bias terms
double oracle_energy(const DenseTensor& w, std::span<const double> x, std::span<const double> y,
                     std::span<const double> z);
// L[j,i] = Σ_k w_ijk z_k
WarpMatrix warp_from_code(const DenseTensor& w, std::span<const double> z);

// ---- RELW checkpoint ----

// "RELW", u32 version, u64 I, J, K, F, then Wx, Wy, Wz, bias_x, bias_y,
// bias_z as little-endian f64 row-major, then u32 CRC32 of everything before.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void write_checkpoint(const std::string& path, const FactoredParams& params);
FactoredParams read_checkpoint(const std::string& path);
std::string encode_checkpoint(const FactoredParams& params);
FactoredParams decode_checkpoint(const std::string& bytes);

}  // namespace relate
