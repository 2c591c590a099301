// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Orthogonal warps, their shared complex eigenbasis, subspace rotation
// detectors built from it, and diagnostics that compare learned filters with
// the eigenfeatures.

#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relate/datagen.hpp"
#include "relate/tensor_core.hpp"

namespace relate::spectral {

using Complex = std::complex<double>;

// L[j, i] = 1 iff j = (i + s) mod n, so (L x)[j] = x[j − s].
WarpMatrix make_cyclic_shift(std::size_t n, std::size_t s);
// Toroidal shift of an h × w image by sr rows and sc columns; matches
// datagen::shift_image with Shift{dx = sc, dy = sr} and wrap-around.
WarpMatrix make_2d_shift(std::size_t h, std::size_t w, std::size_t sr, std::size_t sc);
// Independent shifts of the top and bottom halves (h even).
WarpMatrix make_split_shift(std::size_t h, std::size_t w, datagen::Shift top, datagen::Shift bottom);

// max |LᵀL − I|
double orthogonality_error(const WarpMatrix& warp);

// A 2-D invariant subspace spanned by a conjugate eigenvector pair (v, v̄),
// stored as unit vectors real = √2·Re v and imag = √2·Im v. Eigenvalues
// that are real (±1) give 1-D subspaces with an empty imag.
struct InvariantSubspace {
  Vector real;
  Vector imag;
  std::size_t column = 0;  // index of v in EigenStructure::U
  bool is_pair() const { return !imag.empty(); }
};

struct EigenStructure {
  Eigen::MatrixXcd U;                       // unitary, columns are eigenvectors
  std::vector<Eigen::VectorXcd> eigenvalues;  // one vector per input warp
  std::vector<InvariantSubspace> subspaces;

  std::size_t dim() const { return static_cast<std::size_t>(U.rows()); }
};

// Simultaneous diagonalization of commuting warps. Degenerate eigenspaces
// are split by diagonalizing a fixed random real combination of the warps.
// Columns are ordered by |eigenvalue angle| under the warps in turn,
// positive angle first within a conjugate pair; ties keep the solver order.
// Throws ConfigError naming the first non-commuting pair.
EigenStructure shared_eigenbasis(const std::vector<WarpMatrix>& warps, std::uint64_t seed = 0x5eed);

// max over warps of |offdiag(U* L U)|
double diagonalization_residual(const EigenStructure& eig, const std::vector<WarpMatrix>& warps);

// Detectors with preferred angle θ on a subspace (v_R, v_I). U holds the
// unrotated filters, V = e^{iθ}·U; both as real/imaginary row pairs, so row
// 2d is the real part and row 2d + 1 the imaginary part of detector d.
struct DetectorBank {
  Matrix U;       // 2D × dim
  Matrix V;       // 2D × dim
  Vector theta;   // D
  Matrix P;       // D × 2D, sums each detector's real and imaginary products
  Matrix W_pool;  // D × M across-subspace pooling (identity by default)
  std::vector<std::size_t> subspace;  // D, index into EigenStructure::subspaces

  std::size_t size() const { return theta.size(); }
};

// One detector per (paired subspace, θ).
DetectorBank make_detector_bank(const EigenStructure& eig, std::span<const double> thetas);
DetectorBank make_detector_bank(std::span<const InvariantSubspace> subspaces, std::span<const double> thetas);

struct DetectorResponse {
  Vector r;  // r^θ per detector
  Vector t;  // W_poolᵀ P (Vᵀx ⊙ Uᵀy)
};

// r^θ = (v_Rᵀy)(v^θ_Rᵀx) + (v_Iᵀy)(v^θ_Iᵀx) = ρx ρy cos(φy − φx − θ).
// Inputs are expected to be contrast-normalized; a warning is issued
// otherwise. No normalization of the projections is applied.
DetectorResponse detector_response(const DetectorBank& bank, std::span<const double> x, std::span<const double> y);

// (v_Rᵀy + v^θ_Rᵀx)² + (v_Iᵀy + v^θ_Iᵀx)² = 2 r^θ + quadratic
struct EnergyDetectorResponse {
  Vector energy;
  Vector cross;      // r^θ
  Vector quadratic;  // four squared projections
};
EnergyDetectorResponse energy_detector_response(const DetectorBank& bank, std::span<const double> x,
                                                std::span<const double> y);

// ---- filter diagnostics ----

struct FilterScore {
  std::size_t best_subspace = 0;
  double fraction = 0.0;    // energy captured by the best invariant subspace
  double quadrature = 0.0;  // |sin| of the angle to the most orthogonal filter sharing the subspace
};

struct DiagnosticsReport {
  std::vector<FilterScore> filters;
  std::vector<std::size_t> histogram;  // fraction counts over 10 equal bins of [0, 1]
  double mean_fraction = 0.0;
  double mean_quadrature = 0.0;
  std::vector<double> eigenvalue_angles;  // first warp, per eigenvector

  std::string to_json() const;
  std::string to_csv() const;
};

// Filters are the columns of an I × F matrix, I = reference dimension.
DiagnosticsReport filter_diagnostics(const Matrix& filters, const EigenStructure& reference);

// ---- DFT helpers used by the diagnostics and tests ----

// |DFT|² of an image, row-major over (u, v) frequencies.
Vector dft_power(std::span<const double> image, datagen::Shape shape);
// Largest share of spectral power held by one frequency together with its
// conjugate (the "2 DFT bins" of a real sinusoid).
double dft_concentration(std::span<const double> image, datagen::Shape shape);

// Phase of the dominant frequency per frame, unwrapped, with a linear fit.
struct PhaseDrift {
  std::size_t freq_u = 0, freq_v = 0;
  std::vector<double> phases;
  double slope = 0.0;      // radians per frame
  double r_squared = 0.0;  // 0 when the phase does not move
};
// filter holds `frames` consecutive frames of the given shape.
PhaseDrift phase_drift(std::span<const double> filter, datagen::Shape frame, std::size_t frames);

}  // namespace relate::spectral
