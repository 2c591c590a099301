// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Energy model over a concatenated image pair: linear filters, squaring,
// non-negative pooling. Also the algebra that splits an energy response into
// a gated cross term plus quadratic terms, and ISA-style training.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "relate/datagen.hpp"
#include "relate/tensor_core.hpp"

namespace relate::isa {

struct EnergyModel {
  Matrix filters;  // (I + J) × F; rows [0, I) act on x, rows [I, I + J) on y
  Matrix pooling;  // K × F, entries >= 0
  Vector bias_z;   // K
  std::size_t input_dim = 0;

  std::size_t output_dim() const { return filters.rows() - input_dim; }
  std::size_t factors() const { return filters.cols(); }
  std::size_t code_dim() const { return pooling.rows(); }

  // Throws DimensionError, ConfigError (negative pooling) or NumericalError.
  void validate() const;
};

// Block-diagonal pooling: unit k sums factors [k·size, (k+1)·size).
Matrix block_pooling(std::size_t factors, std::size_t subspace_size);

// Gaussian filters, symmetrically orthonormalized, block pooling.
EnergyModel init_energy_model(std::size_t input_dim, std::size_t output_dim, std::size_t factors,
                              std::size_t subspace_size, std::uint64_t seed);

// z_k = Σ_f pooling[k,f] (w^xᵀx + w^yᵀy)_f² + bias_z[k]
Vector energy_response(const EnergyModel& model, std::span<const double> x, std::span<const double> y);

// Per unit k, with a = w^xᵀx and b = w^yᵀy:
//   cross[k]     = Σ_f pooling[k,f] a_f b_f
//   quadratic[k] = Σ_f pooling[k,f] (a_f² + b_f²)
// so that energy_response = 2·cross + quadratic + bias_z.
struct EnergyExpansion {
  Vector cross;
  Vector quadratic;
};
EnergyExpansion expand_energy(const EnergyModel& model, std::span<const double> x, std::span<const double> y);

// Same filters viewed as a gated model (Wx, Wy = filter blocks, Wz =
// pooling). Its pre-activation minus bias_z equals the cross term.
FactoredParams to_factored(const EnergyModel& model);
EnergyModel from_factored(const FactoredParams& params);

void write_isa_checkpoint(const std::string& path, const EnergyModel& model);
EnergyModel read_isa_checkpoint(const std::string& path);

struct IsaConfig {
  double learning_rate = 0.05;
  double momentum = 0.0;
  std::size_t epochs = 50;
  std::size_t batch_size = 100;
  bool learn_pooling = false;
  double epsilon = 1e-8;  // smoothing inside √(ε + z)
  std::uint64_t seed = 0;

  void validate() const;
};

// W ← W (WᵀW)^{-1/2}. Requires F <= rows and full column rank.
void symmetric_orthonormalize(Matrix& w);

// Mean over pairs of Σ_k √(ε + z_k).
double isa_objective(const EnergyModel& model, const datagen::PairBatch& batch, double epsilon);

// True when the sample covariance of the concatenated [x; y] rows is close
// to the identity.
bool looks_whitened(const datagen::PairBatch& batch);

// PCA whitening of the concatenation [x; y]. Per-image whitening leaves the
// x/y correlation in place, which the objective would then exploit instead
// of the relation. Whitened components [0, split) become the model's x,
// the rest its y.
struct PairWhitening {
  datagen::WhiteningTransform transform;  // over I + J concatenated pixels
  std::size_t pixel_split = 0;            // I
  std::size_t split = 0;
};
// A movie batch (y = x, frames concatenated) as a pair: the leading
// frames / 2 frames become x, the rest y. The energy model's stacked filter
// then spans the whole movie.
datagen::PairBatch movie_halves(const datagen::PairBatch& movies, std::size_t frames);

PairWhitening fit_pair_whitening(const datagen::PairBatch& batch, double retained_variance = 1.0);
datagen::PairBatch apply_pair_whitening(const datagen::PairBatch& batch, const PairWhitening& w);
// Filters as pixel-space receptive fields, (I + J) × F with the x frame in
// rows [0, I).
Matrix pixel_filters(const EnergyModel& model, const PairWhitening& w);

struct IsaResult {
  std::vector<double> epoch_objective;
};

// Gradient descent on isa_objective; filters are re-orthonormalized after
// every step. Warns when the data does not look whitened.
IsaResult train_isa(EnergyModel& model, const datagen::PairBatch& batch, const IsaConfig& config);

}  // namespace relate::isa
