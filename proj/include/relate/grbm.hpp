// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Factored gated Boltzmann machine over binary units, conditioned on x:
// p(y, z | x) ∝ exp(E(x, y, z)). Trained with single-step contrastive
// divergence; x is clamped throughout the Gibbs chain.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "relate/datagen.hpp"
#include "relate/random.hpp"
#include "relate/tensor_core.hpp"

namespace relate::grbm {

struct GbmModel {
  FactoredParams params;
  double norm_running_avg = 1.0;

  // Gaussian init: std 0.01 for Wx/Wy, 0.1 for Wz, zero biases.
  static GbmModel init(std::size_t input_dim, std::size_t output_dim, std::size_t code_dim, std::size_t factors,
                       std::uint64_t seed);
  FactorView view() const { return FactorView::of(params); }
};

// Σ_f (Wxᵀx)_f (Wyᵀy)_f (Wzᵀz)_f + bias terms. Larger is more probable.
double energy(const GbmModel& model, std::span<const double> x, std::span<const double> y,
              std::span<const double> z);

// σ(Wz (Wxᵀx ⊙ Wyᵀy) + bias_z)
Vector p_z_given_xy(const GbmModel& model, std::span<const double> x, std::span<const double> y);
// σ(Wy (Wxᵀx ⊙ Wzᵀz) + bias_y)
Vector p_y_given_xz(const GbmModel& model, std::span<const double> x, std::span<const double> z);

Vector sample_bernoulli(std::span<const double> means, Rng& rng);

struct CdConfig {
  double learning_rate = 0.05;
  double momentum = 0.5;
  std::size_t epochs = 10;
  std::size_t batch_size = 100;
  bool norm_constraint = true;
  double norm_decay = 0.95;
  std::uint64_t seed = 0;

  void validate() const;
};

// Positive minus negative sufficient statistics (the CD-1 ascent direction
// for log p(y, z | x)), parameter-shaped.
struct CdStatistics {
  Matrix wx, wy, wz;
  Vector bias_y, bias_z;
  double reconstruction_error = 0.0;  // Σ ‖y − E[y₁]‖²

  static CdStatistics zeros(const GbmModel& model);
  void add(const CdStatistics& other);
  void scale(double s);
};

// One chain step for a single pair:
//   z₀ ~ p(z | x, y), y₁ ~ p(y | x, z₀), then statistics at
//   (x, y, p(z|x,y)) minus (x, p(y|x,z₀), p(z|x,y₁)).
CdStatistics cd1_statistics(const GbmModel& model, std::span<const double> x, std::span<const double> y, Rng& rng);

// Batch mean of cd1_statistics; pair a draws from derive_seed(seed, a).
CdStatistics cd1_batch_statistics(const GbmModel& model, const datagen::PairBatch& batch, std::uint64_t seed);

// Momentum state carried across updates.
struct CdVelocity {
  Matrix wx, wy, wz;
  Vector bias_y, bias_z;
};

// Applies one CD-1 update from a minibatch and returns its mean
// reconstruction error. Throws NumericalError on non-finite parameters.
double cd1_update(GbmModel& model, const datagen::PairBatch& minibatch, const CdConfig& config,
                  CdVelocity& velocity, std::uint64_t step_seed);

struct CdResult {
  std::vector<double> epoch_reconstruction_error;  // mean over pairs, per epoch
};

// Rejects non-binary batches (DataError).
CdResult train(GbmModel& model, const datagen::PairBatch& batch, const CdConfig& config);

}  // namespace relate::grbm
