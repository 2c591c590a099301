// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Factored gated autoencoder: filter-matching encoder, linear decoder in both
// directions, symmetric reconstruction objective and SGD training with the
// running-average filter norm constraint.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "relate/datagen.hpp"
#include "relate/tensor_core.hpp"

namespace relate::gae {

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t epochs = 10;
  std::size_t batch_size = 100;
  double sparsity_weight = 0.0;   // λ on Σ_k z_k
  double corruption_level = 0.0;  // fraction of input pixels zero-masked
  bool norm_constraint = true;
  double norm_decay = 0.95;
  bool one_sided = false;  // predict y from x only
  std::uint64_t seed = 0;

  void validate() const;
};

class GaeModel {
 public:
  GaeModel() = default;
  // Gaussian init: std 0.01 for Wx/Wy, 0.1 for Wz, zero biases.
  static GaeModel init(std::size_t input_dim, std::size_t output_dim, std::size_t code_dim, std::size_t factors,
                       bool tied, std::uint64_t seed);
  // Tied models require params.wx == params.wy.
  static GaeModel from_params(FactoredParams params, bool tied);

  FactorView view() const;
  // Copy with Wy materialized (checkpoints, oracles).
  FactoredParams to_params() const;

  bool tied() const { return tied_; }
  std::size_t input_dim() const { return params_.wx.rows(); }
  std::size_t output_dim() const { return tied_ ? params_.wx.rows() : params_.wy.rows(); }
  std::size_t code_dim() const { return params_.wz.rows(); }
  std::size_t factors() const { return params_.wx.cols(); }

  // Mutable parameter access for the training driver. For tied models
  // wy() is the same storage as wx().
  Matrix& wx() { return params_.wx; }
  Matrix& wy() { return tied_ ? params_.wx : params_.wy; }
  Matrix& wz() { return params_.wz; }
  Vector& bias_x() { return params_.bias_x; }
  Vector& bias_y() { return params_.bias_y; }
  Vector& bias_z() { return params_.bias_z; }
  const Matrix& wx() const { return params_.wx; }
  const Matrix& wy() const { return tied_ ? params_.wx : params_.wy; }
  const Matrix& wz() const { return params_.wz; }

  double norm_running_avg() const { return norm_running_avg_; }
  void set_norm_running_avg(double v) { norm_running_avg_ = v; }
  // Mean Euclidean norm over the columns of Wx and (untied) Wy.
  double mean_filter_norm() const;

 private:
  FactoredParams params_;  // wy left empty when tied
  bool tied_ = false;
  double norm_running_avg_ = 1.0;
};

MappingCode encode(const GaeModel& model, std::span<const double> x, std::span<const double> y);
// Wy (Wxᵀx ⊙ Wzᵀz) + bias_y; z may be a raw (unsquashed) code.
Vector decode(const GaeModel& model, std::span<const double> x, std::span<const double> z);
// Roles of Wx and Wy swapped: reconstructs x from y.
Vector decode_reverse(const GaeModel& model, std::span<const double> y, std::span<const double> z);

// Mean over pairs of ‖y − ŷ‖² + ‖x − x̂‖² + λ Σ_k z_k (second term dropped
// when one_sided). With corruption the encoder and decoders see masked
// inputs; masks are drawn from config.seed and the pair index.
double loss(const GaeModel& model, const datagen::PairBatch& batch, const TrainConfig& config);

// Parameter-shaped gradient. For tied models wy is empty and both
// directions are accumulated into wx.
struct Gradients {
  Matrix wx, wy, wz;
  Vector bias_x, bias_y, bias_z;

  double squared_norm() const;
};

Gradients gradients(const GaeModel& model, const datagen::PairBatch& batch, const TrainConfig& config);

struct TraceRecord {
  std::size_t epoch = 0;
  std::size_t batch = 0;
  double loss = 0.0;
  double grad_norm = 0.0;
};

struct TrainCallbacks {
  std::function<void(const TraceRecord&)> on_batch;
  // Called with the full-data loss after every epoch.
  std::function<void(std::size_t epoch, double loss)> on_epoch;
};

struct TrainResult {
  std::vector<TraceRecord> trace;
  std::vector<double> epoch_losses;  // full-data loss after each epoch
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Minibatch SGD with momentum. Epoch e shuffles with derive_seed(seed, e),
// so a resumed run with first_epoch = e continues the same schedule.
TrainResult train(GaeModel& model, const datagen::PairBatch& batch, const TrainConfig& config,
                  const TrainCallbacks& callbacks = {}, std::size_t first_epoch = 0);

// Rescales every column of Wx and Wy to the running-average norm after
// folding the current mean norm into the average. Zero columns are
// re-randomized first.
void apply_norm_constraint(GaeModel& model, double decay, std::uint64_t seed);

// Central finite differences over every parameter (or a deterministic
// sample of at most max_entries per block when non-zero).
struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
};
GradCheckResult check_gradients(const GaeModel& model, const datagen::PairBatch& batch, const TrainConfig& config,
                                double step = 1e-5, std::size_t max_entries = 0);

}  // namespace relate::gae
