// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/grbm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "relate/errors.hpp"
#include "relate/parallel.hpp"

namespace relate::grbm {

using datagen::PairBatch;

GbmModel GbmModel::init(std::size_t I, std::size_t J, std::size_t K, std::size_t F, std::uint64_t seed) {
  if (I == 0 || J == 0 || K == 0 || F == 0) throw ConfigError("model dimensions must be positive");
  GbmModel m;
  m.params = FactoredParams::zeros(I, J, K, F);
  Rng rng(seed);
  fill_gaussian(m.params.wx, 0.01, rng);
  fill_gaussian(m.params.wy, 0.01, rng);
  fill_gaussian(m.params.wz, 0.1, rng);
  m.norm_running_avg = 0.5 * (mean_column_norm(m.params.wx) + mean_column_norm(m.params.wy));
  return m;
}

double energy(const GbmModel& model, std::span<const double> x, std::span<const double> y,
              std::span<const double> z) {
  return factored_energy(model.view(), x, y, z);
}

Vector p_z_given_xy(const GbmModel& model, std::span<const double> x, std::span<const double> y) {
  return make_code(code_preactivation(model.view(), x, y)).z;
}

Vector p_y_given_xz(const GbmModel& model, std::span<const double> x, std::span<const double> z) {
  Vector a = predict_output(model.view(), x, z);
  for (double& v : a) v = logistic(v);
  return a;
}

Vector sample_bernoulli(std::span<const double> means, Rng& rng) {
  Vector out(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) out[i] = uniform01(rng) < means[i] ? 1.0 : 0.0;
  return out;
}

void CdConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(norm_decay >= 0.0 && norm_decay < 1.0)) throw ConfigError("norm_decay must lie in [0, 1)");
}

CdStatistics CdStatistics::zeros(const GbmModel& m) {
  const auto& p = m.params;
  CdStatistics s;
  s.wx = Matrix(p.wx.rows(), p.wx.cols());
  s.wy = Matrix(p.wy.rows(), p.wy.cols());
  s.wz = Matrix(p.wz.rows(), p.wz.cols());
  s.bias_y.assign(p.bias_y.size(), 0.0);
  s.bias_z.assign(p.bias_z.size(), 0.0);
  return s;
}

void CdStatistics::add(const CdStatistics& o) {
  linalg::axpy(1.0, o.wx.storage(), wx.storage());
  linalg::axpy(1.0, o.wy.storage(), wy.storage());
  linalg::axpy(1.0, o.wz.storage(), wz.storage());
  linalg::axpy(1.0, o.bias_y, bias_y);
  linalg::axpy(1.0, o.bias_z, bias_z);
  reconstruction_error += o.reconstruction_error;
}

void CdStatistics::scale(double s) {
  linalg::scale(s, wx.storage());
  linalg::scale(s, wy.storage());
  linalg::scale(s, wz.storage());
  linalg::scale(s, bias_y);
  linalg::scale(s, bias_z);
  reconstruction_error *= s;
}

namespace {

// stats += sign · ∂E/∂θ at (x, y, z)
void accumulate_energy_gradient(const GbmModel& m, std::span<const double> x, std::span<const double> y,
                                std::span<const double> z, double sign, CdStatistics& stats) {
  const FactorView v = m.view();
  const std::size_t F = v.factors();
  Vector fx(F), fy(F), fz(F), t(F);
  linalg::gemv_t(v.wx, x, fx);
  linalg::gemv_t(v.wy, y, fy);
  linalg::gemv_t(v.wz, z, fz);
  linalg::mul(fy, fz, t);
  linalg::rank1(stats.wx, sign, x, t);
  linalg::mul(fx, fz, t);
  linalg::rank1(stats.wy, sign, y, t);
  linalg::mul(fx, fy, t);
  linalg::rank1(stats.wz, sign, z, t);
  linalg::axpy(sign, y, stats.bias_y);
  linalg::axpy(sign, z, stats.bias_z);
}

constexpr std::size_t kChunk = 16;

bool is_binary(const Matrix& m) {
  return std::all_of(m.storage().begin(), m.storage().end(), [](double v) { return v == 0.0 || v == 1.0; });
}

void momentum_step(Matrix& w, Matrix& vel, const Matrix& g, double lr, double mom) {
  if (vel.empty()) vel = Matrix(w.rows(), w.cols());
  linalg::scale(mom, vel.storage());
  linalg::axpy(lr, g.storage(), vel.storage());  // ascent
  linalg::axpy(1.0, vel.storage(), w.storage());
}

void momentum_step(Vector& w, Vector& vel, const Vector& g, double lr, double mom) {
  if (vel.empty()) vel.assign(w.size(), 0.0);
  linalg::scale(mom, vel);
  linalg::axpy(lr, g, vel);
  linalg::axpy(1.0, vel, w);
}

}  // namespace

CdStatistics cd1_statistics(const GbmModel& model, std::span<const double> x, std::span<const double> y, Rng& rng) {
  CdStatistics stats = CdStatistics::zeros(model);
  const Vector pz0 = p_z_given_xy(model, x, y);
  const Vector z0 = sample_bernoulli(pz0, rng);
  const Vector py1 = p_y_given_xz(model, x, z0);
  const Vector y1 = sample_bernoulli(py1, rng);
  const Vector pz1 = p_z_given_xy(model, x, y1);
  accumulate_energy_gradient(model, x, y, pz0, 1.0, stats);
  accumulate_energy_gradient(model, x, py1, pz1, -1.0, stats);
  for (std::size_t j = 0; j < y.size(); ++j) stats.reconstruction_error += (y[j] - py1[j]) * (y[j] - py1[j]);
  return stats;
}

CdStatistics cd1_batch_statistics(const GbmModel& model, const PairBatch& batch, std::uint64_t seed) {
  if (batch.size() == 0) throw DataError("gated Boltzmann machine: empty batch");
  if (batch.input_dim() != model.params.input_dim() || batch.output_dim() != model.params.output_dim())
    throw DimensionError("gated Boltzmann machine: batch dimensions do not match the model");
  const std::size_t n = batch.size();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<CdStatistics> partial(chunks);
  parallel_chunks(chunks, [&](std::size_t c) {
    partial[c] = CdStatistics::zeros(model);
    for (std::size_t a = c * kChunk; a < std::min(n, (c + 1) * kChunk); ++a) {
      Rng rng(derive_seed(seed, a));
      partial[c].add(cd1_statistics(model, batch.x.row(a), batch.y.row(a), rng));
    }
  });
  CdStatistics total = CdStatistics::zeros(model);
  for (const auto& p : partial) total.add(p);
  total.scale(1.0 / static_cast<double>(n));
  return total;
}

double cd1_update(GbmModel& model, const PairBatch& minibatch, const CdConfig& config, CdVelocity& vel,
                  std::uint64_t step_seed) {
  const CdStatistics g = cd1_batch_statistics(model, minibatch, step_seed);
  if (config.learning_rate == 0.0) return g.reconstruction_error;
  auto& p = model.params;
  momentum_step(p.wx, vel.wx, g.wx, config.learning_rate, config.momentum);
  momentum_step(p.wy, vel.wy, g.wy, config.learning_rate, config.momentum);
  momentum_step(p.wz, vel.wz, g.wz, config.learning_rate, config.momentum);
  momentum_step(p.bias_y, vel.bias_y, g.bias_y, config.learning_rate, config.momentum);
  momentum_step(p.bias_z, vel.bias_z, g.bias_z, config.learning_rate, config.momentum);
  if (config.norm_constraint) {
    const double current = 0.5 * (mean_column_norm(p.wx) + mean_column_norm(p.wy));
    model.norm_running_avg = config.norm_decay * model.norm_running_avg + (1.0 - config.norm_decay) * current;
    rescale_columns(p.wx, model.norm_running_avg, derive_seed(step_seed, 101));
    rescale_columns(p.wy, model.norm_running_avg, derive_seed(step_seed, 102));
  }
  try {
    p.validate();
  } catch (const NumericalError& e) {
    throw NumericalError(std::string("contrastive divergence diverged: ") + e.what());
  }
  return g.reconstruction_error;
}

CdResult train(GbmModel& model, const PairBatch& batch, const CdConfig& config) {
  config.validate();
  if (!is_binary(batch.x) || !is_binary(batch.y))
    throw DataError("gated Boltzmann machine needs binary data (see binarize_at_median)");
  CdResult result;
  CdVelocity velocity;
  const std::size_t n = batch.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double err = 0.0;
    for (std::size_t lo = 0, b = 0; lo < n; lo += config.batch_size, ++b) {
      const std::size_t hi = std::min(n, lo + config.batch_size);
      const PairBatch mb = datagen::select_rows(batch, std::span(order).subspan(lo, hi - lo));
      const std::uint64_t step_seed = derive_seed(derive_seed(config.seed, epoch), b + 1);
      err += cd1_update(model, mb, config, velocity, step_seed) * static_cast<double>(hi - lo);
    }
    result.epoch_reconstruction_error.push_back(err / static_cast<double>(n));
  }
  return result;
}

}  // namespace relate::grbm
