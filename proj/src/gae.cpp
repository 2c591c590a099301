// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/gae.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "relate/errors.hpp"
#include "relate/parallel.hpp"
#include "relate/random.hpp"

namespace relate::gae {

using datagen::PairBatch;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(sparsity_weight >= 0.0)) throw ConfigError("sparsity weight must be >= 0");
  if (!(corruption_level >= 0.0 && corruption_level < 1.0)) throw ConfigError("corruption_level must lie in [0, 1)");
  if (!(norm_decay >= 0.0 && norm_decay < 1.0)) throw ConfigError("norm_decay must lie in [0, 1)");
}

GaeModel GaeModel::init(std::size_t I, std::size_t J, std::size_t K, std::size_t F, bool tied, std::uint64_t seed) {
  if (I == 0 || J == 0 || K == 0 || F == 0) throw ConfigError("model dimensions must be positive");
  if (tied && I != J) throw ConfigError("tied Wx = Wy requires equal input and output dimensions");
  GaeModel m;
  m.tied_ = tied;
  m.params_ = FactoredParams::zeros(I, tied ? 0 : J, K, F);
  if (tied) m.params_.wy = Matrix();
  m.params_.bias_y.assign(J, 0.0);
  Rng rng(seed);
  fill_gaussian(m.params_.wx, 0.01, rng);
  if (!tied) fill_gaussian(m.params_.wy, 0.01, rng);
  fill_gaussian(m.params_.wz, 0.1, rng);
  m.norm_running_avg_ = m.mean_filter_norm();
  return m;
}

GaeModel GaeModel::from_params(FactoredParams params, bool tied) {
  params.validate();
  GaeModel m;
  m.tied_ = tied;
  if (tied) {
    if (params.wx.rows() != params.wy.rows() || params.wx != params.wy)
      throw ConfigError("tied model requires Wx and Wy to be identical");
    params.wy = Matrix();
  }
  m.params_ = std::move(params);
  m.norm_running_avg_ = std::max(m.mean_filter_norm(), 1e-12);
  return m;
}

FactorView GaeModel::view() const {
  return FactorView{params_.wx, wy(), params_.wz, params_.bias_x, params_.bias_y, params_.bias_z};
}

FactoredParams GaeModel::to_params() const {
  FactoredParams p = params_;
  if (tied_) p.wy = params_.wx;
  return p;
}

namespace {

void zeros_like(Gradients& g, const GaeModel& m) {
  g.wx = Matrix(m.input_dim(), m.factors());
  g.wy = m.tied() ? Matrix() : Matrix(m.output_dim(), m.factors());
  g.wz = Matrix(m.code_dim(), m.factors());
  g.bias_x.assign(m.input_dim(), 0.0);
  g.bias_y.assign(m.output_dim(), 0.0);
  g.bias_z.assign(m.code_dim(), 0.0);
}

void add_into(Gradients& dst, const Gradients& src) {
  linalg::axpy(1.0, src.wx.storage(), dst.wx.storage());
  linalg::axpy(1.0, src.wy.storage(), dst.wy.storage());
  linalg::axpy(1.0, src.wz.storage(), dst.wz.storage());
  linalg::axpy(1.0, src.bias_x, dst.bias_x);
  linalg::axpy(1.0, src.bias_y, dst.bias_y);
  linalg::axpy(1.0, src.bias_z, dst.bias_z);
}

void scale_all(Gradients& g, double s) {
  for (Matrix* m : {&g.wx, &g.wy, &g.wz}) linalg::scale(s, m->storage());
  for (Vector* v : {&g.bias_x, &g.bias_y, &g.bias_z}) linalg::scale(s, *v);
}

// Per-pair forward (and optionally backward) pass.
class PairPass {
 public:
  PairPass(const GaeModel& m, const TrainConfig& cfg) : m_(m), cfg_(cfg) {
    const std::size_t F = m.factors();
    for (Vector* v : {&fx_, &fy_, &fz_, &p_, &gpy_, &gpx_, &dfx_, &dfy_, &dfz_, &dp_, &t_}) v->assign(F, 0.0);
    xc_.resize(m.input_dim());
    yc_.resize(m.output_dim());
  }

  double run(std::span<const double> x, std::span<const double> y, std::uint64_t pair_seed, Gradients* g) {
    const FactorView v = m_.view();
    std::copy(x.begin(), x.end(), xc_.begin());
    std::copy(y.begin(), y.end(), yc_.begin());
    if (cfg_.corruption_level > 0.0) {
      Rng rng(pair_seed);
      for (double& e : xc_)
        if (uniform01(rng) < cfg_.corruption_level) e = 0.0;
      for (double& e : yc_)
        if (uniform01(rng) < cfg_.corruption_level) e = 0.0;
    }

    // Encoder.
    linalg::gemv_t(v.wx, xc_, fx_);
    linalg::gemv_t(v.wy, yc_, fy_);
    linalg::mul(fx_, fy_, p_);
    Vector a(m_.code_dim());
    linalg::gemv(v.wz, p_, a);
    Vector z(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) z[k] = logistic(a[k] + v.bias_z[k]);
    linalg::gemv_t(v.wz, z, fz_);

    // y ← x
    linalg::mul(fx_, fz_, t_);
    Vector ey(m_.output_dim());
    linalg::gemv(v.wy, t_, ey);
    for (std::size_t j = 0; j < ey.size(); ++j) ey[j] += v.bias_y[j] - y[j];
    double total = linalg::dot(ey, ey);

    Vector ex;
    if (!cfg_.one_sided) {
      linalg::mul(fy_, fz_, t_);
      ex.resize(m_.input_dim());
      linalg::gemv(v.wx, t_, ex);
      for (std::size_t i = 0; i < ex.size(); ++i) ex[i] += v.bias_x[i] - x[i];
      total += linalg::dot(ex, ex);
    }
    if (cfg_.sparsity_weight > 0.0) total += cfg_.sparsity_weight * std::accumulate(z.begin(), z.end(), 0.0);
    if (!g) return total;

    Matrix& gwy = m_.tied() ? g->wx : g->wy;
    std::fill(dfx_.begin(), dfx_.end(), 0.0);
    std::fill(dfy_.begin(), dfy_.end(), 0.0);
    std::fill(dfz_.begin(), dfz_.end(), 0.0);

    // ŷ = Wy (fx ⊙ fz) + by
    linalg::scale(2.0, ey);
    linalg::mul(fx_, fz_, t_);
    linalg::rank1(gwy, 1.0, ey, t_);
    linalg::axpy(1.0, ey, g->bias_y);
    linalg::gemv_t(v.wy, ey, gpy_);
    linalg::mul_acc(gpy_, fz_, dfx_);
    linalg::mul_acc(gpy_, fx_, dfz_);

    // x̂ = Wx (fy ⊙ fz) + bx
    if (!cfg_.one_sided) {
      linalg::scale(2.0, ex);
      linalg::mul(fy_, fz_, t_);
      linalg::rank1(g->wx, 1.0, ex, t_);
      linalg::axpy(1.0, ex, g->bias_x);
      linalg::gemv_t(v.wx, ex, gpx_);
      linalg::mul_acc(gpx_, fz_, dfy_);
      linalg::mul_acc(gpx_, fy_, dfz_);
    }

    // fz = Wzᵀ z
    linalg::rank1(g->wz, 1.0, z, dfz_);
    Vector dz(z.size());
    linalg::gemv(v.wz, dfz_, dz);
    for (std::size_t k = 0; k < z.size(); ++k) {
      dz[k] += cfg_.sparsity_weight;
      dz[k] *= z[k] * (1.0 - z[k]);  // through σ
    }
    // a = Wz (fx ⊙ fy) + bz
    linalg::rank1(g->wz, 1.0, dz, p_);
    linalg::axpy(1.0, dz, g->bias_z);
    linalg::gemv_t(v.wz, dz, dp_);
    linalg::mul_acc(dp_, fy_, dfx_);
    linalg::mul_acc(dp_, fx_, dfy_);

    linalg::rank1(g->wx, 1.0, xc_, dfx_);
    linalg::rank1(gwy, 1.0, yc_, dfy_);
    return total;
  }

 private:
  const GaeModel& m_;
  const TrainConfig& cfg_;
  Vector xc_, yc_, fx_, fy_, fz_, p_, gpy_, gpx_, dfx_, dfy_, dfz_, dp_, t_;
};

constexpr std::size_t kChunk = 16;

// Mean loss (and gradient if requested), reduced chunk by chunk in index order.
double evaluate(const GaeModel& model, const PairBatch& batch, const TrainConfig& cfg, Gradients* grad) {
  if (batch.size() == 0) throw DataError("gated autoencoder: empty batch");
  if (batch.input_dim() != model.input_dim() || batch.output_dim() != model.output_dim())
    throw DimensionError("gated autoencoder: batch dimensions do not match the model");
  const std::size_t n = batch.size();
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<double> chunk_loss(chunks, 0.0);
  std::vector<Gradients> chunk_grad(grad ? chunks : 0);
  parallel_chunks(chunks, [&](std::size_t c) {
    PairPass pass(model, cfg);
    Gradients* g = nullptr;
    if (grad) {
      zeros_like(chunk_grad[c], model);
      g = &chunk_grad[c];
    }
    double s = 0.0;
    for (std::size_t a = c * kChunk; a < std::min(n, (c + 1) * kChunk); ++a)
      s += pass.run(batch.x.row(a), batch.y.row(a), derive_seed(cfg.seed, a), g);
    chunk_loss[c] = s;
  });
  double total = 0.0;
  for (double s : chunk_loss) total += s;
  if (grad) {
    zeros_like(*grad, model);
    for (const Gradients& g : chunk_grad) add_into(*grad, g);
    scale_all(*grad, 1.0 / static_cast<double>(n));
  }
  return total / static_cast<double>(n);
}

}  // namespace

double GaeModel::mean_filter_norm() const {
  double s = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < params_.wx.cols(); ++f, ++count) s += column_norm(params_.wx, f);
  if (!tied_)
    for (std::size_t f = 0; f < params_.wy.cols(); ++f, ++count) s += column_norm(params_.wy, f);
  return count ? s / static_cast<double>(count) : 0.0;
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const Matrix* m : {&wx, &wy, &wz}) s += linalg::dot(m->storage(), m->storage());
  for (const Vector* v : {&bias_x, &bias_y, &bias_z}) s += linalg::dot(*v, *v);
  return s;
}

MappingCode encode(const GaeModel& model, std::span<const double> x, std::span<const double> y) {
  return make_code(code_preactivation(model.view(), x, y));
}

Vector decode(const GaeModel& model, std::span<const double> x, std::span<const double> z) {
  return predict_output(model.view(), x, z);
}

Vector decode_reverse(const GaeModel& model, std::span<const double> y, std::span<const double> z) {
  return predict_input(model.view(), y, z);
}

double loss(const GaeModel& model, const PairBatch& batch, const TrainConfig& config) {
  return evaluate(model, batch, config, nullptr);
}

Gradients gradients(const GaeModel& model, const PairBatch& batch, const TrainConfig& config) {
  Gradients g;
  evaluate(model, batch, config, &g);
  return g;
}

void apply_norm_constraint(GaeModel& model, double decay, std::uint64_t seed) {
  const double current = model.mean_filter_norm();
  double avg = decay * model.norm_running_avg() + (1.0 - decay) * current;
  if (!(avg > 0.0)) avg = model.norm_running_avg();
  model.set_norm_running_avg(avg);
  rescale_columns(model.wx(), avg, seed);
  if (!model.tied()) rescale_columns(model.wy(), avg, derive_seed(seed, 1));
}

namespace {

void check_finite(const GaeModel& m, std::size_t epoch, std::size_t b) {
  const FactorView v = m.view();
  const char* bad = nullptr;
  if (!linalg::all_finite(v.wx.storage())) bad = "Wx";
  else if (!linalg::all_finite(v.wy.storage())) bad = "Wy";
  else if (!linalg::all_finite(v.wz.storage())) bad = "Wz";
  else if (!linalg::all_finite(v.bias_x) || !linalg::all_finite(v.bias_y) || !linalg::all_finite(v.bias_z))
    bad = "biases";
  if (bad) {
    std::ostringstream msg;
    msg << "training diverged: non-finite " << bad << " after epoch " << epoch << " batch " << b
        << " (lower the learning rate or enable the norm constraint)";
    throw NumericalError(msg.str());
  }
}

void step(Matrix& w, Matrix& vel, const Matrix& g, double lr, double mom) {
  linalg::scale(mom, vel.storage());
  linalg::axpy(-lr, g.storage(), vel.storage());
  linalg::axpy(1.0, vel.storage(), w.storage());
}

void step(Vector& w, Vector& vel, const Vector& g, double lr, double mom) {
  linalg::scale(mom, vel);
  linalg::axpy(-lr, g, vel);
  linalg::axpy(1.0, vel, w);
}

}  // namespace

TrainResult train(GaeModel& model, const PairBatch& batch, const TrainConfig& config, const TrainCallbacks& callbacks,
                  std::size_t first_epoch) {
  config.validate();
  TrainConfig clean = config;
  clean.corruption_level = 0.0;

  TrainResult result;
  result.initial_loss = loss(model, batch, clean);
  result.final_loss = result.initial_loss;
  Gradients velocity;
  zeros_like(velocity, model);

  const std::size_t n = batch.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = first_epoch; epoch < first_epoch + config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    const std::size_t num_batches = (n + config.batch_size - 1) / config.batch_size;
    for (std::size_t b = 0; b < num_batches; ++b) {
      const std::size_t lo = b * config.batch_size;
      const std::size_t hi = std::min(n, lo + config.batch_size);
      const PairBatch mb = datagen::select_rows(batch, std::span(order).subspan(lo, hi - lo));
      TrainConfig step_cfg = config;
      step_cfg.seed = derive_seed(derive_seed(config.seed, epoch), b + 1);

      Gradients g;
      const double batch_loss = evaluate(model, mb, step_cfg, &g);
      TraceRecord rec{epoch, b, batch_loss, std::sqrt(g.squared_norm())};

      if (config.learning_rate > 0.0) {
        step(model.wx(), velocity.wx, g.wx, config.learning_rate, config.momentum);
        if (!model.tied()) step(model.wy(), velocity.wy, g.wy, config.learning_rate, config.momentum);
        step(model.wz(), velocity.wz, g.wz, config.learning_rate, config.momentum);
        step(model.bias_x(), velocity.bias_x, g.bias_x, config.learning_rate, config.momentum);
        step(model.bias_y(), velocity.bias_y, g.bias_y, config.learning_rate, config.momentum);
        step(model.bias_z(), velocity.bias_z, g.bias_z, config.learning_rate, config.momentum);
        if (config.norm_constraint) apply_norm_constraint(model, config.norm_decay, derive_seed(step_cfg.seed, 7));
        check_finite(model, epoch, b);
      }
      result.trace.push_back(rec);
      if (callbacks.on_batch) callbacks.on_batch(rec);
    }
    const double epoch_loss = loss(model, batch, clean);
    if (!std::isfinite(epoch_loss)) throw NumericalError("training diverged: non-finite loss after epoch " +
                                                         std::to_string(epoch));
    result.epoch_losses.push_back(epoch_loss);
    result.final_loss = epoch_loss;
    if (callbacks.on_epoch) callbacks.on_epoch(epoch, epoch_loss);
  }
  return result;
}

GradCheckResult check_gradients(const GaeModel& model, const PairBatch& batch, const TrainConfig& config, double h,
                                std::size_t max_entries) {
  const Gradients analytic = gradients(model, batch, config);
  GaeModel probe = model;
  GradCheckResult result;
  Rng pick(derive_seed(config.seed, 0xfd));

  auto check_block = [&](std::vector<double>& values, const std::vector<double>& grad) {
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), 0);
    if (max_entries && idx.size() > max_entries) {
      std::shuffle(idx.begin(), idx.end(), pick);
      idx.resize(max_entries);
    }
    for (std::size_t i : idx) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = loss(probe, batch, config);
      values[i] = saved - h;
      const double down = loss(probe, batch, config);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double denom = std::max({std::abs(numeric), std::abs(grad[i]), 1e-4});
      result.max_rel_error = std::max(result.max_rel_error, std::abs(numeric - grad[i]) / denom);
      ++result.entries_checked;
    }
  };
  check_block(probe.wx().storage(), analytic.wx.storage());
  if (!probe.tied()) check_block(probe.wy().storage(), analytic.wy.storage());
  check_block(probe.wz().storage(), analytic.wz.storage());
  check_block(probe.bias_x(), analytic.bias_x);
  check_block(probe.bias_y(), analytic.bias_y);
  check_block(probe.bias_z(), analytic.bias_z);
  return result;
}

}  // namespace relate::gae
