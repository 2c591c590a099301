// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <random>

#include "doctest.h"
#include "relate/datagen.hpp"
#include "relate/errors.hpp"
#include "relate/gae.hpp"
#include "test_util.hpp"

using namespace relate;
using datagen::PairBatch;
using relate::testing::gaussian_vector;
using relate::testing::max_rel_error;
using relate::testing::random_params;
using relate::testing::rel_error;

namespace {

PairBatch random_batch(std::size_t n, std::size_t I, std::size_t J, Rng& rng) {
  PairBatch b;
  b.x = Matrix(n, I);
  b.y = Matrix(n, J);
  fill_gaussian(b.x, 1.0, rng);
  fill_gaussian(b.y, 1.0, rng);
  b.x_shape = {1, I};
  b.y_shape = {1, J};
  return b;
}

PairBatch shift_batch_1d(std::size_t n, std::uint64_t seed) {
  datagen::ShiftedDotsParams p;
  p.num_pairs = n;
  p.height = 1;
  p.width = 13;
  p.dot_density = 0.3;
  p.max_shift = 2;
  p.seed = seed;
  return datagen::normalize(datagen::gen_shifted_dots(p), std::sqrt(13.0));
}

// Per-pair loss through the dense tensor, written out directly.
double dense_loss(const FactoredParams& p, const PairBatch& b, double lambda, bool one_sided) {
  const DenseTensor w = expand_factored(p);
  double total = 0.0;
  for (std::size_t a = 0; a < b.size(); ++a) {
    const auto x = b.x.row(a);
    const auto y = b.y.row(a);
    Vector z = oracle_encode(w, x, y);
    for (double& v : z) v = logistic(v);
    const Vector yhat = oracle_decode(w, x, z);
    for (std::size_t j = 0; j < w.J; ++j) total += (y[j] - yhat[j]) * (y[j] - yhat[j]);
    if (!one_sided) {
      for (std::size_t i = 0; i < w.I; ++i) {
        double xhat = w.bias_x[i];
        for (std::size_t j = 0; j < w.J; ++j)
          for (std::size_t k = 0; k < w.K; ++k) xhat += w.at(i, j, k) * y[j] * z[k];
        total += (x[i] - xhat) * (x[i] - xhat);
      }
    }
    for (double v : z) total += lambda * v;
  }
  return total / static_cast<double>(b.size());
}

}  // namespace

TEST_CASE("encode trivia") {
  Rng rng(1);
  FactoredParams p = random_params(5, 5, 3, 4, rng);
  const gae::GaeModel m = gae::GaeModel::from_params(p, false);
  const Vector x = gaussian_vector(5, rng);
  const Vector zero(5, 0.0);
  const MappingCode c = gae::encode(m, x, zero);
  for (std::size_t k = 0; k < 3; ++k) CHECK(c.z[k] == doctest::Approx(logistic(p.bias_z[k])).epsilon(1e-15));

  FactoredParams s = FactoredParams::zeros(1, 1, 1, 1);
  s.wx(0, 0) = s.wy(0, 0) = s.wz(0, 0) = 1.0;
  const gae::GaeModel scalar = gae::GaeModel::from_params(s, false);
  CHECK(gae::encode(scalar, Vector{2.0}, Vector{3.0}).pre_activation[0] == 6.0);
}

TEST_CASE("factored encode/decode matches the dense oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t I = 2 + rng() % 10, J = 2 + rng() % 10, K = 1 + rng() % 6, F = 1 + rng() % 8;
    const FactoredParams p = random_params(I, J, K, F, rng);
    const gae::GaeModel m = gae::GaeModel::from_params(p, false);
    const DenseTensor w = expand_factored(p);
    const Vector x = gaussian_vector(I, rng), y = gaussian_vector(J, rng), z = gaussian_vector(K, rng);
    CHECK(max_rel_error(gae::encode(m, x, y).pre_activation, oracle_encode(w, x, y)) < 1e-10);
    CHECK(max_rel_error(gae::decode(m, x, z), oracle_decode(w, x, z)) < 1e-10);
  }
}

TEST_CASE("decode trivia") {
  Rng rng(3);
  const FactoredParams p = random_params(6, 7, 4, 5, rng);
  const gae::GaeModel m = gae::GaeModel::from_params(p, false);
  const Vector z = gaussian_vector(4, rng);
  CHECK(gae::decode(m, Vector(6, 0.0), z) == p.bias_y);

  // One-hot code blends in a single slice of the tensor.
  const DenseTensor w = expand_factored(p);
  const Vector x = gaussian_vector(6, rng);
  Vector onehot(4, 0.0);
  onehot[2] = 1.0;
  Vector want = warp_from_code(w, onehot).apply(x);
  linalg::axpy(1.0, p.bias_y, want);
  CHECK(max_rel_error(gae::decode(m, x, onehot), want) < 1e-12);
}

TEST_CASE("loss") {
  Rng rng(4);
  SUBCASE("non-negative with lambda 0") {
    for (int t = 0; t < 10; ++t) {
      const gae::GaeModel m = gae::GaeModel::from_params(random_params(4, 4, 2, 3, rng), false);
      CHECK(gae::loss(m, random_batch(5, 4, 4, rng), {}) >= 0.0);
    }
  }
  SUBCASE("zero Wz reduces decoding to the biases") {
    FactoredParams p = random_params(4, 5, 3, 3, rng);
    p.wz.fill(0.0);
    const gae::GaeModel m = gae::GaeModel::from_params(p, false);
    const PairBatch b = random_batch(6, 4, 5, rng);
    double want = 0.0;
    for (std::size_t a = 0; a < 6; ++a) {
      for (std::size_t j = 0; j < 5; ++j) want += std::pow(b.y(a, j) - p.bias_y[j], 2);
      for (std::size_t i = 0; i < 4; ++i) want += std::pow(b.x(a, i) - p.bias_x[i], 2);
    }
    CHECK(rel_error(gae::loss(m, b, {}), want / 6.0) < 1e-13);
  }
  SUBCASE("matches an independent per-pair summation") {
    for (double lambda : {0.0, 0.01}) {
      for (bool one_sided : {false, true}) {
        const FactoredParams p = random_params(5, 6, 3, 4, rng);
        const gae::GaeModel m = gae::GaeModel::from_params(p, false);
        const PairBatch b = random_batch(7, 5, 6, rng);
        gae::TrainConfig cfg;
        cfg.sparsity_weight = lambda;
        cfg.one_sided = one_sided;
        CHECK(rel_error(gae::loss(m, b, cfg), dense_loss(p, b, lambda, one_sided)) < 1e-10);
      }
    }
  }
}

TEST_CASE("gradients") {
  Rng rng(5);
  SUBCASE("zero learning signal") {
    // Wz = 0 makes both reconstructions equal the biases; matching the data
    // leaves nothing to learn.
    FactoredParams p = random_params(4, 4, 3, 5, rng);
    p.wz.fill(0.0);
    PairBatch b = random_batch(3, 4, 4, rng);
    for (std::size_t a = 1; a < 3; ++a) {
      for (std::size_t i = 0; i < 4; ++i) b.x(a, i) = b.x(0, i), b.y(a, i) = b.y(0, i);
    }
    for (std::size_t i = 0; i < 4; ++i) p.bias_x[i] = b.x(0, i), p.bias_y[i] = b.y(0, i);
    const gae::Gradients g = gae::gradients(gae::GaeModel::from_params(p, false), b, {});
    CHECK(g.squared_norm() == 0.0);
  }
  SUBCASE("finite differences on 8x8 patches, F=6, K=4") {
    for (bool tied : {false, true}) {
      for (double lambda : {0.0, 0.01}) {
        for (double corruption : {0.0, 0.3}) {
          FactoredParams p = random_params(64, 64, 4, 6, rng, 0.3);
          if (tied) p.wy = p.wx;
          const gae::GaeModel m = gae::GaeModel::from_params(p, tied);
          const PairBatch b = random_batch(4, 64, 64, rng);
          gae::TrainConfig cfg;
          cfg.sparsity_weight = lambda;
          cfg.corruption_level = corruption;
          cfg.seed = rng();
          const gae::GradCheckResult r = gae::check_gradients(m, b, cfg, 1e-5, 60);
          INFO("tied=" << tied << " lambda=" << lambda << " corruption=" << corruption);
          CHECK(r.max_rel_error < 1e-5);
          CHECK(r.entries_checked > 100);
        }
      }
    }
  }
  SUBCASE("duplicating every pair leaves the mean gradient unchanged") {
    const gae::GaeModel m = gae::GaeModel::from_params(random_params(5, 5, 3, 4, rng), false);
    const PairBatch b = random_batch(9, 5, 5, rng);
    std::vector<std::size_t> twice;
    for (std::size_t a = 0; a < 9; ++a) twice.insert(twice.end(), {a, a});
    gae::TrainConfig cfg;
    cfg.sparsity_weight = 0.01;
    const gae::Gradients g1 = gae::gradients(m, b, cfg);
    const gae::Gradients g2 = gae::gradients(m, datagen::select_rows(b, twice), cfg);
    CHECK(linalg::max_abs_diff(g1.wx.storage(), g2.wx.storage()) < 1e-12);
    CHECK(linalg::max_abs_diff(g1.wy.storage(), g2.wy.storage()) < 1e-12);
    CHECK(linalg::max_abs_diff(g1.wz.storage(), g2.wz.storage()) < 1e-12);
    CHECK(linalg::max_abs_diff(g1.bias_z, g2.bias_z) < 1e-12);
  }
}

TEST_CASE("tied models share Wx and Wy storage") {
  gae::GaeModel m = gae::GaeModel::init(9, 9, 3, 4, true, 1);
  CHECK(&m.wx() == &m.wy());
  m.wx()(0, 0) = 42.0;
  CHECK(m.view().wy(0, 0) == 42.0);
  CHECK(m.to_params().wy == m.to_params().wx);
  CHECK_THROWS_AS(gae::GaeModel::init(9, 8, 3, 4, true, 1), ConfigError);
}

TEST_CASE("train") {
  SUBCASE("learning rate 0 leaves the model unchanged") {
    const PairBatch b = shift_batch_1d(200, 1);
    gae::GaeModel m = gae::GaeModel::init(13, 13, 5, 26, false, 2);
    const FactoredParams before = m.to_params();
    gae::TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.epochs = 3;
    const gae::TrainResult r = gae::train(m, b, cfg);
    CHECK(m.to_params() == before);
    for (double l : r.epoch_losses) CHECK(l == r.initial_loss);
  }
  SUBCASE("1-D cyclic shifts halve the symmetric loss in 50 epochs") {
    const PairBatch b = shift_batch_1d(2000, 3);
    gae::GaeModel m = gae::GaeModel::init(13, 13, 5, 26, false, 4);
    gae::TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.epochs = 50;
    cfg.seed = 5;
    const gae::TrainResult r = gae::train(m, b, cfg);
    MESSAGE("loss " << r.initial_loss << " -> " << r.final_loss);
    CHECK(r.final_loss < 0.5 * r.initial_loss);
  }
  SUBCASE("norm constraint keeps every filter at the running average") {
    const PairBatch b = shift_batch_1d(300, 6);
    gae::GaeModel m = gae::GaeModel::init(13, 13, 5, 26, false, 7);
    gae::TrainConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.epochs = 2;
    gae::TrainCallbacks cb;
    int checked = 0;
    cb.on_batch = [&](const gae::TraceRecord&) {
      for (const Matrix* w : {&m.wx(), &m.wy()})
        for (std::size_t f = 0; f < w->cols(); ++f) {
          CHECK(std::abs(column_norm(*w, f) / m.norm_running_avg() - 1.0) < 0.01);
          ++checked;
        }
    };
    gae::train(m, b, cfg, cb);
    CHECK(checked > 0);
  }
  SUBCASE("same seed gives identical checkpoint bytes") {
    const PairBatch b = shift_batch_1d(300, 8);
    gae::TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.epochs = 2;
    cfg.corruption_level = 0.2;
    cfg.seed = 9;
    gae::GaeModel a = gae::GaeModel::init(13, 13, 5, 26, false, 10);
    gae::GaeModel c = a;
    gae::train(a, b, cfg);
    gae::train(c, b, cfg);
    CHECK(encode_checkpoint(a.to_params()) == encode_checkpoint(c.to_params()));
  }
  SUBCASE("resuming at epoch e continues the same schedule") {
    const PairBatch b = shift_batch_1d(300, 11);
    gae::TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.momentum = 0.0;  // velocity is not part of a checkpoint
    cfg.epochs = 4;
    gae::GaeModel full = gae::GaeModel::init(13, 13, 5, 26, false, 12);
    gae::GaeModel half = full;
    gae::train(full, b, cfg);
    cfg.epochs = 2;
    gae::train(half, b, cfg);
    gae::GaeModel resumed = gae::GaeModel::from_params(half.to_params(), false);
    resumed.set_norm_running_avg(half.norm_running_avg());
    gae::train(resumed, b, cfg, {}, 2);
    CHECK(linalg::max_abs_diff(resumed.wx().storage(), full.wx().storage()) < 1e-12);
  }
  SUBCASE("divergence is reported") {
    const PairBatch b = shift_batch_1d(100, 13);
    gae::GaeModel m = gae::GaeModel::init(13, 13, 5, 26, false, 14);
    gae::TrainConfig cfg;
    cfg.learning_rate = 1e8;
    cfg.norm_constraint = false;
    cfg.epochs = 5;
    CHECK_THROWS_AS(gae::train(m, b, cfg), NumericalError);
  }
  SUBCASE("large factor and code counts run") {
    const PairBatch b = shift_batch_1d(50, 15);
    gae::GaeModel m = gae::GaeModel::init(13, 13, 128, 256, false, 16);
    gae::TrainConfig cfg;
    cfg.learning_rate = 0.01;
    cfg.epochs = 1;
    const gae::TrainResult r = gae::train(m, b, cfg);
    CHECK(std::isfinite(r.final_loss));
  }
  SUBCASE("invalid configs") {
    gae::TrainConfig cfg;
    cfg.corruption_level = 1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = {};
    cfg.sparsity_weight = -1.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
}
