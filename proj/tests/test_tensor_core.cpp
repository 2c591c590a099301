// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "relate/errors.hpp"
#include "relate/tensor_core.hpp"
#include "test_util.hpp"

using namespace relate;
using relate::testing::gaussian_vector;
using relate::testing::max_rel_error;
using relate::testing::random_params;

TEST_CASE("expand_factored") {
  SUBCASE("all-ones single factor") {
    FactoredParams p = FactoredParams::zeros(2, 3, 4, 1);
    p.wx.fill(1.0);
    p.wy.fill(1.0);
    p.wz.fill(1.0);
    const DenseTensor t = expand_factored(p);
    for (double v : t.w) CHECK(v == 1.0);
  }
  SUBCASE("a zero factor contributes nothing") {
    Rng rng(1);
    FactoredParams p = random_params(3, 4, 2, 5, rng);
    for (std::size_t r = 0; r < 3; ++r) p.wx(r, 2) = 0.0;
    FactoredParams q = FactoredParams::zeros(3, 4, 2, 4);
    for (std::size_t f = 0, g = 0; f < 5; ++f) {
      if (f == 2) continue;
      q.wx.set_col(g, p.wx.col(f));
      q.wy.set_col(g, p.wy.col(f));
      q.wz.set_col(g, p.wz.col(f));
      ++g;
    }
    CHECK(max_rel_error(expand_factored(p).w, expand_factored(q).w) < 1e-15);
  }
  SUBCASE("random 3x3x3, F=4 matches a direct triple loop") {
    Rng rng(2);
    const FactoredParams p = random_params(3, 3, 3, 4, rng);
    const DenseTensor t = expand_factored(p);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j)
        for (std::size_t k = 0; k < 3; ++k) {
          double s = 0.0;
          for (std::size_t f = 0; f < 4; ++f) s += p.wx(i, f) * p.wy(j, f) * p.wz(k, f);
          CHECK(t.at(i, j, k) == s);
        }
  }
  SUBCASE("oracle budget") {
    const FactoredParams big = FactoredParams::zeros(101, 100, 100, 1);
    CHECK_THROWS_AS(expand_factored(big), ConfigError);
  }
}

TEST_CASE("oracle encode / decode") {
  Rng rng(3);
  const FactoredParams p = random_params(5, 6, 3, 4, rng);
  const DenseTensor t = expand_factored(p);

  const Vector zero_x(5, 0.0);
  const Vector y = gaussian_vector(6, rng);
  CHECK(oracle_encode(t, zero_x, y) == p.bias_z);

  DenseTensor scalar;
  scalar.I = scalar.J = scalar.K = 1;
  scalar.w = {1.0};
  scalar.bias_z = {0.0};
  scalar.bias_y = {0.0};
  CHECK(oracle_encode(scalar, Vector{2.0}, Vector{3.0})[0] == 6.0);

  DenseTensor no_bias = t;
  std::fill(no_bias.bias_y.begin(), no_bias.bias_y.end(), 0.0);
  CHECK(oracle_decode(no_bias, gaussian_vector(5, rng), Vector(3, 0.0)) == Vector(6, 0.0));

  // I = K = 1: decode returns the fibre w_{0,·,0}.
  DenseTensor fibre;
  fibre.I = fibre.K = 1;
  fibre.J = 4;
  fibre.w = {0.5, -1.0, 2.0, 3.5};
  fibre.bias_y.assign(4, 0.0);
  CHECK(oracle_decode(fibre, Vector{1.0}, Vector{1.0}) == fibre.w);

  CHECK_THROWS_AS(oracle_encode(t, Vector(4), y), DimensionError);
}

TEST_CASE("factored inference equals the dense oracle") {
  Rng rng(4);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t I = 1 + rng() % 8, J = 1 + rng() % 8, K = 1 + rng() % 5, F = 1 + rng() % 7;
    const FactoredParams p = random_params(I, J, K, F, rng);
    const DenseTensor t = expand_factored(p);
    const FactorView v = FactorView::of(p);
    const Vector x = gaussian_vector(I, rng), y = gaussian_vector(J, rng), z = gaussian_vector(K, rng);
    CHECK(max_rel_error(code_preactivation(v, x, y), oracle_encode(t, x, y)) < 1e-10);
    CHECK(max_rel_error(predict_output(v, x, z), oracle_decode(t, x, z)) < 1e-10);
    CHECK(testing::rel_error(factored_energy(v, x, y, z), oracle_energy(t, x, y, z)) < 1e-10);
    CHECK(max_rel_error(factored_warp(v, z).L.storage(), warp_from_code(t, z).L.storage()) < 1e-10);
  }
}

TEST_CASE("oracle encode is bilinear") {
  Rng rng(5);
  const DenseTensor t = expand_factored(random_params(4, 5, 3, 6, rng));
  DenseTensor nb = t;
  std::fill(nb.bias_z.begin(), nb.bias_z.end(), 0.0);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x1 = gaussian_vector(4, rng), x2 = gaussian_vector(4, rng);
    const Vector y1 = gaussian_vector(5, rng), y2 = gaussian_vector(5, rng);
    const double a = gaussian_vector(1, rng)[0], b = gaussian_vector(1, rng)[0];
    Vector xs(4), ys(5);
    for (std::size_t i = 0; i < 4; ++i) xs[i] = a * x1[i] + b * x2[i];
    for (std::size_t j = 0; j < 5; ++j) ys[j] = a * y1[j] + b * y2[j];
    const Vector lhs_x = oracle_encode(nb, xs, y1);
    const Vector lhs_y = oracle_encode(nb, x1, ys);
    const Vector e1 = oracle_encode(nb, x1, y1), e2 = oracle_encode(nb, x2, y1), e3 = oracle_encode(nb, x1, y2);
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(lhs_x[k] == doctest::Approx(a * e1[k] + b * e2[k]).epsilon(1e-12));
      CHECK(lhs_y[k] == doctest::Approx(a * e1[k] + b * e3[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("warp_from_code") {
  Rng rng(6);
  const FactoredParams p = random_params(4, 5, 3, 6, rng);
  DenseTensor t = expand_factored(p);

  const WarpMatrix slice = warp_from_code(t, Vector{0.0, 1.0, 0.0});
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) CHECK(slice.L(j, i) == t.at(i, j, 1));

  const WarpMatrix none = warp_from_code(t, Vector(3, 0.0));
  CHECK(linalg::max_abs(none.L.storage()) == 0.0);

  std::fill(t.bias_y.begin(), t.bias_y.end(), 0.0);
  const Vector z = gaussian_vector(3, rng);
  const WarpMatrix L = warp_from_code(t, z);
  for (int trial = 0; trial < 20; ++trial) {
    const Vector x = gaussian_vector(4, rng);
    CHECK(linalg::max_abs_diff(L.apply(x), oracle_decode(t, x, z)) < 1e-12);
  }
}

TEST_CASE("logistic code") {
  const MappingCode c = make_code({0.0, 40.0, -40.0, 1.0});
  CHECK(c.z[0] == 0.5);
  CHECK(c.z[1] > 0.999);
  CHECK(c.z[2] > 0.0);
  CHECK(c.z[2] < 1e-15);
  CHECK(c.z[3] == doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
}

TEST_CASE("RELW checkpoint") {
  Rng rng(7);
  const FactoredParams p = random_params(6, 5, 4, 3, rng);
  const std::string bytes = encode_checkpoint(p);
  CHECK(bytes.substr(0, 4) == "RELW");
  CHECK(bytes.size() == 4 + 4 + 32 + 8 * (3 * 15 + 15) + 4);
  CHECK(decode_checkpoint(bytes) == p);

  std::string flipped = bytes;
  flipped[60] ^= 0x01;
  CHECK_THROWS_WITH_AS(decode_checkpoint(flipped), "checkpoint: CRC32 mismatch", DataError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, 30)), DataError);

  const auto path = std::filesystem::temp_directory_path() / "relate_test_ckpt.relw";
  write_checkpoint(path.string(), p);
  CHECK(read_checkpoint(path.string()) == p);
  std::filesystem::remove(path);

  FactoredParams nan = p;
  nan.wz(0, 0) = std::nan("");
  CHECK_THROWS_AS(encode_checkpoint(nan), NumericalError);
}
