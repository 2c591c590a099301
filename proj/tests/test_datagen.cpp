// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "relate/batch_io.hpp"
#include "relate/datagen.hpp"
#include "relate/errors.hpp"
#include "relate/log.hpp"
#include "test_util.hpp"

using namespace relate;
using namespace relate::datagen;

namespace {

// Independent index-remapping oracle: y[r][c] = x[(r - dy) mod h][(c - dx) mod w].
Vector remap_oracle(std::span<const double> x, std::size_t h, std::size_t w, int dx, int dy) {
  Vector y(h * w);
  const int H = static_cast<int>(h), W = static_cast<int>(w);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      const int sr = ((r - dy) % H + H) % H;
      const int sc = ((c - dx) % W + W) % W;
      y[static_cast<std::size_t>(r * W + c)] = x[static_cast<std::size_t>(sr * W + sc)];
    }
  return y;
}

Vector row_copy(const Matrix& m, std::size_t r) { return Vector(m.row(r).begin(), m.row(r).end()); }

}  // namespace

TEST_CASE("shifted dots: (1,0) wraparound equals the pixel remap oracle") {
  ShiftedDotsParams p;
  p.num_pairs = 20;
  p.height = p.width = 13;
  p.dot_density = 0.1;
  p.fixed_shift = Shift{1, 0};
  p.seed = 3;
  const PairBatch b = gen_shifted_dots(p);
  for (std::size_t a = 0; a < b.size(); ++a) {
    const Vector x = row_copy(b.x, a);
    for (std::size_t r = 0; r < 13; ++r)
      for (std::size_t c = 0; c < 13; ++c) CHECK(b.y(a, r * 13 + c) == x[r * 13 + (c + 12) % 13]);
    CHECK(b.labels(a, 0) == 1.0);
    CHECK(b.labels(a, 1) == 0.0);
  }
}

TEST_CASE("shifted dots: labels are faithful for random shifts") {
  ShiftedDotsParams p;
  p.num_pairs = 200;
  p.height = 9;
  p.width = 11;
  p.max_shift = 3;
  p.seed = 17;
  const PairBatch b = gen_shifted_dots(p);
  b.validate();
  int nonzero = 0;
  for (std::size_t a = 0; a < b.size(); ++a) {
    const int dx = static_cast<int>(b.labels(a, 0));
    const int dy = static_cast<int>(b.labels(a, 1));
    CHECK(std::abs(dx) <= 3);
    CHECK(std::abs(dy) <= 3);
    nonzero += (dx != 0 || dy != 0);
    CHECK(remap_oracle(b.x.row(a), 9, 11, dx, dy) == row_copy(b.y, a));
    for (double v : b.x.row(a)) CHECK((v == 0.0 || v == 1.0));
  }
  CHECK(nonzero > 150);
}

TEST_CASE("shifted dots: identity, determinism, zero padding and errors") {
  ShiftedDotsParams p;
  p.num_pairs = 30;
  p.max_shift = 0;
  const PairBatch id = gen_shifted_dots(p);
  CHECK(id.x == id.y);
  for (double v : id.labels.storage()) CHECK(v == 0.0);

  p.max_shift = 2;
  p.seed = 99;
  const PairBatch a = gen_shifted_dots(p);
  const PairBatch b = gen_shifted_dots(p);
  CHECK(encode_batch(a) == encode_batch(b));

  p.edge = EdgeMode::kZeroPad;
  p.fixed_shift = Shift{2, -1};
  const PairBatch z = gen_shifted_dots(p);
  for (std::size_t r = 0; r < 13; ++r)
    for (std::size_t c = 0; c < 13; ++c) {
      const long sr = static_cast<long>(r) + 1, sc = static_cast<long>(c) - 2;
      const double want = (sr < 13 && sc >= 0) ? z.x(0, static_cast<std::size_t>(sr * 13 + sc)) : 0.0;
      CHECK(z.y(0, r * 13 + c) == want);
    }

  ShiftedDotsParams bad;
  bad.dot_density = 0.0;
  CHECK_THROWS_AS(gen_shifted_dots(bad), ConfigError);
  bad.dot_density = 1.0;
  CHECK_THROWS_AS(gen_shifted_dots(bad), ConfigError);
  bad = {};
  bad.height = 0;
  CHECK_THROWS_AS(gen_shifted_dots(bad), ConfigError);
  bad = {};
  bad.max_shift = 13;
  CHECK_THROWS_AS(gen_shifted_dots(bad), ConfigError);

  // 1-D signals: a single row shifts along columns only.
  ShiftedDotsParams line;
  line.height = 1;
  line.width = 13;
  line.max_shift = 4;
  line.dot_density = 0.3;
  const PairBatch l = gen_shifted_dots(line);
  for (std::size_t a = 0; a < l.size(); ++a) {
    CHECK(l.labels(a, 1) == 0.0);
    CHECK(remap_oracle(l.x.row(a), 1, 13, static_cast<int>(l.labels(a, 0)), 0) == row_copy(l.y, a));
  }
}

TEST_CASE("split-screen dots") {
  SplitScreenParams p;
  p.num_pairs = 10;
  p.height = 14;
  p.width = 13;
  p.fixed_top = Shift{1, 0};
  p.fixed_bottom = Shift{0, 1};
  const PairBatch b = gen_splitscreen_dots(p);
  const std::size_t half = 7 * 13;
  for (std::size_t a = 0; a < b.size(); ++a) {
    const Vector x = row_copy(b.x, a);
    const Vector top = remap_oracle(std::span(x).subspan(0, half), 7, 13, 1, 0);
    const Vector bottom = remap_oracle(std::span(x).subspan(half, half), 7, 13, 0, 1);
    for (std::size_t i = 0; i < half; ++i) {
      CHECK(b.y(a, i) == top[i]);
      CHECK(b.y(a, half + i) == bottom[i]);
    }
    CHECK(b.labels(a, 0) == 1.0);
    CHECK(b.labels(a, 3) == 1.0);

    // Halves never mix.
    Vector masked = x;
    std::fill(masked.begin() + static_cast<std::ptrdiff_t>(half), masked.end(), 0.0);
    const Vector y2 = split_shift_image(masked, Shape{14, 13}, Shift{1, 0}, Shift{0, 1});
    for (std::size_t i = 0; i < half; ++i) CHECK(y2[i] == b.y(a, i));
  }

  SplitScreenParams still;
  still.max_shift = 0;
  const PairBatch s = gen_splitscreen_dots(still);
  CHECK(s.x == s.y);

  SplitScreenParams odd;
  odd.height = 13;
  CHECK_THROWS_AS(gen_splitscreen_dots(odd), ConfigError);
}

TEST_CASE("rotated pairs") {
  RotatedPairsParams p;
  p.num_pairs = 5;
  p.fixed_angle = 0.0;
  const PairBatch id = gen_rotated_pairs(p);
  CHECK(linalg::max_abs_diff(id.x.storage(), id.y.storage()) < 1e-12);

  // Point-symmetric pattern about the centre is invariant under a half turn.
  Vector sym(169, 0.0);
  for (auto [r, c] : {std::pair{6, 6}, {2, 3}, {10, 9}, {0, 12}, {12, 0}}) sym[static_cast<std::size_t>(r * 13 + c)] = 1.0;
  const Vector half_turn = rotate_image(sym, Shape{13, 13}, 3.141592653589793);
  CHECK(linalg::max_abs_diff(half_turn, sym) < 1e-12);

  // Quarter turn with nearest sampling is the exact permutation y[r][c] = x[n-1-c][r].
  p.fixed_angle = 3.141592653589793 / 2;
  p.interp = Interpolation::kNearest;
  p.width = p.height = 12;
  const PairBatch q = gen_rotated_pairs(p);
  for (std::size_t a = 0; a < q.size(); ++a)
    for (std::size_t r = 0; r < 12; ++r)
      for (std::size_t c = 0; c < 12; ++c) CHECK(q.y(a, r * 12 + c) == q.x(a, (11 - c) * 12 + r));

  RotatedPairsParams bad;
  bad.max_angle = 0.0;
  CHECK_THROWS_AS(gen_rotated_pairs(bad), ConfigError);
  bad.max_angle = 4.0;
  CHECK_THROWS_AS(gen_rotated_pairs(bad), ConfigError);

  RotatedPairsParams drawn;
  drawn.max_angle = 0.5;
  const PairBatch d = gen_rotated_pairs(drawn);
  for (std::size_t a = 0; a < d.size(); ++a) CHECK(std::abs(d.labels(a, 0)) <= 0.5);
}

TEST_CASE("dot movies") {
  DotMoviesParams p;
  CHECK(p.num_frames == 10);
  p.num_movies = 8;
  p.fixed_velocity = Shift{1, 0};
  const PairBatch b = gen_dot_movies(p);
  CHECK(b.input_dim() == 10 * 8 * 8);
  CHECK(b.x == b.y);
  const std::size_t fs = 64;
  for (std::size_t a = 0; a < b.size(); ++a) {
    const auto row = b.x.row(a);
    for (std::size_t t = 0; t < 10; ++t) {
      const Vector want = remap_oracle(row.subspan(0, fs), 8, 8, static_cast<int>(t), 0);
      CHECK(Vector(row.begin() + static_cast<std::ptrdiff_t>(t * fs),
                   row.begin() + static_cast<std::ptrdiff_t>((t + 1) * fs)) == want);
    }
    CHECK(b.labels(a, 2) == 1.0);
  }

  p.fixed_velocity = Shift{0, 0};
  const PairBatch still = gen_dot_movies(p);
  for (std::size_t t = 1; t < 10; ++t)
    for (std::size_t i = 0; i < fs; ++i) CHECK(still.x(0, t * fs + i) == still.x(0, i));

  p.num_frames = 1;
  CHECK_THROWS_AS(gen_dot_movies(p), ConfigError);
}

TEST_CASE("normalize") {
  PairBatch b;
  b.x = Matrix(2, 4);
  b.y = Matrix(2, 4);
  b.x_shape = b.y_shape = Shape{2, 2};
  for (std::size_t i = 0; i < 4; ++i) {
    b.x(0, i) = 3.0;  // constant
    b.y(0, i) = static_cast<double>(i);
    b.x(1, i) = static_cast<double>(i * i);
    b.y(1, i) = std::sin(static_cast<double>(i));
  }
  const PairBatch n = normalize(b);
  CHECK(n.degenerate[0] == 1);
  CHECK(n.degenerate[1] == 0);
  for (double v : n.x.row(0)) CHECK(v == 0.0);
  for (const Matrix* m : {&n.y, &n.x}) {
    const auto row = m->row(1);
    CHECK(std::abs(std::accumulate(row.begin(), row.end(), 0.0)) < 1e-12);
    CHECK(std::abs(linalg::norm(row) - 1.0) < 1e-12);
  }
  const PairBatch twice = normalize(n);
  CHECK(linalg::max_abs_diff(twice.x.storage(), n.x.storage()) < 1e-12);
  CHECK(linalg::max_abs_diff(twice.y.storage(), n.y.storage()) < 1e-12);

  PairBatch empty;
  CHECK_THROWS_AS(normalize(empty), DataError);
}

TEST_CASE("whitening of correlated 2-D Gaussian data") {
  Rng rng(42);
  std::normal_distribution<double> g(0.0, 1.0);
  PairBatch b;
  b.x = Matrix(5000, 2);
  b.y = Matrix(5000, 2);
  b.x_shape = b.y_shape = Shape{1, 2};
  for (Matrix* m : {&b.x, &b.y})
    for (std::size_t a = 0; a < 5000; ++a) {
      const double u = g(rng), v = g(rng);
      (*m)(a, 0) = 3.0 * u + 1.0;
      (*m)(a, 1) = 2.0 * u + 0.5 * v - 2.0;
    }
  const WhiteningTransform t = fit_whitening(b, 1.0);
  CHECK(t.output_dim() == 2);
  const Matrix pp = linalg::matmul(t.projection, t.inverse_projection);
  for (std::size_t r = 0; r < 2; ++r)
    for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(pp(r, c) - (r == c ? 1.0 : 0.0)) < 1e-8);

  // Sample-covariance oracle over all 10000 whitened samples.
  const PairBatch w = apply_whitening(b, t);
  double cov[2][2] = {};
  double mean[2] = {};
  for (const Matrix* m : {&w.x, &w.y})
    for (std::size_t a = 0; a < 5000; ++a)
      for (std::size_t i = 0; i < 2; ++i) mean[i] += (*m)(a, i) / 10000.0;
  for (const Matrix* m : {&w.x, &w.y})
    for (std::size_t a = 0; a < 5000; ++a)
      for (std::size_t i = 0; i < 2; ++i)
        for (std::size_t j = 0; j < 2; ++j) cov[i][j] += ((*m)(a, i) - mean[i]) * ((*m)(a, j) - mean[j]) / 10000.0;
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(std::abs(cov[i][j] - (i == j ? 1.0 : 0.0)) < 0.05);
}

TEST_CASE("whitening keeps the requested variance and reconstructs that energy") {
  Rng rng(8);
  std::normal_distribution<double> g(0.0, 1.0);
  PairBatch b;
  const std::size_t dim = 20, n = 2000;
  b.x = Matrix(n, dim);
  b.y = Matrix(n, dim);
  b.x_shape = b.y_shape = Shape{4, 5};
  for (Matrix* m : {&b.x, &b.y})
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t i = 0; i < dim; ++i) (*m)(a, i) = g(rng) * std::pow(0.8, static_cast<double>(i));
  const WhiteningTransform t = fit_whitening(b, 0.9);
  CHECK(t.output_dim() < dim);
  CHECK(t.retained_variance >= 0.9);

  double kept = 0.0, total = 0.0;
  for (const Matrix* m : {&b.x, &b.y})
    for (std::size_t a = 0; a < n; ++a) {
      const Vector back = unwhiten(whiten(m->row(a), t), t);
      for (std::size_t i = 0; i < dim; ++i) {
        kept += (back[i] - t.mean[i]) * (back[i] - t.mean[i]);
        total += ((*m)(a, i) - t.mean[i]) * ((*m)(a, i) - t.mean[i]);
      }
    }
  CHECK(std::abs(kept / total - t.retained_variance) < 0.01);
}

TEST_CASE("whitening errors and warnings") {
  PairBatch zeros;
  zeros.x = Matrix(10, 3);
  zeros.y = Matrix(10, 3);
  zeros.x_shape = zeros.y_shape = Shape{1, 3};
  CHECK_THROWS_AS(fit_whitening(zeros), DataError);

  std::vector<std::string> warnings;
  auto previous = set_warning_handler([&](const std::string& m) { warnings.push_back(m); });
  PairBatch few;
  few.x = Matrix(2, 9);
  few.y = Matrix(2, 9);
  few.x_shape = few.y_shape = Shape{3, 3};
  few.x(0, 0) = 1.0;
  few.y(1, 4) = 2.0;
  fit_whitening(few);
  set_warning_handler(previous);
  CHECK(warnings.size() == 1);
}

TEST_CASE("RELB container round trip and corruption detection") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    SplitScreenParams p;
    p.num_pairs = 7 + static_cast<std::size_t>(trial);
    p.seed = static_cast<std::uint64_t>(trial);
    const PairBatch b = gen_splitscreen_dots(p);
    const PairBatch back = decode_batch(encode_batch(b));
    CHECK(back.x == b.x);
    CHECK(back.y == b.y);
    CHECK(back.labels == b.labels);
    CHECK(back.label_kind == LabelKind::kSplitShift);
  }
  ShiftedDotsParams p;
  p.num_pairs = 3;
  std::string bytes = encode_batch(gen_shifted_dots(p));
  CHECK(bytes.substr(0, 4) == "RELB");
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_batch(bad), DataError);
  CHECK_THROWS_AS(decode_batch(bytes.substr(0, bytes.size() - 3)), DataError);
  CHECK_THROWS_AS(read_batch("/nonexistent/dir/batch.relb"), DataError);
}

TEST_CASE("binarize at median") {
  ShiftedDotsParams p;
  p.num_pairs = 4;
  const PairBatch b = normalize(gen_shifted_dots(p));
  const PairBatch bin = binarize_at_median(b);
  const PairBatch raw = gen_shifted_dots(p);
  CHECK(bin.x == raw.x);
  CHECK(bin.y == raw.y);
}
