// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "doctest.h"
#include "json.hpp"
#include "relate/datagen.hpp"
#include "relate/errors.hpp"
#include "relate/log.hpp"
#include "relate/spectral.hpp"
#include "test_util.hpp"

using namespace relate;
using namespace relate::spectral;
using relate::testing::gaussian_vector;

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<WarpMatrix> all_shifts(std::size_t n) {
  std::vector<WarpMatrix> w;
  for (std::size_t s = 0; s < n; ++s) w.push_back(make_cyclic_shift(n, s));
  return w;
}

// Orthogonal projector onto the span of the given real unit vectors.
Eigen::MatrixXd projector(const std::vector<Vector>& basis, std::size_t n) {
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
  for (const auto& b : basis) {
    const Eigen::Map<const Eigen::VectorXd> v(b.data(), static_cast<Eigen::Index>(n));
    P += v * v.transpose();
  }
  return P;
}

std::vector<Vector> dft_subspace(std::size_t n, std::size_t k) {
  Vector re(n), im(n);
  for (std::size_t i = 0; i < n; ++i) {
    re[i] = std::cos(2 * kPi * double(k * i) / double(n));
    im[i] = std::sin(2 * kPi * double(k * i) / double(n));
  }
  std::vector<Vector> out;
  for (Vector* v : {&re, &im}) {
    const double norm = linalg::norm(*v);
    if (norm < 1e-9) continue;
    linalg::scale(1.0 / norm, *v);
    out.push_back(*v);
  }
  return out;
}

std::vector<Vector> basis_of(const InvariantSubspace& s) {
  std::vector<Vector> b{s.real};
  if (s.is_pair()) b.push_back(s.imag);
  return b;
}

Vector in_subspace(const InvariantSubspace& s, double rho, double phi) {
  Vector v(s.real.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = rho * (std::cos(phi) * s.real[i] + std::sin(phi) * s.imag[i]);
  return v;
}

// Silences the non-normalized-input warning for tests feeding raw vectors.
struct QuietWarnings {
  WarningHandler prev = set_warning_handler([](const std::string&) {});
  ~QuietWarnings() { set_warning_handler(prev); }
};

}  // namespace

TEST_CASE("cyclic shift warps") {
  const WarpMatrix id = make_cyclic_shift(5, 0);
  for (std::size_t r = 0; r < 5; ++r)
    for (std::size_t c = 0; c < 5; ++c) CHECK(id.L(r, c) == (r == c ? 1.0 : 0.0));

  const Matrix twice = linalg::matmul(make_cyclic_shift(4, 1).L, make_cyclic_shift(4, 1).L);
  CHECK(twice == make_cyclic_shift(4, 2).L);
  CHECK(orthogonality_error(make_cyclic_shift(7, 3)) == 0.0);

  // Eigenvalues of the n = 4, s = 1 shift are the fourth roots of unity.
  const EigenStructure e = shared_eigenbasis({make_cyclic_shift(4, 1)});
  std::vector<Complex> want{{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
  for (Complex w : want) {
    bool found = false;
    for (Eigen::Index i = 0; i < 4; ++i) found |= std::abs(e.eigenvalues[0](i) - w) < 1e-10;
    CHECK(found);
  }
  CHECK_THROWS_AS(make_cyclic_shift(4, 4), ConfigError);
  CHECK_THROWS_AS(make_2d_shift(3, 3, 0, 3), ConfigError);
}

TEST_CASE("2-D and split shifts agree with the image generators") {
  const datagen::Shape shape{6, 5};
  const Vector img = datagen::random_dots(shape, 0.4, 3);
  for (int dy = 0; dy < 6; ++dy)
    for (int dx = 0; dx < 5; ++dx) {
      const WarpMatrix w = make_2d_shift(6, 5, dy, dx);
      CHECK(w.apply(img) == datagen::shift_image(img, shape, {dx, dy}, datagen::EdgeMode::kWrap));
    }
  const datagen::Shift top{1, -1}, bottom{-2, 1};
  CHECK(make_split_shift(6, 5, top, bottom).apply(img) == datagen::split_shift_image(img, shape, top, bottom));
}

TEST_CASE("shared eigenbasis of all cyclic shifts is the DFT basis") {
  const std::size_t n = 8;
  const auto warps = all_shifts(n);
  const EigenStructure e = shared_eigenbasis(warps);
  CHECK(diagonalization_residual(e, warps) < 1e-6);

  // Unitary, eigenvalues on the unit circle, L = U D U*.
  CHECK((e.U.adjoint() * e.U - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-10);
  for (std::size_t w = 0; w < n; ++w) {
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) CHECK(std::abs(std::abs(e.eigenvalues[w](i)) - 1.0) < 1e-10);
    const Eigen::MatrixXcd rebuilt = e.U * e.eigenvalues[w].asDiagonal() * e.U.adjoint();
    double worst = 0;
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) worst = std::max(worst, std::abs(rebuilt(r, c) - warps[w].L(r, c)));
    CHECK(worst < 1e-8);
  }

  // Every DFT frequency pair appears as one invariant subspace.
  CHECK(e.subspaces.size() == n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const Eigen::MatrixXd want = projector(dft_subspace(n, k), n);
    double best = 1e9;
    for (const auto& s : e.subspaces) best = std::min(best, (projector(basis_of(s), n) - want).cwiseAbs().maxCoeff());
    INFO("frequency " << k);
    CHECK(best < 1e-6);
  }

  // Subspace vectors are unit length and orthogonal.
  for (const auto& s : e.subspaces) {
    CHECK(std::abs(linalg::norm(s.real) - 1.0) < 1e-12);
    if (s.is_pair()) {
      CHECK(std::abs(linalg::norm(s.imag) - 1.0) < 1e-12);
      CHECK(std::abs(linalg::dot(s.real, s.imag)) < 1e-12);
    }
  }
}

TEST_CASE("shared eigenbasis edge cases") {
  SUBCASE("identity alone") {
    const EigenStructure e = shared_eigenbasis({make_cyclic_shift(5, 0)});
    for (Eigen::Index i = 0; i < 5; ++i) CHECK(std::abs(e.eigenvalues[0](i) - Complex(1.0)) < 1e-12);
    CHECK((e.U.adjoint() * e.U - Eigen::MatrixXcd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(e.subspaces.size() == 5);
  }
  SUBCASE("non-commuting input names the pair") {
    WarpMatrix swap{Matrix(4, 4), WarpKind::kPermutation};
    swap.L(0, 1) = swap.L(1, 0) = swap.L(2, 2) = swap.L(3, 3) = 1.0;
    try {
      shared_eigenbasis({make_cyclic_shift(4, 0), make_cyclic_shift(4, 1), swap});
      FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
      CHECK(std::string(err.what()).find("warps 1 and 2") != std::string::npos);
    }
  }
  SUBCASE("split-screen shifts give a block DFT per half") {
    const std::size_t h = 4, w = 4, half = 8;
    std::vector<WarpMatrix> warps;
    for (int dx = 0; dx < 4; ++dx)
      for (int dy = 0; dy < 2; ++dy) {
        warps.push_back(make_split_shift(h, w, {dx, dy}, {0, 0}));
        warps.push_back(make_split_shift(h, w, {0, 0}, {dx, dy}));
      }
    const EigenStructure e = shared_eigenbasis(warps);
    CHECK(diagonalization_residual(e, warps) < 1e-6);
    for (const auto& s : e.subspaces) {
      double top = 0, bottom = 0;
      for (const auto& v : basis_of(s))
        for (std::size_t i = 0; i < 16; ++i) (i < half ? top : bottom) += v[i] * v[i];
      CHECK(std::min(top, bottom) < 1e-12);
      // Within its half, each vector is a single 2-D DFT frequency.
      const std::size_t off = top > bottom ? 0 : half;
      const Vector part(s.real.begin() + off, s.real.begin() + off + half);
      CHECK(dft_concentration(part, {2, 4}) > 1.0 - 1e-9);
    }
  }
}

TEST_CASE("rotation detectors") {
  QuietWarnings quiet;
  const std::size_t n = 8;
  const EigenStructure e = shared_eigenbasis(all_shifts(n));
  const InvariantSubspace& s = e.subspaces[1];
  REQUIRE(s.is_pair());
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> angle(-kPi, kPi), radius(0.2, 2.0);

  SUBCASE("V is U rotated by theta") {
    const std::vector<double> thetas{0.0, 0.7, -2.1};
    const DetectorBank bank = make_detector_bank(e, thetas);
    for (std::size_t d = 0; d < bank.size(); ++d) {
      const Complex rot = std::polar(1.0, bank.theta[d]);
      for (std::size_t i = 0; i < n; ++i) {
        const Complex u(bank.U(2 * d, i), bank.U(2 * d + 1, i));
        const Complex v(bank.V(2 * d, i), bank.V(2 * d + 1, i));
        CHECK(std::abs(v - rot * u) < 1e-12);
      }
    }
  }
  SUBCASE("matched and opposite rotations") {
    const double theta = 0.9;
    const DetectorBank bank = make_detector_bank(std::span(&s, 1), std::vector<double>{theta});
    const double phi = 0.3;
    const Vector x = in_subspace(s, 1.0, phi);
    CHECK(detector_response(bank, x, in_subspace(s, 1.0, phi + theta)).r[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(detector_response(bank, x, in_subspace(s, 1.0, phi + theta + kPi)).r[0] ==
          doctest::Approx(-1.0).epsilon(1e-12));
  }
  SUBCASE("random in-subspace pairs follow the complex-plane formula") {
    for (int t = 0; t < 50; ++t) {
      const double theta = angle(rng), px = angle(rng), py = angle(rng), rx = radius(rng), ry = radius(rng);
      const DetectorBank bank = make_detector_bank(std::span(&s, 1), std::vector<double>{theta});
      const Complex cx = std::polar(rx, px), cy = std::polar(ry, py);
      const double want = (cy * std::conj(cx) * std::polar(1.0, -theta)).real();
      const DetectorResponse r = detector_response(bank, in_subspace(s, rx, px), in_subspace(s, ry, py));
      CHECK(r.r[0] == doctest::Approx(want).epsilon(1e-12));
      CHECK(r.t[0] == doctest::Approx(want).epsilon(1e-12));
    }
  }
  SUBCASE("Cauchy-Schwarz bound and aperture") {
    std::vector<double> thetas;
    for (int m = 0; m < 36; ++m) thetas.push_back(2 * kPi * m / 36);
    const DetectorBank bank = make_detector_bank(std::span(&s, 1), thetas);
    for (int t = 0; t < 20; ++t) {
      const Vector x = gaussian_vector(n, rng), y = gaussian_vector(n, rng);
      const double px = std::hypot(linalg::dot(s.real, x), linalg::dot(s.imag, x));
      const double py = std::hypot(linalg::dot(s.real, y), linalg::dot(s.imag, y));
      for (double r : detector_response(bank, x, y).r) CHECK(std::abs(r) <= px * py * (1 + 1e-12));
    }
    // x built from the other subspaces only: the detector stays silent.
    Vector x(n, 0.0);
    for (std::size_t k = 0; k < e.subspaces.size(); ++k) {
      if (&e.subspaces[k] == &s) continue;
      linalg::axpy(radius(rng), e.subspaces[k].real, x);
    }
    for (double r : detector_response(bank, x, gaussian_vector(n, rng)).r) CHECK(std::abs(r) < 1e-12);
  }
  SUBCASE("peak angle equals the shift phase for every frequency and shift") {
    std::vector<double> thetas;
    for (int m = 0; m < 360; ++m) thetas.push_back(2 * kPi * m / 360);
    for (const auto& sub : e.subspaces) {
      if (!sub.is_pair()) continue;
      // Frequency of this subspace's representative v ∝ e^{2πi k i / n}.
      const Complex ratio(sub.real[1] * sub.real[0] + sub.imag[1] * sub.imag[0],
                          sub.imag[1] * sub.real[0] - sub.real[1] * sub.imag[0]);
      const long k = std::lround(std::arg(ratio) * n / (2 * kPi));
      const DetectorBank bank = make_detector_bank(std::span(&sub, 1), thetas);
      for (std::size_t sh = 0; sh < n; ++sh) {
        const Vector x = in_subspace(sub, 1.0, angle(rng));
        const Vector y = make_cyclic_shift(n, sh).apply(x);
        const Vector r = detector_response(bank, x, y).r;
        const auto peak = std::max_element(r.begin(), r.end()) - r.begin();
        const long want = ((k * static_cast<long>(sh) * 360 / static_cast<long>(n)) % 360 + 360) % 360;
        CHECK(peak == want);
      }
    }
  }
  SUBCASE("energy detector: identity, maximum and matching peak") {
    std::vector<double> thetas;
    for (int m = 0; m < 360; ++m) thetas.push_back(2 * kPi * m / 360);
    const DetectorBank bank = make_detector_bank(std::span(&s, 1), thetas);
    for (int t = 0; t < 10; ++t) {
      const Vector x = gaussian_vector(n, rng), y = gaussian_vector(n, rng);
      const EnergyDetectorResponse en = energy_detector_response(bank, x, y);
      const Vector r = detector_response(bank, x, y).r;
      for (std::size_t d = 0; d < bank.size(); ++d) {
        CHECK(std::abs(en.energy[d] - (2 * en.cross[d] + en.quadratic[d])) < 1e-12);
        CHECK(std::abs(en.cross[d] - r[d]) < 1e-12);
      }
    }
    const Vector x = in_subspace(s, 1.0, 0.4);
    const Vector y = in_subspace(s, 1.0, 0.4 + thetas[50]);
    const EnergyDetectorResponse en = energy_detector_response(bank, x, y);
    const auto peak = std::max_element(en.energy.begin(), en.energy.end()) - en.energy.begin();
    CHECK(peak == 50);
    CHECK(en.energy[50] == doctest::Approx(4.0).epsilon(1e-12));
  }
}

TEST_CASE("filter diagnostics") {
  const std::size_t n = 13;
  const EigenStructure e = shared_eigenbasis(all_shifts(n));
  SUBCASE("eigenfeatures score 1 and pair in quadrature") {
    Matrix f(n, 4);
    f.set_col(0, e.subspaces[2].real);
    f.set_col(1, e.subspaces[2].imag);
    f.set_col(2, e.subspaces[3].real);
    f.set_col(3, e.subspaces[3].real);
    const DiagnosticsReport rep = filter_diagnostics(f, e);
    for (const auto& s : rep.filters) CHECK(s.fraction == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.filters[0].quadrature == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rep.filters[2].quadrature < 1e-12);
    CHECK(rep.histogram[9] == 4);
  }
  SUBCASE("random filters match the Monte-Carlo null") {
    const std::size_t N = 169;
    const EigenStructure big = shared_eigenbasis({make_2d_shift(13, 13, 0, 1), make_2d_shift(13, 13, 1, 0)});
    std::mt19937_64 rng(11);
    Matrix f(N, 200);
    fill_gaussian(f, 1.0, rng);
    const DiagnosticsReport rep = filter_diagnostics(f, big);
    // Null: the best of 84 two-dimensional and one one-dimensional
    // projections of an isotropic vector in 169 dimensions.
    std::normal_distribution<double> g;
    double null_mean = 0.0;
    const int trials = 4000;
    for (int t = 0; t < trials; ++t) {
      double total = 0, best = 0;
      for (std::size_t k = 0; k < 84; ++k) {
        const double a = g(rng), b = g(rng);
        total += a * a + b * b;
        best = std::max(best, a * a + b * b);
      }
      const double c = g(rng);
      total += c * c;
      null_mean += std::max(best, c * c) / total / trials;
    }
    MESSAGE("random filters: mean best fraction " << rep.mean_fraction << ", null " << null_mean);
    CHECK(std::abs(rep.mean_fraction - null_mean) < 0.1 * null_mean);
    // Energy in any one fixed subspace averages 2/169.
    double fixed = 0.0;
    for (std::size_t c = 0; c < f.cols(); ++c) {
      const Vector w = f.col(c);
      fixed += (std::pow(linalg::dot(big.subspaces[5].real, w), 2) + std::pow(linalg::dot(big.subspaces[5].imag, w), 2)) /
               linalg::dot(w, w) / double(f.cols());
    }
    CHECK(fixed < 0.05);
    CHECK(std::abs(fixed - 2.0 / 169.0) < 0.006);
  }
  SUBCASE("report serialization") {
    Matrix f(n, 3);
    std::mt19937_64 rng(2);
    fill_gaussian(f, 1.0, rng);
    const DiagnosticsReport rep = filter_diagnostics(f, e);
    const auto j = nlohmann::json::parse(rep.to_json());
    CHECK(j["num_filters"] == 3);
    CHECK(j["filters"].size() == 3);
    CHECK(j["histogram"].size() == 10);
    CHECK(j["eigenvalue_angles"].size() == n);
    const std::string csv = rep.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
    CHECK_THROWS_AS(filter_diagnostics(Matrix(n + 1, 2), e), DimensionError);
  }
}

TEST_CASE("DFT helpers") {
  const datagen::Shape shape{6, 8};
  Vector img(shape.size());
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 8; ++c) img[r * 8 + c] = std::cos(2 * kPi * (2.0 * r / 6 + 3.0 * c / 8) + 0.4);
  CHECK(dft_concentration(img, shape) == doctest::Approx(1.0).epsilon(1e-12));

  // A grating drifting by 1 column per frame: phase moves by -2π·3/8 per frame.
  const std::size_t T = 6;
  Vector movie;
  for (std::size_t t = 0; t < T; ++t) {
    const Vector frame = datagen::shift_image(img, shape, {static_cast<int>(t), 0}, datagen::EdgeMode::kWrap);
    movie.insert(movie.end(), frame.begin(), frame.end());
  }
  const PhaseDrift d = phase_drift(movie, shape, T);
  CHECK(d.r_squared == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(std::abs(d.slope) - 2 * kPi * 3 / 8) < 1e-9);

  Vector still;
  for (std::size_t t = 0; t < T; ++t) still.insert(still.end(), img.begin(), img.end());
  CHECK(phase_drift(still, shape, T).r_squared == 0.0);
}
