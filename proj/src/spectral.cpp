// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/spectral.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "relate/errors.hpp"
#include "relate/log.hpp"
#include "relate/random.hpp"

namespace relate::spectral {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(m.rows()), static_cast<Eigen::Index>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(r, c) = m(r, c);
  return out;
}

std::size_t wrap(long v, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

}  // namespace

WarpMatrix make_cyclic_shift(std::size_t n, std::size_t s) {
  if (n == 0) throw ConfigError("cyclic shift: n must be positive");
  if (s >= n) throw ConfigError("cyclic shift: shift must lie in [0, n)");
  WarpMatrix w{Matrix(n, n), WarpKind::kCyclicShift};
  for (std::size_t i = 0; i < n; ++i) w.L((i + s) % n, i) = 1.0;
  return w;
}

WarpMatrix make_2d_shift(std::size_t h, std::size_t w, std::size_t sr, std::size_t sc) {
  if (h == 0 || w == 0) throw ConfigError("2-D shift: image dimensions must be positive");
  if (sr >= h || sc >= w) throw ConfigError("2-D shift: shifts must lie in [0, h) x [0, w)");
  WarpMatrix m{Matrix(h * w, h * w), WarpKind::kCyclicShift};
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) m.L(((r + sr) % h) * w + (c + sc) % w, r * w + c) = 1.0;
  return m;
}

WarpMatrix make_split_shift(std::size_t h, std::size_t w, datagen::Shift top, datagen::Shift bottom) {
  if (h == 0 || w == 0 || h % 2 != 0) throw ConfigError("split shift: height must be even and positive");
  const std::size_t half = h / 2;
  WarpMatrix m{Matrix(h * w, h * w), WarpKind::kPermutation};
  for (std::size_t r = 0; r < h; ++r) {
    const bool upper = r < half;
    const datagen::Shift s = upper ? top : bottom;
    const std::size_t base = upper ? 0 : half;
    for (std::size_t c = 0; c < w; ++c) {
      const std::size_t rr = base + wrap(static_cast<long>(r - base) + s.dy, half);
      const std::size_t cc = wrap(static_cast<long>(c) + s.dx, w);
      m.L(rr * w + cc, r * w + c) = 1.0;
    }
  }
  return m;
}

double orthogonality_error(const WarpMatrix& warp) {
  const Eigen::MatrixXd L = to_eigen(warp.L);
  const Eigen::MatrixXd g = L.transpose() * L - Eigen::MatrixXd::Identity(L.cols(), L.cols());
  return g.cwiseAbs().maxCoeff();
}

namespace {

// Modified Gram-Schmidt over the given columns, twice for stability.
// Columns that vanish are dropped.
std::vector<Eigen::VectorXcd> orthonormalize(std::vector<Eigen::VectorXcd> vs) {
  std::vector<Eigen::VectorXcd> out;
  for (auto& v : vs) {
    for (int pass = 0; pass < 2; ++pass)
      for (const auto& u : out) v -= u.dot(v) * u;
    const double n = v.norm();
    if (n > 1e-6) out.push_back(v / n);
  }
  return out;
}

// Fixes the global phase of a real eigenvector so it is real.
Eigen::VectorXcd realify(const Eigen::VectorXcd& v) {
  Eigen::Index k;
  v.cwiseAbs().maxCoeff(&k);
  const Complex phase = std::abs(v(k)) > 0 ? std::conj(v(k)) / std::abs(v(k)) : Complex(1.0);
  return v * phase;
}

double angle_key(Complex lambda) { return std::round(std::abs(std::arg(lambda)) * 1e9) / 1e9; }

}  // namespace

EigenStructure shared_eigenbasis(const std::vector<WarpMatrix>& warps, std::uint64_t seed) {
  if (warps.empty()) throw ConfigError("shared_eigenbasis: no warps given");
  const std::size_t n = warps.front().L.rows();
  std::vector<Eigen::MatrixXd> Ls;
  for (const auto& w : warps) {
    if (w.L.rows() != n || w.L.cols() != n) throw DimensionError("shared_eigenbasis: warps must be square and equal-sized");
    Ls.push_back(to_eigen(w.L));
  }
  for (std::size_t a = 0; a < Ls.size(); ++a)
    for (std::size_t b = a + 1; b < Ls.size(); ++b) {
      const double c = (Ls[a] * Ls[b] - Ls[b] * Ls[a]).cwiseAbs().maxCoeff();
      if (c >= 1e-8) {
        std::ostringstream msg;
        msg << "shared_eigenbasis: warps " << a << " and " << b << " do not commute (max |AB - BA| = " << c << ")";
        throw ConfigError(msg.str());
      }
    }

  Rng rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (const auto& L : Ls) M += normal(rng) * L;
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(M.cast<Complex>());
  if (solver.info() != Eigen::Success) throw NumericalError("shared_eigenbasis: eigendecomposition failed");
  const Eigen::VectorXcd mu = solver.eigenvalues();
  const Eigen::MatrixXcd vecs = solver.eigenvectors();
  const double tol = 1e-7 * std::max(1.0, mu.cwiseAbs().maxCoeff());

  // Units: a real eigenvector or a conjugate pair (v, v̄), in solver order.
  struct Unit {
    Eigen::VectorXcd v;
    bool pair;
  };
  std::vector<Unit> units;
  std::vector<bool> used(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    if (used[i]) continue;
    std::vector<std::size_t> cluster;
    for (std::size_t j = i; j < n; ++j)
      if (!used[j] && std::abs(mu(j) - mu(i)) < tol) cluster.push_back(j);
    std::vector<Eigen::VectorXcd> vs;
    for (std::size_t j : cluster) {
      used[j] = true;
      vs.push_back(vecs.col(static_cast<Eigen::Index>(j)));
    }
    if (std::abs(mu(i).imag()) < tol) {
      // Real eigenvalue: the eigenspace has a real orthonormal basis.
      std::vector<Eigen::VectorXcd> parts;
      for (const auto& v : vs) {
        parts.push_back(v.real().cast<Complex>());
        parts.push_back(v.imag().cast<Complex>());
      }
      auto basis = orthonormalize(parts);
      if (basis.size() < vs.size()) throw NumericalError("shared_eigenbasis: lost a real eigenvector");
      basis.resize(vs.size());
      for (auto& b : basis) units.push_back({realify(b), false});
    } else {
      // The conjugate cluster is replaced by the conjugates of this one.
      std::size_t partner_count = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (!used[j] && std::abs(mu(j) - std::conj(mu(i))) < tol) {
          used[j] = true;
          ++partner_count;
        }
      if (partner_count != vs.size()) throw NumericalError("shared_eigenbasis: unmatched conjugate eigenvalues");
      for (auto& b : orthonormalize(vs)) units.push_back({b, true});
    }
  }

  auto eigval = [&](const Eigen::VectorXcd& v, std::size_t w) -> Complex {
    return v.dot(Ls[w].cast<Complex>() * v);
  };
  // Within a pair, the member with positive angle under the first warp that
  // rotates it comes first.
  for (auto& u : units) {
    if (!u.pair) continue;
    for (std::size_t w = 0; w < Ls.size(); ++w) {
      const double a = std::arg(eigval(u.v, w));
      if (std::abs(a) > 1e-9 && std::abs(std::abs(a) - kPi) > 1e-9) {
        if (a < 0) u.v = u.v.conjugate();
        break;
      }
    }
  }
  std::vector<std::vector<double>> keys(units.size());
  for (std::size_t i = 0; i < units.size(); ++i)
    for (std::size_t w = 0; w < Ls.size(); ++w) keys[i].push_back(angle_key(eigval(units[i].v, w)));
  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return keys[a] < keys[b]; });

  EigenStructure out;
  out.U.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  Eigen::Index col = 0;
  for (std::size_t idx : order) {
    const Unit& u = units[idx];
    InvariantSubspace s;
    s.column = static_cast<std::size_t>(col);
    out.U.col(col++) = u.v;
    if (u.pair) {
      out.U.col(col++) = u.v.conjugate();
      s.real.resize(n);
      s.imag.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        s.real[i] = std::sqrt(2.0) * u.v(static_cast<Eigen::Index>(i)).real();
        s.imag[i] = std::sqrt(2.0) * u.v(static_cast<Eigen::Index>(i)).imag();
      }
    } else {
      s.real.resize(n);
      for (std::size_t i = 0; i < n; ++i) s.real[i] = u.v(static_cast<Eigen::Index>(i)).real();
    }
    out.subspaces.push_back(std::move(s));
  }
  for (std::size_t w = 0; w < Ls.size(); ++w) {
    Eigen::VectorXcd lambda(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < lambda.size(); ++i) lambda(i) = eigval(out.U.col(i), w);
    out.eigenvalues.push_back(lambda);
  }
  return out;
}

double diagonalization_residual(const EigenStructure& eig, const std::vector<WarpMatrix>& warps) {
  double worst = 0.0;
  for (const auto& w : warps) {
    Eigen::MatrixXcd D = eig.U.adjoint() * to_eigen(w.L).cast<Complex>() * eig.U;
    D.diagonal().setZero();
    worst = std::max(worst, D.cwiseAbs().maxCoeff());
  }
  return worst;
}

DetectorBank make_detector_bank(const EigenStructure& eig, std::span<const double> thetas) {
  return make_detector_bank(eig.subspaces, thetas);
}

DetectorBank make_detector_bank(std::span<const InvariantSubspace> subspaces, std::span<const double> thetas) {
  if (subspaces.empty()) throw ConfigError("detector bank: no subspaces");
  const std::size_t n = subspaces.front().real.size();
  std::size_t D = 0;
  for (const auto& s : subspaces) {
    if (s.real.size() != n || (s.is_pair() && s.imag.size() != n))
      throw DimensionError("detector bank: subspaces differ in dimension");
    if (s.is_pair()) D += thetas.size();
  }
  if (D == 0) throw ConfigError("detector bank: needs at least one 2-D subspace and one angle");
  DetectorBank bank;
  bank.U = Matrix(2 * D, n);
  bank.V = Matrix(2 * D, n);
  bank.P = Matrix(D, 2 * D);
  bank.W_pool = Matrix(D, D);
  std::size_t d = 0;
  for (std::size_t si = 0; si < subspaces.size(); ++si) {
    const auto& s = subspaces[si];
    if (!s.is_pair()) continue;
    for (double theta : thetas) {
      const double c = std::cos(theta), sn = std::sin(theta);
      for (std::size_t i = 0; i < n; ++i) {
        bank.U(2 * d, i) = s.real[i];
        bank.U(2 * d + 1, i) = s.imag[i];
        bank.V(2 * d, i) = c * s.real[i] - sn * s.imag[i];
        bank.V(2 * d + 1, i) = sn * s.real[i] + c * s.imag[i];
      }
      bank.P(d, 2 * d) = bank.P(d, 2 * d + 1) = 1.0;
      bank.W_pool(d, d) = 1.0;
      bank.theta.push_back(theta);
      bank.subspace.push_back(si);
      ++d;
    }
  }
  return bank;
}

namespace {

void check_inputs(const DetectorBank& bank, std::span<const double> x, std::span<const double> y) {
  if (x.size() != bank.U.cols() || y.size() != bank.U.cols())
    throw DimensionError("detector_response: input dimension does not match the bank");
  for (auto v : {x, y}) {
    const double sum = std::accumulate(v.begin(), v.end(), 0.0);
    if (std::abs(sum) > 1e-6 * std::max(1.0, linalg::norm(v)) * std::sqrt(static_cast<double>(v.size()))) {
      warn("detector_response: input is not contrast-normalized (non-zero mean)");
      return;
    }
  }
}

}  // namespace

DetectorResponse detector_response(const DetectorBank& bank, std::span<const double> x, std::span<const double> y) {
  check_inputs(bank, x, y);
  const std::size_t rows = bank.U.rows();
  Vector vx(rows), uy(rows), prod(rows);
  linalg::gemv(bank.V, x, vx);
  linalg::gemv(bank.U, y, uy);
  linalg::mul(vx, uy, prod);
  DetectorResponse out{Vector(bank.size()), Vector(bank.W_pool.cols())};
  linalg::gemv(bank.P, prod, out.r);
  linalg::gemv_t(bank.W_pool, out.r, out.t);
  return out;
}

EnergyDetectorResponse energy_detector_response(const DetectorBank& bank, std::span<const double> x,
                                                std::span<const double> y) {
  check_inputs(bank, x, y);
  const std::size_t rows = bank.U.rows(), D = bank.size();
  Vector vx(rows), uy(rows);
  linalg::gemv(bank.V, x, vx);
  linalg::gemv(bank.U, y, uy);
  EnergyDetectorResponse out{Vector(D), Vector(D), Vector(D)};
  for (std::size_t d = 0; d < D; ++d) {
    const double a0 = uy[2 * d], a1 = uy[2 * d + 1], b0 = vx[2 * d], b1 = vx[2 * d + 1];
    out.energy[d] = (a0 + b0) * (a0 + b0) + (a1 + b1) * (a1 + b1);
    out.cross[d] = a0 * b0 + a1 * b1;
    out.quadratic[d] = a0 * a0 + a1 * a1 + b0 * b0 + b1 * b1;
  }
  return out;
}

DiagnosticsReport filter_diagnostics(const Matrix& filters, const EigenStructure& reference) {
  const std::size_t n = reference.dim();
  if (filters.rows() != n) throw DimensionError("filter_diagnostics: filter length does not match the reference");
  const std::size_t F = filters.cols();
  DiagnosticsReport rep;
  rep.filters.resize(F);
  rep.histogram.assign(10, 0);
  std::vector<std::array<double, 2>> proj(F);
  for (std::size_t f = 0; f < F; ++f) {
    const Vector w = filters.col(f);
    const double total = linalg::dot(w, w);
    FilterScore& s = rep.filters[f];
    for (std::size_t k = 0; k < reference.subspaces.size(); ++k) {
      const auto& sub = reference.subspaces[k];
      const double a = linalg::dot(sub.real, w);
      const double b = sub.is_pair() ? linalg::dot(sub.imag, w) : 0.0;
      const double frac = total > 0 ? (a * a + b * b) / total : 0.0;
      if (frac > s.fraction) {
        s.fraction = frac;
        s.best_subspace = k;
        proj[f] = {a, b};
      }
    }
    rep.histogram[std::min<std::size_t>(9, static_cast<std::size_t>(s.fraction * 10.0))]++;
    rep.mean_fraction += s.fraction / static_cast<double>(F);
  }
  for (std::size_t f = 0; f < F; ++f) {
    for (std::size_t g = 0; g < F; ++g) {
      if (g == f || rep.filters[g].best_subspace != rep.filters[f].best_subspace) continue;
      const double nf = std::hypot(proj[f][0], proj[f][1]), ng = std::hypot(proj[g][0], proj[g][1]);
      if (nf == 0 || ng == 0) continue;
      const double sine = std::abs(proj[f][0] * proj[g][1] - proj[f][1] * proj[g][0]) / (nf * ng);
      rep.filters[f].quadrature = std::max(rep.filters[f].quadrature, sine);
    }
    rep.mean_quadrature += rep.filters[f].quadrature / static_cast<double>(F);
  }
  if (!reference.eigenvalues.empty())
    for (Eigen::Index i = 0; i < reference.eigenvalues.front().size(); ++i)
      rep.eigenvalue_angles.push_back(std::arg(reference.eigenvalues.front()(i)));
  return rep;
}

std::string DiagnosticsReport::to_json() const {
  nlohmann::json j;
  j["num_filters"] = filters.size();
  j["mean_fraction"] = mean_fraction;
  j["mean_quadrature"] = mean_quadrature;
  j["histogram"] = histogram;
  j["eigenvalue_angles"] = eigenvalue_angles;
  auto& arr = j["filters"] = nlohmann::json::array();
  for (const auto& f : filters)
    arr.push_back({{"best_subspace", f.best_subspace}, {"fraction", f.fraction}, {"quadrature", f.quadrature}});
  return j.dump(2);
}

std::string DiagnosticsReport::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "filter,best_subspace,fraction,quadrature\n";
  for (std::size_t f = 0; f < filters.size(); ++f)
    out << f << ',' << filters[f].best_subspace << ',' << filters[f].fraction << ',' << filters[f].quadrature << '\n';
  return out.str();
}

namespace {

std::vector<Complex> dft2(std::span<const double> image, datagen::Shape shape) {
  const std::size_t h = shape.height, w = shape.width;
  if (image.size() != h * w) throw DimensionError("dft: image size does not match shape");
  // Rows first, then columns.
  std::vector<Complex> tmp(h * w), out(h * w);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t v = 0; v < w; ++v) {
      Complex s = 0;
      for (std::size_t c = 0; c < w; ++c) s += image[r * w + c] * std::polar(1.0, -2.0 * kPi * double(v * c % w) / double(w));
      tmp[r * w + v] = s;
    }
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      Complex s = 0;
      for (std::size_t r = 0; r < h; ++r) s += tmp[r * w + v] * std::polar(1.0, -2.0 * kPi * double(u * r % h) / double(h));
      out[u * w + v] = s;
    }
  return out;
}

}  // namespace

Vector dft_power(std::span<const double> image, datagen::Shape shape) {
  const auto c = dft2(image, shape);
  Vector p(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) p[i] = std::norm(c[i]);
  return p;
}

double dft_concentration(std::span<const double> image, datagen::Shape shape) {
  const Vector p = dft_power(image, shape);
  const double total = std::accumulate(p.begin(), p.end(), 0.0);
  if (!(total > 0.0)) return 0.0;
  const std::size_t h = shape.height, w = shape.width;
  double best = 0.0;
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      const std::size_t conj = ((h - u) % h) * w + (w - v) % w;
      const std::size_t self = u * w + v;
      best = std::max(best, p[self] + (conj == self ? 0.0 : p[conj]));
    }
  return best / total;
}

PhaseDrift phase_drift(std::span<const double> filter, datagen::Shape frame, std::size_t frames) {
  if (frames < 2 || filter.size() != frames * frame.size())
    throw DimensionError("phase_drift: filter is not frames x frame size");
  std::vector<std::vector<Complex>> coeffs;
  Vector power(frame.size(), 0.0);
  for (std::size_t t = 0; t < frames; ++t) {
    coeffs.push_back(dft2(filter.subspan(t * frame.size(), frame.size()), frame));
    for (std::size_t i = 0; i < power.size(); ++i) power[i] += std::norm(coeffs.back()[i]);
  }
  power[0] = -1.0;  // the DC term carries no phase drift
  const std::size_t k = static_cast<std::size_t>(std::max_element(power.begin(), power.end()) - power.begin());
  PhaseDrift out;
  out.freq_u = k / frame.width;
  out.freq_v = k % frame.width;
  for (std::size_t t = 0; t < frames; ++t) {
    double ph = std::arg(coeffs[t][k]);
    if (t > 0) {
      while (ph - out.phases.back() > kPi) ph -= 2 * kPi;
      while (ph - out.phases.back() < -kPi) ph += 2 * kPi;
    }
    out.phases.push_back(ph);
  }
  const double T = static_cast<double>(frames);
  const double tm = (T - 1) / 2.0;
  const double pm = std::accumulate(out.phases.begin(), out.phases.end(), 0.0) / T;
  double stt = 0, stp = 0, spp = 0;
  for (std::size_t t = 0; t < frames; ++t) {
    const double dt = double(t) - tm, dp = out.phases[t] - pm;
    stt += dt * dt;
    stp += dt * dp;
    spp += dp * dp;
  }
  out.slope = stp / stt;
  if (spp > 1e-12) out.r_squared = (stp * stp) / (stt * spp);
  return out;
}

}  // namespace relate::spectral
