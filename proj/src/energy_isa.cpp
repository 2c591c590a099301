// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/energy_isa.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "relate/errors.hpp"
#include "relate/log.hpp"
#include "relate/parallel.hpp"
#include "relate/random.hpp"

namespace relate::isa {

using datagen::PairBatch;

namespace {

constexpr std::size_t kChunk = 16;

// Filter responses w_fᵀ[x; y], split into the x part a and the y part b.
void responses(const EnergyModel& m, std::span<const double> x, std::span<const double> y, Vector& a, Vector& b) {
  const std::size_t F = m.factors(), I = m.input_dim;
  a.assign(F, 0.0);
  b.assign(F, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    if (x[i] != 0.0) linalg::axpy(x[i], m.filters.row(i), a);
  for (std::size_t j = 0; j < y.size(); ++j)
    if (y[j] != 0.0) linalg::axpy(y[j], m.filters.row(I + j), b);
}

void check_dims(const EnergyModel& m, std::size_t I, std::size_t J) {
  if (I != m.input_dim || J != m.output_dim())
    throw DimensionError("energy model: input dimensions do not match the filters");
}

}  // namespace

void EnergyModel::validate() const {
  if (input_dim > filters.rows()) throw DimensionError("energy model: input_dim exceeds filter rows");
  if (pooling.cols() != filters.cols()) throw DimensionError("energy model: pooling and filters disagree on F");
  if (bias_z.size() != pooling.rows()) throw DimensionError("energy model: bias_z length must equal K");
  if (!linalg::all_finite(filters.storage()) || !linalg::all_finite(pooling.storage()) ||
      !linalg::all_finite(bias_z))
    throw NumericalError("energy model: non-finite parameter");
  for (double v : pooling.storage())
    if (v < 0.0) throw ConfigError("energy model: pooling weights must be non-negative");
}

Matrix block_pooling(std::size_t factors, std::size_t subspace_size) {
  if (subspace_size == 0 || factors % subspace_size != 0)
    throw ConfigError("factor count must be a multiple of the subspace size");
  Matrix p(factors / subspace_size, factors);
  for (std::size_t f = 0; f < factors; ++f) p(f / subspace_size, f) = 1.0;
  return p;
}

EnergyModel init_energy_model(std::size_t I, std::size_t J, std::size_t F, std::size_t subspace_size,
                              std::uint64_t seed) {
  if (I == 0 || J == 0 || F == 0) throw ConfigError("energy model dimensions must be positive");
  if (F > I + J) throw ConfigError("energy model: more factors than input dimensions cannot be orthonormal");
  EnergyModel m;
  m.input_dim = I;
  m.filters = Matrix(I + J, F);
  Rng rng(seed);
  fill_gaussian(m.filters, 1.0, rng);
  symmetric_orthonormalize(m.filters);
  m.pooling = block_pooling(F, subspace_size);
  m.bias_z.assign(m.pooling.rows(), 0.0);
  return m;
}

Vector energy_response(const EnergyModel& m, std::span<const double> x, std::span<const double> y) {
  check_dims(m, x.size(), y.size());
  Vector a, b;
  responses(m, x, y, a, b);
  for (std::size_t f = 0; f < a.size(); ++f) a[f] = (a[f] + b[f]) * (a[f] + b[f]);
  Vector z(m.code_dim());
  linalg::gemv(m.pooling, a, z);
  linalg::axpy(1.0, m.bias_z, z);
  return z;
}

EnergyExpansion expand_energy(const EnergyModel& m, std::span<const double> x, std::span<const double> y) {
  check_dims(m, x.size(), y.size());
  Vector a, b;
  responses(m, x, y, a, b);
  const std::size_t F = a.size();
  Vector ab(F), sq(F);
  for (std::size_t f = 0; f < F; ++f) {
    ab[f] = a[f] * b[f];
    sq[f] = a[f] * a[f] + b[f] * b[f];
  }
  EnergyExpansion e{Vector(m.code_dim()), Vector(m.code_dim())};
  linalg::gemv(m.pooling, ab, e.cross);
  linalg::gemv(m.pooling, sq, e.quadratic);
  return e;
}

FactoredParams to_factored(const EnergyModel& m) {
  m.validate();
  const std::size_t I = m.input_dim, J = m.output_dim(), F = m.factors();
  FactoredParams p = FactoredParams::zeros(I, J, m.code_dim(), F);
  std::copy_n(m.filters.data(), I * F, p.wx.data());
  std::copy_n(m.filters.data() + I * F, J * F, p.wy.data());
  p.wz = m.pooling;
  p.bias_z = m.bias_z;
  return p;
}

EnergyModel from_factored(const FactoredParams& p) {
  p.validate();
  EnergyModel m;
  m.input_dim = p.input_dim();
  m.filters = Matrix(p.input_dim() + p.output_dim(), p.factors());
  std::copy(p.wx.storage().begin(), p.wx.storage().end(), m.filters.data());
  std::copy(p.wy.storage().begin(), p.wy.storage().end(), m.filters.data() + p.wx.size());
  m.pooling = p.wz;
  m.bias_z = p.bias_z;
  m.validate();
  return m;
}

void write_isa_checkpoint(const std::string& path, const EnergyModel& model) {
  write_checkpoint(path, to_factored(model));
}

EnergyModel read_isa_checkpoint(const std::string& path) {
  try {
    return from_factored(read_checkpoint(path));
  } catch (const ConfigError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void IsaConfig::validate() const {
  if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
}

void symmetric_orthonormalize(Matrix& w) {
  const auto D = static_cast<Eigen::Index>(w.rows());
  const auto F = static_cast<Eigen::Index>(w.cols());
  if (F > D) throw ConfigError("cannot orthonormalize more columns than rows");
  Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(w.data(), D, F);
  const Eigen::MatrixXd gram = W.transpose() * W;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::VectorXd& values = eig.eigenvalues();
  if (!(values.minCoeff() > 1e-12 * std::max(1.0, values.maxCoeff())))
    throw NumericalError("orthonormalization: filters are rank deficient");
  const Eigen::MatrixXd inv_sqrt =
      eig.eigenvectors() * values.cwiseSqrt().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
  const Eigen::MatrixXd result = W * inv_sqrt;
  W = result;
}

double isa_objective(const EnergyModel& m, const PairBatch& batch, double epsilon) {
  check_dims(m, batch.input_dim(), batch.output_dim());
  double total = 0.0;
  for (std::size_t a = 0; a < batch.size(); ++a)
    for (double z : energy_response(m, batch.x.row(a), batch.y.row(a))) total += std::sqrt(epsilon + z);
  return total / static_cast<double>(batch.size());
}

bool looks_whitened(const PairBatch& batch) {
  const std::size_t n = batch.size();
  if (n < 2) return false;
  const std::size_t I = batch.input_dim(), D = I + batch.output_dim();
  Eigen::MatrixXd X(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(D));
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t i = 0; i < I; ++i) X(a, i) = batch.x(a, i);
    for (std::size_t j = I; j < D; ++j) X(a, j) = batch.y(a, j - I);
  }
  const Eigen::MatrixXd centered = X.rowwise() - X.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
  // Covariance entries of white data fluctuate by about 1/√n.
  const double tol = 0.15 + 4.0 / std::sqrt(static_cast<double>(n));
  const auto d = static_cast<Eigen::Index>(D);
  return (cov - Eigen::MatrixXd::Identity(d, d)).cwiseAbs().maxCoeff() <= tol;
}

namespace {

PairBatch concatenated(const PairBatch& batch) {
  const std::size_t n = batch.size(), I = batch.input_dim(), J = batch.output_dim();
  PairBatch c;
  c.x = Matrix(n, I + J);
  for (std::size_t a = 0; a < n; ++a) {
    std::copy_n(batch.x.row(a).data(), I, c.x.row(a).data());
    std::copy_n(batch.y.row(a).data(), J, c.x.row(a).data() + I);
  }
  c.y = c.x;
  c.x_shape = c.y_shape = {1, I + J};
  return c;
}

}  // namespace

PairBatch movie_halves(const PairBatch& movies, std::size_t frames) {
  const std::size_t D = movies.input_dim();
  if (frames < 2 || D % frames != 0 || movies.x_shape.height % frames != 0)
    throw DimensionError("movie_halves: input is not a concatenation of the given number of frames");
  const std::size_t frame = D / frames, split = (frames / 2) * frame, n = movies.size();
  const std::size_t rows = movies.x_shape.height / frames, cols = movies.x_shape.width;
  PairBatch out;
  out.x = Matrix(n, split);
  out.y = Matrix(n, D - split);
  out.x_shape = {rows * (frames / 2), cols};
  out.y_shape = {rows * (frames - frames / 2), cols};
  out.label_kind = movies.label_kind;
  out.labels = movies.labels;
  for (std::size_t a = 0; a < n; ++a) {
    const auto m = movies.x.row(a);
    std::copy_n(m.begin(), split, out.x.row(a).data());
    std::copy(m.begin() + static_cast<std::ptrdiff_t>(split), m.end(), out.y.row(a).data());
  }
  return out;
}

PairWhitening fit_pair_whitening(const PairBatch& batch, double retained_variance) {
  PairWhitening w;
  w.transform = datagen::fit_whitening(concatenated(batch), retained_variance);
  w.pixel_split = batch.input_dim();
  w.split = w.transform.output_dim() / 2;
  if (w.split == 0) throw DataError("fit_pair_whitening: fewer than two retained components");
  return w;
}

PairBatch apply_pair_whitening(const PairBatch& batch, const PairWhitening& w) {
  if (batch.input_dim() != w.pixel_split || batch.input_dim() + batch.output_dim() != w.transform.input_dim())
    throw DimensionError("apply_pair_whitening: batch does not match the transform");
  const PairBatch c = concatenated(batch);
  const std::size_t n = batch.size(), k = w.transform.output_dim();
  PairBatch out;
  out.x = Matrix(n, w.split);
  out.y = Matrix(n, k - w.split);
  out.x_shape = {1, w.split};
  out.y_shape = {1, k - w.split};
  out.label_kind = batch.label_kind;
  out.labels = batch.labels;
  for (std::size_t a = 0; a < n; ++a) {
    const Vector v = datagen::whiten(c.x.row(a), w.transform);
    std::copy_n(v.begin(), w.split, out.x.row(a).data());
    std::copy(v.begin() + static_cast<std::ptrdiff_t>(w.split), v.end(), out.y.row(a).data());
  }
  return out;
}

Matrix pixel_filters(const EnergyModel& m, const PairWhitening& w) {
  if (m.filters.rows() != w.transform.output_dim())
    throw DimensionError("pixel_filters: model does not match the whitening transform");
  // Response wᵀ P (v − mean), so the receptive field is Pᵀ w.
  return linalg::matmul_tn(w.transform.projection, m.filters);
}

namespace {

struct IsaGradient {
  Matrix filters, pooling;
};

IsaGradient objective_gradient(const EnergyModel& m, const PairBatch& batch, double epsilon, bool with_pooling) {
  const std::size_t n = batch.size(), F = m.factors(), K = m.code_dim(), I = m.input_dim;
  const std::size_t chunks = (n + kChunk - 1) / kChunk;
  std::vector<IsaGradient> partial(chunks);
  parallel_chunks(chunks, [&](std::size_t c) {
    IsaGradient& g = partial[c];
    g.filters = Matrix(m.filters.rows(), F);
    g.pooling = Matrix(K, F);
    Vector a, b, s(F), sq(F), z(K), dz(K), ds(F);
    for (std::size_t p = c * kChunk; p < std::min(n, (c + 1) * kChunk); ++p) {
      const auto x = batch.x.row(p), y = batch.y.row(p);
      responses(m, x, y, a, b);
      for (std::size_t f = 0; f < F; ++f) {
        s[f] = a[f] + b[f];
        sq[f] = s[f] * s[f];
      }
      linalg::gemv(m.pooling, sq, z);
      for (std::size_t k = 0; k < K; ++k) dz[k] = 0.5 / std::sqrt(epsilon + z[k] + m.bias_z[k]);
      // ∂/∂s_f = Σ_k dz_k P_kf · 2 s_f
      linalg::gemv_t(m.pooling, dz, ds);
      for (std::size_t f = 0; f < F; ++f) ds[f] *= 2.0 * s[f];
      for (std::size_t i = 0; i < I; ++i)
        if (x[i] != 0.0) linalg::axpy(x[i], ds, g.filters.row(i));
      for (std::size_t j = 0; j < y.size(); ++j)
        if (y[j] != 0.0) linalg::axpy(y[j], ds, g.filters.row(I + j));
      if (with_pooling) linalg::rank1(g.pooling, 1.0, dz, sq);
    }
  });
  IsaGradient total{Matrix(m.filters.rows(), F), Matrix(K, F)};
  for (const auto& g : partial) {
    linalg::axpy(1.0, g.filters.storage(), total.filters.storage());
    linalg::axpy(1.0, g.pooling.storage(), total.pooling.storage());
  }
  linalg::scale(1.0 / static_cast<double>(n), total.filters.storage());
  linalg::scale(1.0 / static_cast<double>(n), total.pooling.storage());
  return total;
}

// Non-negative, each row summing to its previous total so minimizing the
// objective cannot simply shrink the pooling to zero.
void project_pooling(Matrix& p, std::span<const double> row_sums) {
  for (std::size_t k = 0; k < p.rows(); ++k) {
    auto row = p.row(k);
    for (double& v : row) v = std::max(v, 0.0);
    const double s = std::accumulate(row.begin(), row.end(), 0.0);
    if (s > 0.0) linalg::scale(row_sums[k] / s, row);
  }
}

}  // namespace

IsaResult train_isa(EnergyModel& m, const PairBatch& batch, const IsaConfig& config) {
  config.validate();
  m.validate();
  check_dims(m, batch.input_dim(), batch.output_dim());
  if (batch.size() == 0) throw DataError("train_isa: empty batch");
  if (!looks_whitened(batch)) warn("train_isa: input does not look whitened; fit_whitening first");

  Vector row_sums(m.code_dim());
  for (std::size_t k = 0; k < m.code_dim(); ++k) {
    const auto row = m.pooling.row(k);
    row_sums[k] = std::accumulate(row.begin(), row.end(), 0.0);
  }

  IsaResult result;
  Matrix vel(m.filters.rows(), m.factors());
  const std::size_t n = batch.size();
  std::vector<std::size_t> order(n);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng(derive_seed(config.seed, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (std::size_t lo = 0, b = 0; lo < n; lo += config.batch_size, ++b) {
      const std::size_t hi = std::min(n, lo + config.batch_size);
      const PairBatch mb = datagen::select_rows(batch, std::span(order).subspan(lo, hi - lo));
      if (config.learning_rate > 0.0) {
        const IsaGradient g = objective_gradient(m, mb, config.epsilon, config.learn_pooling);
        linalg::scale(config.momentum, vel.storage());
        linalg::axpy(-config.learning_rate, g.filters.storage(), vel.storage());
        linalg::axpy(1.0, vel.storage(), m.filters.storage());
        if (config.learn_pooling) {
          linalg::axpy(-config.learning_rate, g.pooling.storage(), m.pooling.storage());
          project_pooling(m.pooling, row_sums);
        }
      }
      if (!linalg::all_finite(m.filters.storage()) || !linalg::all_finite(m.pooling.storage())) {
        std::ostringstream msg;
        msg << "train_isa diverged: non-finite filters after epoch " << epoch << " batch " << b;
        throw NumericalError(msg.str());
      }
      symmetric_orthonormalize(m.filters);
    }
    result.epoch_objective.push_back(isa_objective(m, batch, config.epsilon));
  }
  return result;
}

}  // namespace relate::isa
