// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/datagen.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "relate/errors.hpp"
#include "relate/log.hpp"
#include "relate/random.hpp"

namespace relate::datagen {
namespace {

void check_dims(std::size_t num, std::size_t height, std::size_t width, double density) {
  if (num == 0 || height == 0 || width == 0) throw ConfigError("generator dimensions must be positive");
  if (!(density > 0.0 && density < 1.0)) throw ConfigError("dot density must lie in (0, 1)");
}

std::size_t wrap_index(long v, std::size_t n) {
  const long m = static_cast<long>(n);
  return static_cast<std::size_t>(((v % m) + m) % m);
}

int draw_offset(Rng& rng, int max_abs) {
  return std::uniform_int_distribution<int>(-max_abs, max_abs)(rng);
}

// Shifts the row band [row0, row0 + shape.height) of a wider image.
void shift_region(std::span<const double> src, std::span<double> dst, std::size_t width, std::size_t row0,
                  std::size_t rows, Shift s, EdgeMode mode) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < width; ++c) {
      const long sr = static_cast<long>(r) - s.dy;
      const long sc = static_cast<long>(c) - s.dx;
      double v = 0.0;
      if (mode == EdgeMode::kWrap) {
        v = src[(row0 + wrap_index(sr, rows)) * width + wrap_index(sc, width)];
      } else if (sr >= 0 && sc >= 0 && sr < static_cast<long>(rows) && sc < static_cast<long>(width)) {
        v = src[(row0 + static_cast<std::size_t>(sr)) * width + static_cast<std::size_t>(sc)];
      }
      dst[(row0 + r) * width + c] = v;
    }
  }
}

void fill_dots(std::span<double> out, double density, Rng& rng) {
  for (double& v : out) v = uniform01(rng) < density ? 1.0 : 0.0;
}

}  // namespace

std::string to_string(LabelKind kind) {
  switch (kind) {
    case LabelKind::kNone: return "none";
    case LabelKind::kShift: return "shift";
    case LabelKind::kSplitShift: return "split_shift";
    case LabelKind::kRotation: return "rotation";
    case LabelKind::kVelocity: return "velocity";
  }
  return "none";
}

LabelKind label_kind_from_string(const std::string& name) {
  if (name == "none") return LabelKind::kNone;
  if (name == "shift") return LabelKind::kShift;
  if (name == "split_shift") return LabelKind::kSplitShift;
  if (name == "rotation") return LabelKind::kRotation;
  if (name == "velocity") return LabelKind::kVelocity;
  throw DataError("unknown label kind '" + name + "'");
}

std::size_t label_width(LabelKind kind) {
  switch (kind) {
    case LabelKind::kNone: return 0;
    case LabelKind::kShift: return 2;
    case LabelKind::kSplitShift: return 4;
    case LabelKind::kRotation: return 1;
    case LabelKind::kVelocity: return 4;
  }
  return 0;
}

void PairBatch::validate() const {
  if (x.rows() != y.rows()) throw DimensionError("pair batch: x and y row counts differ");
  if (x_shape.size() != x.cols() || y_shape.size() != y.cols())
    throw DimensionError("pair batch: patch shape does not match vector length");
  if (label_kind != LabelKind::kNone &&
      (labels.rows() != x.rows() || labels.cols() != label_width(label_kind)))
    throw DimensionError("pair batch: label block does not have one entry per pair");
  if (!degenerate.empty() && degenerate.size() != x.rows())
    throw DimensionError("pair batch: degenerate flags do not match pair count");
  if (!linalg::all_finite(x.storage()) || !linalg::all_finite(y.storage()))
    throw DataError("pair batch contains non-finite values");
}

PairBatch select_rows(const PairBatch& batch, std::span<const std::size_t> rows) {
  PairBatch out;
  out.x = Matrix(rows.size(), batch.x.cols());
  out.y = Matrix(rows.size(), batch.y.cols());
  out.x_shape = batch.x_shape;
  out.y_shape = batch.y_shape;
  out.label_kind = batch.label_kind;
  if (batch.label_kind != LabelKind::kNone) out.labels = Matrix(rows.size(), batch.labels.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const std::size_t r = rows[i];
    std::copy_n(batch.x.row(r).data(), batch.x.cols(), out.x.row(i).data());
    std::copy_n(batch.y.row(r).data(), batch.y.cols(), out.y.row(i).data());
    if (!out.labels.empty()) std::copy_n(batch.labels.row(r).data(), batch.labels.cols(), out.labels.row(i).data());
    if (!batch.degenerate.empty()) out.degenerate.push_back(batch.degenerate[r]);
  }
  return out;
}

PairBatch slice(const PairBatch& batch, std::size_t begin, std::size_t end) {
  end = std::min(end, batch.size());
  std::vector<std::size_t> rows(end > begin ? end - begin : 0);
  std::iota(rows.begin(), rows.end(), begin);
  return select_rows(batch, rows);
}

Vector shift_image(std::span<const double> image, Shape shape, Shift shift, EdgeMode mode) {
  if (image.size() != shape.size()) throw DimensionError("shift_image: length does not match shape");
  Vector out(image.size());
  shift_region(image, out, shape.width, 0, shape.height, shift, mode);
  return out;
}

Vector split_shift_image(std::span<const double> image, Shape shape, Shift top, Shift bottom, EdgeMode mode) {
  if (image.size() != shape.size()) throw DimensionError("split_shift_image: length does not match shape");
  if (shape.height % 2 != 0) throw ConfigError("split-screen shifts need an even patch height");
  Vector out(image.size());
  const std::size_t half = shape.height / 2;
  shift_region(image, out, shape.width, 0, half, top, mode);
  shift_region(image, out, shape.width, half, half, bottom, mode);
  return out;
}

Vector rotate_image(std::span<const double> image, Shape shape, double angle, Interpolation interp) {
  if (image.size() != shape.size()) throw DimensionError("rotate_image: length does not match shape");
  const double cy = (static_cast<double>(shape.height) - 1.0) / 2.0;
  const double cx = (static_cast<double>(shape.width) - 1.0) / 2.0;
  const double ca = std::cos(angle);
  const double sa = std::sin(angle);
  const long h = static_cast<long>(shape.height);
  const long w = static_cast<long>(shape.width);
  auto at = [&](long r, long c) -> double {
    if (r < 0 || c < 0 || r >= h || c >= w) return 0.0;
    return image[static_cast<std::size_t>(r * w + c)];
  };
  Vector out(image.size());
  for (long r = 0; r < h; ++r) {
    for (long c = 0; c < w; ++c) {
      const double u = static_cast<double>(c) - cx;
      const double v = static_cast<double>(r) - cy;
      const double sc = cx + ca * u + sa * v;
      const double sr = cy - sa * u + ca * v;
      double value;
      if (interp == Interpolation::kNearest) {
        value = at(std::lround(sr), std::lround(sc));
      } else {
        const double fr = std::floor(sr);
        const double fc = std::floor(sc);
        const double ar = sr - fr;
        const double ac = sc - fc;
        const long r0 = static_cast<long>(fr);
        const long c0 = static_cast<long>(fc);
        value = (1 - ar) * ((1 - ac) * at(r0, c0) + ac * at(r0, c0 + 1)) +
                ar * ((1 - ac) * at(r0 + 1, c0) + ac * at(r0 + 1, c0 + 1));
      }
      out[static_cast<std::size_t>(r * w + c)] = value;
    }
  }
  return out;
}

Vector random_dots(Shape shape, double density, std::uint64_t seed) {
  Rng rng(seed);
  Vector out(shape.size());
  fill_dots(out, density, rng);
  return out;
}

PairBatch gen_shifted_dots(const ShiftedDotsParams& p) {
  check_dims(p.num_pairs, p.height, p.width, p.dot_density);
  // A single-row patch is a 1-D signal: only column shifts apply.
  const bool one_d = p.height == 1;
  const std::size_t limit = one_d ? p.width : std::min(p.height, p.width);
  if (p.max_shift < 0 || static_cast<std::size_t>(p.max_shift) >= limit)
    throw ConfigError("max_shift must be non-negative and smaller than the patch extent");

  const Shape shape{p.height, p.width};
  PairBatch batch;
  batch.x = Matrix(p.num_pairs, shape.size());
  batch.y = Matrix(p.num_pairs, shape.size());
  batch.x_shape = batch.y_shape = shape;
  batch.label_kind = LabelKind::kShift;
  batch.labels = Matrix(p.num_pairs, 2);
  Rng rng(p.seed);
  for (std::size_t a = 0; a < p.num_pairs; ++a) {
    fill_dots(batch.x.row(a), p.dot_density, rng);
    Shift s;
    s.dx = draw_offset(rng, p.max_shift);
    s.dy = one_d ? 0 : draw_offset(rng, p.max_shift);
    if (p.fixed_shift) s = *p.fixed_shift;
    shift_region(batch.x.row(a), batch.y.row(a), shape.width, 0, shape.height, s, p.edge);
    batch.labels(a, 0) = s.dx;
    batch.labels(a, 1) = s.dy;
  }
  return batch;
}

PairBatch gen_splitscreen_dots(const SplitScreenParams& p) {
  check_dims(p.num_pairs, p.height, p.width, p.dot_density);
  if (p.height % 2 != 0) throw ConfigError("split-screen patches need an even height");
  const std::size_t half = p.height / 2;
  if (p.max_shift < 0 || static_cast<std::size_t>(p.max_shift) >= std::min(half, p.width))
    throw ConfigError("max_shift must be smaller than the half-patch extent");

  const Shape shape{p.height, p.width};
  PairBatch batch;
  batch.x = Matrix(p.num_pairs, shape.size());
  batch.y = Matrix(p.num_pairs, shape.size());
  batch.x_shape = batch.y_shape = shape;
  batch.label_kind = LabelKind::kSplitShift;
  batch.labels = Matrix(p.num_pairs, 4);
  Rng rng(p.seed);
  for (std::size_t a = 0; a < p.num_pairs; ++a) {
    fill_dots(batch.x.row(a), p.dot_density, rng);
    Shift top{draw_offset(rng, p.max_shift), draw_offset(rng, p.max_shift)};
    Shift bottom{draw_offset(rng, p.max_shift), draw_offset(rng, p.max_shift)};
    if (p.fixed_top) top = *p.fixed_top;
    if (p.fixed_bottom) bottom = *p.fixed_bottom;
    shift_region(batch.x.row(a), batch.y.row(a), shape.width, 0, half, top, EdgeMode::kWrap);
    shift_region(batch.x.row(a), batch.y.row(a), shape.width, half, half, bottom, EdgeMode::kWrap);
    batch.labels(a, 0) = top.dx;
    batch.labels(a, 1) = top.dy;
    batch.labels(a, 2) = bottom.dx;
    batch.labels(a, 3) = bottom.dy;
  }
  return batch;
}

PairBatch gen_rotated_pairs(const RotatedPairsParams& p) {
  check_dims(p.num_pairs, p.height, p.width, p.dot_density);
  if (!(p.max_angle > 0.0 && p.max_angle <= 3.141592653589793 + 1e-12))
    throw ConfigError("max_angle must lie in (0, pi]");
  const Shape shape{p.height, p.width};
  PairBatch batch;
  batch.x = Matrix(p.num_pairs, shape.size());
  batch.y = Matrix(p.num_pairs, shape.size());
  batch.x_shape = batch.y_shape = shape;
  batch.label_kind = LabelKind::kRotation;
  batch.labels = Matrix(p.num_pairs, 1);
  Rng rng(p.seed);
  std::uniform_real_distribution<double> angle_dist(-p.max_angle, p.max_angle);
  for (std::size_t a = 0; a < p.num_pairs; ++a) {
    fill_dots(batch.x.row(a), p.dot_density, rng);
    double angle = angle_dist(rng);
    if (p.fixed_angle) angle = *p.fixed_angle;
    const Vector rotated = rotate_image(batch.x.row(a), shape, angle, p.interp);
    std::copy(rotated.begin(), rotated.end(), batch.y.row(a).begin());
    batch.labels(a, 0) = angle;
  }
  return batch;
}

PairBatch gen_dot_movies(const DotMoviesParams& p) {
  check_dims(p.num_movies, p.height, p.width, p.dot_density);
  if (p.num_frames < 2) throw ConfigError("dot movies need at least 2 frames");
  if (p.max_speed < 0) throw ConfigError("max_speed must be non-negative");
  const Shape frame{p.height, p.width};
  const std::size_t frame_size = frame.size();
  const Shape shape{p.num_frames * p.height, p.width};  // frames stacked vertically

  PairBatch batch;
  batch.x = Matrix(p.num_movies, shape.size());
  batch.x_shape = batch.y_shape = shape;
  batch.label_kind = LabelKind::kVelocity;
  batch.labels = Matrix(p.num_movies, 4);
  Rng rng(p.seed);
  Vector first(frame_size);
  for (std::size_t a = 0; a < p.num_movies; ++a) {
    fill_dots(first, p.dot_density, rng);
    Shift v{draw_offset(rng, p.max_speed), draw_offset(rng, p.max_speed)};
    if (p.fixed_velocity) v = *p.fixed_velocity;
    auto row = batch.x.row(a);
    for (std::size_t t = 0; t < p.num_frames; ++t) {
      const Shift s{v.dx * static_cast<int>(t), v.dy * static_cast<int>(t)};
      shift_region(first, row.subspan(t * frame_size, frame_size), p.width, 0, p.height, s, EdgeMode::kWrap);
    }
    batch.labels(a, 0) = v.dx;
    batch.labels(a, 1) = v.dy;
    batch.labels(a, 2) = std::hypot(v.dx, v.dy);
    batch.labels(a, 3) = std::atan2(static_cast<double>(v.dy), static_cast<double>(v.dx));
  }
  batch.y = batch.x;
  return batch;
}

bool normalize_patch(std::span<double> pixels, double target_norm) {
  if (pixels.empty()) return false;
  const double mean = std::accumulate(pixels.begin(), pixels.end(), 0.0) / static_cast<double>(pixels.size());
  for (double& v : pixels) v -= mean;
  const double n = linalg::norm(pixels);
  if (n <= 1e-12) {
    std::fill(pixels.begin(), pixels.end(), 0.0);
    return false;
  }
  for (double& v : pixels) v *= target_norm / n;
  return true;
}

PairBatch normalize(const PairBatch& batch, double target_norm) {
  if (!(target_norm > 0.0)) throw ConfigError("normalize: target norm must be positive");
  if (batch.size() == 0) throw DataError("normalize: empty batch");
  PairBatch out = batch;
  out.degenerate.assign(batch.size(), 0);
  for (std::size_t a = 0; a < out.size(); ++a) {
    const bool okx = normalize_patch(out.x.row(a), target_norm);
    const bool oky = normalize_patch(out.y.row(a), target_norm);
    if (!okx || !oky) out.degenerate[a] = 1;
  }
  return out;
}

WhiteningTransform fit_whitening(const PairBatch& batch, double retained_variance) {
  if (batch.size() == 0) throw DataError("fit_whitening: empty batch");
  if (batch.input_dim() != batch.output_dim())
    throw DimensionError("fit_whitening: x and y must share a dimension");
  if (!(retained_variance > 0.0 && retained_variance <= 1.0))
    throw ConfigError("retained_variance must lie in (0, 1]");
  const std::size_t dim = batch.input_dim();
  const std::size_t samples = 2 * batch.size();
  if (samples < dim) {
    std::ostringstream msg;
    msg << "fit_whitening: " << samples << " samples for dimension " << dim << "; covariance is rank deficient";
    warn(msg.str());
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  for (const Matrix* m : {&batch.x, &batch.y})
    for (std::size_t a = 0; a < m->rows(); ++a)
      mean += Eigen::Map<const Eigen::VectorXd>(m->row(a).data(), static_cast<Eigen::Index>(dim));
  mean /= static_cast<double>(samples);

  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (const Matrix* m : {&batch.x, &batch.y}) {
    for (std::size_t a = 0; a < m->rows(); ++a) {
      const Eigen::VectorXd d =
          Eigen::Map<const Eigen::VectorXd>(m->row(a).data(), static_cast<Eigen::Index>(dim)) - mean;
      cov.selfadjointView<Eigen::Lower>().rankUpdate(d);
    }
  }
  cov = cov.selfadjointView<Eigen::Lower>();
  cov /= static_cast<double>(samples);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
  const double total = values.cwiseMax(0.0).sum();
  if (!(total > 1e-300)) throw DataError("fit_whitening: data has zero variance");
  const double floor = 1e-10 * values.maxCoeff();

  std::vector<Eigen::Index> keep;
  double acc = 0.0;
  for (Eigen::Index i = values.size() - 1; i >= 0; --i) {
    if (values(i) <= floor) break;
    keep.push_back(i);
    acc += values(i);
    if (acc >= retained_variance * total * (1.0 - 1e-12)) break;
  }

  WhiteningTransform t;
  t.mean.assign(mean.data(), mean.data() + dim);
  t.projection = Matrix(keep.size(), dim);
  t.inverse_projection = Matrix(dim, keep.size());
  for (std::size_t c = 0; c < keep.size(); ++c) {
    const double lambda = values(keep[c]);
    const double s = std::sqrt(lambda);
    for (std::size_t i = 0; i < dim; ++i) {
      const double e = eig.eigenvectors()(static_cast<Eigen::Index>(i), keep[c]);
      t.projection(c, i) = e / s;
      t.inverse_projection(i, c) = e * s;
    }
  }
  t.retained_variance = acc / total;
  return t;
}

Vector whiten(std::span<const double> v, const WhiteningTransform& t) {
  if (v.size() != t.input_dim()) throw DimensionError("whiten: dimension mismatch");
  Vector centered(v.begin(), v.end());
  for (std::size_t i = 0; i < centered.size(); ++i) centered[i] -= t.mean[i];
  Vector out(t.output_dim());
  linalg::gemv(t.projection, centered, out);
  return out;
}

Vector unwhiten(std::span<const double> w, const WhiteningTransform& t) {
  if (w.size() != t.output_dim()) throw DimensionError("unwhiten: dimension mismatch");
  Vector out(t.input_dim());
  linalg::gemv(t.inverse_projection, w, out);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += t.mean[i];
  return out;
}

PairBatch apply_whitening(const PairBatch& batch, const WhiteningTransform& t) {
  if (batch.input_dim() != t.input_dim() || batch.output_dim() != t.input_dim())
    throw DimensionError("apply_whitening: batch dimension does not match the transform");
  PairBatch out;
  out.x = Matrix(batch.size(), t.output_dim());
  out.y = Matrix(batch.size(), t.output_dim());
  out.x_shape = out.y_shape = Shape{1, t.output_dim()};
  out.label_kind = batch.label_kind;
  out.labels = batch.labels;
  out.degenerate = batch.degenerate;
  for (std::size_t a = 0; a < batch.size(); ++a) {
    const Vector wx = whiten(batch.x.row(a), t);
    const Vector wy = whiten(batch.y.row(a), t);
    std::copy(wx.begin(), wx.end(), out.x.row(a).begin());
    std::copy(wy.begin(), wy.end(), out.y.row(a).begin());
  }
  return out;
}

PairBatch binarize_at_median(const PairBatch& batch) {
  PairBatch out = batch;
  Vector scratch;
  for (Matrix* m : {&out.x, &out.y}) {
    for (std::size_t a = 0; a < m->rows(); ++a) {
      auto row = m->row(a);
      scratch.assign(row.begin(), row.end());
      auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(scratch.size() / 2);
      std::nth_element(scratch.begin(), mid, scratch.end());
      const double median = *mid;
      for (double& v : row) v = v > median ? 1.0 : 0.0;
    }
  }
  out.degenerate.clear();
  return out;
}

}  // namespace relate::datagen
