// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Synthetic transformed image pairs and the standard preprocessing chain
// (DC-centering, contrast normalization, PCA whitening).

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relate/matrix.hpp"

namespace relate::datagen {

struct Shape {
  std::size_t height = 1;
  std::size_t width = 1;
  std::size_t size() const { return height * width; }
  bool operator==(const Shape&) const = default;
};

// One vectorized image, row-major.
struct Patch {
  Vector pixels;
  Shape shape;
};

// Integer displacement: dx moves content along columns, dy along rows, so
// a shift of (1, 0) gives y[r][c] = x[r][c-1].
struct Shift {
  int dx = 0;
  int dy = 0;
  bool operator==(const Shift&) const = default;
};

enum class LabelKind {
  kNone,
  kShift,        // dx, dy
  kSplitShift,   // top dx, top dy, bottom dx, bottom dy
  kRotation,     // angle (radians, counter-clockwise)
  kVelocity,     // vx, vy, speed, direction (radians)
};

std::string to_string(LabelKind kind);
LabelKind label_kind_from_string(const std::string& name);
std::size_t label_width(LabelKind kind);

// Paired training data; row a of x and y is pair a.
struct PairBatch {
  Matrix x;
  Matrix y;
  Shape x_shape;
  Shape y_shape;
  LabelKind label_kind = LabelKind::kNone;
  Matrix labels;  // size() × label_width(label_kind), empty when kNone
  std::vector<std::uint8_t> degenerate;  // set by normalize(); empty otherwise

  std::size_t size() const { return x.rows(); }
  std::size_t input_dim() const { return x.cols(); }
  std::size_t output_dim() const { return y.cols(); }

  void validate() const;
};

// Batch made of the given rows, in order.
PairBatch select_rows(const PairBatch& batch, std::span<const std::size_t> rows);
// Rows [begin, end).
PairBatch slice(const PairBatch& batch, std::size_t begin, std::size_t end);

enum class EdgeMode { kWrap, kZeroPad };
enum class Interpolation { kBilinear, kNearest };

// ---- image operations ----

Vector shift_image(std::span<const double> image, Shape shape, Shift shift, EdgeMode mode);

// Shifts the top and bottom halves independently, each cyclically within its
// own half (kWrap) or with zero fill.
Vector split_shift_image(std::span<const double> image, Shape shape, Shift top, Shift bottom,
                         EdgeMode mode = EdgeMode::kWrap);

// Rotates counter-clockwise about the patch center; samples outside the patch
// read as 0.
Vector rotate_image(std::span<const double> image, Shape shape, double angle,
                    Interpolation interp = Interpolation::kBilinear);

Vector random_dots(Shape shape, double density, std::uint64_t seed);

// ---- generators ----

struct ShiftedDotsParams {
  std::size_t num_pairs = 1000;
  std::size_t height = 13;
  std::size_t width = 13;
  double dot_density = 0.1;
  int max_shift = 2;
  EdgeMode edge = EdgeMode::kWrap;
  std::uint64_t seed = 0;
  std::optional<Shift> fixed_shift;  // overrides the random draw
};
PairBatch gen_shifted_dots(const ShiftedDotsParams& p);

struct SplitScreenParams {
  std::size_t num_pairs = 1000;
  std::size_t height = 14;
  std::size_t width = 14;
  double dot_density = 0.1;
  int max_shift = 1;
  std::uint64_t seed = 0;
  std::optional<Shift> fixed_top;
  std::optional<Shift> fixed_bottom;
};
PairBatch gen_splitscreen_dots(const SplitScreenParams& p);

struct RotatedPairsParams {
  std::size_t num_pairs = 1000;
  std::size_t height = 13;
  std::size_t width = 13;
  double dot_density = 0.1;
  double max_angle = 3.141592653589793;
  Interpolation interp = Interpolation::kBilinear;
  std::uint64_t seed = 0;
  std::optional<double> fixed_angle;
};
PairBatch gen_rotated_pairs(const RotatedPairsParams& p);

struct DotMoviesParams {
  std::size_t num_movies = 1000;
  std::size_t height = 8;
  std::size_t width = 8;
  std::size_t num_frames = 10;
  double dot_density = 0.1;
  int max_speed = 1;  // integer velocity components drawn from [-max_speed, max_speed]
  std::uint64_t seed = 0;
  std::optional<Shift> fixed_velocity;
};
// Each sample is the concatenation of num_frames frames; y = x.
PairBatch gen_dot_movies(const DotMoviesParams& p);

// ---- preprocessing ----

// Subtracts the per-patch mean and scales to target_norm (unit norm by
// default; sqrt(dim) gives unit mean-square pixels). Constant patches map to
// zero and are flagged in PairBatch::degenerate.
PairBatch normalize(const PairBatch& batch, double target_norm = 1.0);
// Returns false if the patch was constant (and is now zero).
bool normalize_patch(std::span<double> pixels, double target_norm = 1.0);

struct WhiteningTransform {
  Vector mean;             // length I
  Matrix projection;       // k × I
  Matrix inverse_projection;  // I × k
  double retained_variance = 1.0;

  std::size_t input_dim() const { return mean.size(); }
  std::size_t output_dim() const { return projection.rows(); }
};

// PCA whitening fitted on every x and y row (I must equal J).
WhiteningTransform fit_whitening(const PairBatch& batch, double retained_variance = 0.95);
PairBatch apply_whitening(const PairBatch& batch, const WhiteningTransform& transform);
Vector whiten(std::span<const double> v, const WhiteningTransform& transform);
Vector unwhiten(std::span<const double> w, const WhiteningTransform& transform);

// Binarizes each row at its median (value > median → 1), for binary GBMs.
PairBatch binarize_at_median(const PairBatch& batch);

}  // namespace relate::datagen
