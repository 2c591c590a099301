// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Inference on trained gated models: per-pixel flow read off the warp the
// mapping code selects, and transfer of a transformation by analogy.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "relate/datagen.hpp"
#include "relate/render.hpp"
#include "relate/tensor_core.hpp"

namespace relate::infer {

inline constexpr std::size_t kMaxFlowPixels = 1024;

struct FlowField {
  datagen::Shape shape;
  std::vector<int> dr;  // row displacement per input pixel
  std::vector<int> dc;  // column displacement per input pixel
  Vector confidence;    // max_j L[j, i]

  std::size_t size() const { return dr.size(); }
  // As a datagen::Shift (dx = columns, dy = rows).
  datagen::Shift at(std::size_t i) const { return {dc[i], dr[i]}; }
};

struct FlowOptions {
  bool binarize_code = false;  // threshold z at 0.5 before building the warp
};

// z = σ(code), L = Wy diag(Wzᵀz) Wxᵀ, then each input pixel's displacement
// is the position of its strongest output connection minus its own,
// measured on the torus (components in (−n/2, n/2]). Ties prefer the
// smaller displacement, then row-major order. Square patches of at most
// kMaxFlowPixels pixels only.
FlowField infer_flow(const FactorView& model, std::span<const double> x, std::span<const double> y,
                     datagen::Shape shape, const FlowOptions& options = {});

// Component-wise median over pixels [begin, end) (all pixels by default).
datagen::Shift median_displacement(const FlowField& flow, std::size_t begin = 0, std::size_t end = ~std::size_t{0});

// Among pixels with confidence >= ratio · max confidence, the fraction whose
// displacement equals the median displacement.
double uniform_fraction(const FlowField& flow, double ratio = 0.1);

// y_pred = decode(x_new, encode(x_src, y_src))
Vector analogy(const FactorView& model, std::span<const double> x_src, std::span<const double> y_src,
               std::span<const double> x_new);

// Pearson correlation; 0 when either side is constant.
double correlation(std::span<const double> a, std::span<const double> b);

std::string flow_to_json(const FlowField& flow);
// Arrow per pixel on a grid of `cell`-sized cells; brighter arrows are more
// confident.
render::GrayImage render_flow(const FlowField& flow, std::size_t cell = 12);

}  // namespace relate::infer
