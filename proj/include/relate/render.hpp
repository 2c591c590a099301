// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// 8-bit grayscale rasters written as binary PGM: filter grids, analogy
// strips and flow arrow plots.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relate/datagen.hpp"

namespace relate::render {

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;  // row-major

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h, fill) {}
  std::uint8_t& at(std::size_t r, std::size_t c) { return pixels[r * width + c]; }
  std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
};

std::string encode_pgm(const GrayImage& image);
GrayImage decode_pgm(const std::string& bytes);
void write_pgm(const std::string& path, const GrayImage& image);

// Copies an image into `dst` at (top, left), min-max scaled to [0, 255]
// (constant images render mid-gray), upscaled by `zoom`.
void blit_scaled(GrayImage& dst, std::size_t top, std::size_t left, std::span<const double> image,
                 datagen::Shape shape, std::size_t zoom = 1);

// Filters are columns of an (h·w) × F matrix; each is reshaped and
// min-max scaled on its own, then tiled `columns` per row with a 1-pixel
// border.
GrayImage filter_grid(const Matrix& filters, datagen::Shape shape, std::size_t columns = 0, std::size_t zoom = 2);

// Rows of equally shaped panels laid out left to right.
GrayImage panel_rows(const std::vector<std::vector<GrayImage>>& rows, std::size_t gap = 2);

// Single panel of an image, min-max scaled.
GrayImage panel(std::span<const double> image, datagen::Shape shape, std::size_t zoom = 4);

void draw_line(GrayImage& img, double r0, double c0, double r1, double c1, std::uint8_t value);

}  // namespace relate::render
