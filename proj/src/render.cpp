// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/render.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "binio.hpp"
#include "relate/errors.hpp"

namespace relate::render {

std::string encode_pgm(const GrayImage& image) {
  std::string out = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(image.pixels.data()), image.pixels.size());
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  std::size_t w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P5" || !in || maxval != 255) throw DataError("pgm: unsupported header");
  in.get();
  GrayImage img(w, h);
  const auto offset = static_cast<std::size_t>(in.tellg());
  if (bytes.size() < offset + w * h) throw DataError("pgm: truncated");
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(offset), w * h, img.pixels.begin());
  return img;
}

void write_pgm(const std::string& path, const GrayImage& image) { binio::write_file(path, encode_pgm(image)); }

void blit_scaled(GrayImage& dst, std::size_t top, std::size_t left, std::span<const double> image,
                 datagen::Shape shape, std::size_t zoom) {
  if (image.size() != shape.size()) throw DimensionError("render: image size does not match shape");
  const auto [lo, hi] = std::minmax_element(image.begin(), image.end());
  const double range = *hi - *lo;
  for (std::size_t r = 0; r < shape.height; ++r)
    for (std::size_t c = 0; c < shape.width; ++c) {
      const double v = image[r * shape.width + c];
      const auto g = static_cast<std::uint8_t>(range > 0 ? std::lround(255.0 * (v - *lo) / range) : 128);
      for (std::size_t dr = 0; dr < zoom; ++dr)
        for (std::size_t dc = 0; dc < zoom; ++dc) {
          const std::size_t rr = top + r * zoom + dr, cc = left + c * zoom + dc;
          if (rr < dst.height && cc < dst.width) dst.at(rr, cc) = g;
        }
    }
}

GrayImage filter_grid(const Matrix& filters, datagen::Shape shape, std::size_t columns, std::size_t zoom) {
  if (filters.rows() != shape.size()) throw DimensionError("filter_grid: filter length does not match shape");
  const std::size_t F = filters.cols();
  if (columns == 0) columns = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::sqrt(double(F)))));
  const std::size_t rows = (F + columns - 1) / columns;
  const std::size_t cw = shape.width * zoom + 1, ch = shape.height * zoom + 1;
  GrayImage img(columns * cw + 1, rows * ch + 1, 0);
  for (std::size_t f = 0; f < F; ++f) {
    const Vector col = filters.col(f);
    blit_scaled(img, 1 + (f / columns) * ch, 1 + (f % columns) * cw, col, shape, zoom);
  }
  return img;
}

GrayImage panel(std::span<const double> image, datagen::Shape shape, std::size_t zoom) {
  GrayImage img(shape.width * zoom, shape.height * zoom);
  blit_scaled(img, 0, 0, image, shape, zoom);
  return img;
}

GrayImage panel_rows(const std::vector<std::vector<GrayImage>>& rows, std::size_t gap) {
  std::size_t width = 0, height = gap;
  for (const auto& row : rows) {
    std::size_t w = gap, h = 0;
    for (const auto& p : row) {
      w += p.width + gap;
      h = std::max(h, p.height);
    }
    width = std::max(width, w);
    height += h + gap;
  }
  GrayImage out(width, height, 0);
  std::size_t top = gap;
  for (const auto& row : rows) {
    std::size_t left = gap, h = 0;
    for (const auto& p : row) {
      for (std::size_t r = 0; r < p.height; ++r)
        std::copy_n(p.pixels.begin() + static_cast<std::ptrdiff_t>(r * p.width), p.width,
                    out.pixels.begin() + static_cast<std::ptrdiff_t>((top + r) * width + left));
      left += p.width + gap;
      h = std::max(h, p.height);
    }
    top += h + gap;
  }
  return out;
}

void draw_line(GrayImage& img, double r0, double c0, double r1, double c1, std::uint8_t value) {
  const int steps = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(r1 - r0), std::abs(c1 - c0)) * 2)));
  for (int s = 0; s <= steps; ++s) {
    const double t = double(s) / steps;
    const long r = std::lround(r0 + t * (r1 - r0)), c = std::lround(c0 + t * (c1 - c0));
    if (r >= 0 && c >= 0 && std::size_t(r) < img.height && std::size_t(c) < img.width) img.at(r, c) = value;
  }
}

}  // namespace relate::render
