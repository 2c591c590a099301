// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/infer_tools.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>

#include "json.hpp"
#include "relate/errors.hpp"

namespace relate::infer {

namespace {

// Toroidal difference in (−n/2, n/2].
int torus_delta(std::size_t to, std::size_t from, std::size_t n) {
  long d = static_cast<long>(to) - static_cast<long>(from);
  const long m = static_cast<long>(n);
  d = ((d % m) + m) % m;
  if (d > m / 2) d -= m;
  return static_cast<int>(d);
}

int median_of(std::vector<int> v) {
  if (v.empty()) return 0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>((v.size() - 1) / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

FlowField infer_flow(const FactorView& model, std::span<const double> x, std::span<const double> y,
                     datagen::Shape shape, const FlowOptions& options) {
  const std::size_t n = shape.size();
  if (shape.height != shape.width) throw DimensionError("infer_flow: square patches only");
  if (n > kMaxFlowPixels) throw DimensionError("infer_flow: patch larger than 1024 pixels");
  if (x.size() != n || y.size() != n || model.input_dim() != n || model.output_dim() != n)
    throw DimensionError("infer_flow: image and model dimensions must match the patch shape");
  for (const Matrix* m : {&model.wx, &model.wy, &model.wz})
    if (!linalg::all_finite(m->storage())) throw NumericalError("infer_flow: model has non-finite weights");
  if (!linalg::all_finite(x) || !linalg::all_finite(y)) throw NumericalError("infer_flow: non-finite pixels");

  Vector z = make_code(code_preactivation(model, x, y)).z;
  if (options.binarize_code)
    for (double& v : z) v = v > 0.5 ? 1.0 : 0.0;
  const WarpMatrix warp = factored_warp(model, z);
  if (linalg::max_abs(warp.L.storage()) == 0.0) throw DataError("infer_flow: the model maps this pair to a zero warp");

  const std::size_t w = shape.width, h = shape.height;
  FlowField flow;
  flow.shape = shape;
  flow.dr.resize(n);
  flow.dc.resize(n);
  flow.confidence.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ri = i / w, ci = i % w;
    double best = -std::numeric_limits<double>::infinity();
    int bdr = 0, bdc = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = warp.L(j, i);
      const int dr = torus_delta(j / w, ri, h), dc = torus_delta(j % w, ci, w);
      // Strict improvement, or a tie won by the smaller displacement; equal
      // magnitudes keep the earlier (row-major) target.
      if (v > best || (v == best && dr * dr + dc * dc < bdr * bdr + bdc * bdc)) {
        best = v;
        bdr = dr;
        bdc = dc;
      }
    }
    flow.dr[i] = bdr;
    flow.dc[i] = bdc;
    flow.confidence[i] = best;
  }
  return flow;
}

datagen::Shift median_displacement(const FlowField& flow, std::size_t begin, std::size_t end) {
  end = std::min(end, flow.size());
  if (begin >= end) throw DimensionError("median_displacement: empty pixel range");
  const auto b = static_cast<std::ptrdiff_t>(begin), e = static_cast<std::ptrdiff_t>(end);
  return {median_of({flow.dc.begin() + b, flow.dc.begin() + e}), median_of({flow.dr.begin() + b, flow.dr.begin() + e})};
}

double uniform_fraction(const FlowField& flow, double ratio) {
  if (flow.size() == 0) return 0.0;
  const datagen::Shift med = median_displacement(flow);
  const double cut = ratio * *std::max_element(flow.confidence.begin(), flow.confidence.end());
  std::size_t confident = 0, agree = 0;
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (flow.confidence[i] < cut) continue;
    ++confident;
    if (flow.at(i) == med) ++agree;
  }
  return confident ? double(agree) / double(confident) : 0.0;
}

Vector analogy(const FactorView& model, std::span<const double> x_src, std::span<const double> y_src,
               std::span<const double> x_new) {
  if (x_new.size() != model.input_dim()) throw DimensionError("analogy: new input does not match the model");
  const MappingCode code = make_code(code_preactivation(model, x_src, y_src));
  return predict_output(model, x_new, code.z);
}

double correlation(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty()) throw DimensionError("correlation: length mismatch");
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i] / n, mb += b[i] / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return saa > 0 && sbb > 0 ? sab / std::sqrt(saa * sbb) : 0.0;
}

std::string flow_to_json(const FlowField& flow) {
  nlohmann::json j;
  j["height"] = flow.shape.height;
  j["width"] = flow.shape.width;
  j["dr"] = flow.dr;
  j["dc"] = flow.dc;
  j["confidence"] = flow.confidence;
  const datagen::Shift med = median_displacement(flow);
  j["median"] = {{"dr", med.dy}, {"dc", med.dx}};
  j["uniform_fraction"] = uniform_fraction(flow);
  return j.dump();
}

render::GrayImage render_flow(const FlowField& flow, std::size_t cell) {
  const std::size_t h = flow.shape.height, w = flow.shape.width;
  render::GrayImage img(w * cell, h * cell, 0);
  const double cmax = std::max(1e-300, *std::max_element(flow.confidence.begin(), flow.confidence.end()));
  for (std::size_t i = 0; i < flow.size(); ++i) {
    const double r0 = (i / w) * cell + cell / 2.0, c0 = (i % w) * cell + cell / 2.0;
    const double len = 0.45 * cell;
    const double nr = flow.dr[i], nc = flow.dc[i];
    const double mag = std::hypot(nr, nc);
    const auto shade = static_cast<std::uint8_t>(64 + std::lround(191 * std::clamp(flow.confidence[i] / cmax, 0.0, 1.0)));
    if (mag == 0) {
      img.at(static_cast<std::size_t>(r0), static_cast<std::size_t>(c0)) = shade;
      continue;
    }
    const double ur = nr / mag, uc = nc / mag;
    const double r1 = r0 + ur * len, c1 = c0 + uc * len;
    render::draw_line(img, r0, c0, r1, c1, shade);
    // Arrow head: two short strokes back from the tip.
    const double hr = -ur * 0.35 * len, hc = -uc * 0.35 * len;
    render::draw_line(img, r1, c1, r1 + hr - uc * 0.25 * len, c1 + hc + ur * 0.25 * len, shade);
    render::draw_line(img, r1, c1, r1 + hr + uc * 0.25 * len, c1 + hc - ur * 0.25 * len, shade);
  }
  return img;
}

}  // namespace relate::infer
