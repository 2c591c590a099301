// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Helpers shared by the unit suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "relate/gae.hpp"
#include "relate/matrix.hpp"
#include "relate/random.hpp"
#include "relate/tensor_core.hpp"

namespace relate::testing {

inline Vector gaussian_vector(std::size_t n, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> d(0.0, stddev);
  Vector v(n);
  for (double& e : v) e = d(rng);
  return v;
}

inline FactoredParams random_params(std::size_t I, std::size_t J, std::size_t K, std::size_t F, Rng& rng,
                                    double stddev = 0.5) {
  FactoredParams p = FactoredParams::zeros(I, J, K, F);
  fill_gaussian(p.wx, stddev, rng);
  fill_gaussian(p.wy, stddev, rng);
  fill_gaussian(p.wz, stddev, rng);
  p.bias_x = gaussian_vector(I, rng, 0.1);
  p.bias_y = gaussian_vector(J, rng, 0.1);
  p.bias_z = gaussian_vector(K, rng, 0.1);
  return p;
}

inline double max_rel_error(std::span<const double> got, std::span<const double> want) {
  double scale = 0.0;
  for (double w : want) scale = std::max(scale, std::abs(w));
  double err = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) err = std::max(err, std::abs(got[i] - want[i]));
  return scale > 0 ? err / scale : err;
}

inline double rel_error(double got, double want) {
  return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

}  // namespace relate::testing
