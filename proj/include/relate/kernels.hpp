// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string_view>

namespace relate::kernels {

// Inner-loop primitives over contiguous f64 arrays. Every variant of a table
// must agree with the scalar reference: elementwise kernels bit-for-bit, the
// reductions (dot, sum_sq) up to summation order.
struct KernelTable {
  std::string_view name;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum_sq)(const double* a, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out = a * b (elementwise)
  void (*mul)(const double* a, const double* b, double* out, std::size_t n);
  // out += a * b (elementwise)
  void (*mul_acc)(const double* a, const double* b, double* out, std::size_t n);
  // x *= alpha
  void (*scale)(double alpha, double* x, std::size_t n);
};

const KernelTable& scalar_table();

// nullptr when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table();

// The table used by the library. Chosen once: RELATE_KERNELS=scalar|avx2
// overrides, otherwise the widest supported variant.
const KernelTable& active();

// Test hook. Returns false if the named variant is unavailable.
bool select(std::string_view name);

}  // namespace relate::kernels
