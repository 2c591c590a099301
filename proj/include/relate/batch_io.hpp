// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "relate/datagen.hpp"

namespace relate::datagen {

// RELB container:
//   "RELB", u32 version, u64 num_pairs, u64 I, u64 J,
//   x block (num_pairs × I f64), y block (num_pairs × J f64),
//   u8 has_labels; if set: u32 label kind, u64 label width, labels (f64).
// All little-endian, row-major. Patch shapes live in the JSON manifest.
inline constexpr std::uint32_t kBatchVersion = 1;

std::string encode_batch(const PairBatch& batch);
// Shapes default to 1 × dim; the manifest reader restores them.
PairBatch decode_batch(const std::string& bytes);

void write_batch(const std::string& path, const PairBatch& batch);
PairBatch read_batch(const std::string& path);

}  // namespace relate::datagen
