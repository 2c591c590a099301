// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

#include "relate/batch_io.hpp"

#include "binio.hpp"
#include "relate/errors.hpp"

namespace relate::datagen {

std::string encode_batch(const PairBatch& batch) {
  batch.validate();
  binio::Writer w;
  w.magic("RELB");
  w.u32(kBatchVersion);
  w.u64(batch.size());
  w.u64(batch.input_dim());
  w.u64(batch.output_dim());
  w.f64s(batch.x.storage());
  w.f64s(batch.y.storage());
  const bool has_labels = batch.label_kind != LabelKind::kNone;
  w.u8(has_labels ? 1 : 0);
  if (has_labels) {
    w.u32(static_cast<std::uint32_t>(batch.label_kind));
    w.u64(batch.labels.cols());
    w.f64s(batch.labels.storage());
  }
  return w.str();
}

PairBatch decode_batch(const std::string& bytes) {
  binio::Reader r(bytes, "batch");
  r.expect_magic("RELB");
  const std::uint32_t version = r.u32();
  if (version != kBatchVersion) throw DataError("batch: unsupported version " + std::to_string(version));
  const std::uint64_t n = r.u64(), I = r.u64(), J = r.u64();
  if (bytes.size() < 4 + 4 + 24 + 8 * n * (I + J) + 1) throw DataError("batch: truncated");
  PairBatch b;
  b.x = Matrix(n, I);
  b.y = Matrix(n, J);
  b.x_shape = Shape{1, I};
  b.y_shape = Shape{1, J};
  r.f64s(b.x.storage());
  r.f64s(b.y.storage());
  if (r.u8() != 0) {
    const std::uint32_t kind = r.u32();
    if (kind > static_cast<std::uint32_t>(LabelKind::kVelocity)) throw DataError("batch: unknown label kind");
    b.label_kind = static_cast<LabelKind>(kind);
    const std::uint64_t width = r.u64();
    if (width != label_width(b.label_kind)) throw DataError("batch: label width does not match its kind");
    b.labels = Matrix(n, width);
    r.f64s(b.labels.storage());
  }
  if (!r.done()) throw DataError("batch: trailing bytes");
  b.validate();
  return b;
}

void write_batch(const std::string& path, const PairBatch& batch) { binio::write_file(path, encode_batch(batch)); }

PairBatch read_batch(const std::string& path) {
  try {
    return decode_batch(binio::read_file(path));
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

}  // namespace relate::datagen
