// Copyright 2026 The Relate Authors
// SPDX-License-Identifier: Apache-2.0

// Little-endian byte packing for the RELB/RELW containers.

#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <span>
#include <string>

#include "relate/errors.hpp"

namespace relate::binio {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
    std::reverse(bytes.begin(), bytes.end());
    return std::bit_cast<T>(bytes);
  }
  return v;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void magic(const char (&m)[5]) { bytes(m, 4); }
  void u8(std::uint8_t v) { bytes(&v, 1); }
  void u32(std::uint32_t v) { v = to_little(v); bytes(&v, sizeof v); }
  void u64(std::uint64_t v) { v = to_little(v); bytes(&v, sizeof v); }
  void f64(double v) { v = to_little(v); bytes(&v, sizeof v); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

  void bytes(void* p, std::size_t n) {
    if (pos_ + n > data_.size()) throw DataError(what_ + ": truncated");
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  void expect_magic(const char (&m)[5]) {
    char got[4];
    bytes(got, 4);
    if (std::memcmp(got, m, 4) != 0) throw DataError(what_ + ": bad magic, expected " + std::string(m, 4));
  }
  std::uint8_t u8() { std::uint8_t v; bytes(&v, 1); return v; }
  std::uint32_t u32() { std::uint32_t v; bytes(&v, sizeof v); return to_little(v); }
  std::uint64_t u64() { std::uint64_t v; bytes(&v, sizeof v); return to_little(v); }
  double f64() { double v; bytes(&v, sizeof v); return to_little(v); }
  void f64s(std::span<double> vs) {
    for (double& v : vs) v = f64();
  }
  std::size_t position() const { return pos_; }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "' for reading");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DataError("write to '" + path + "' failed");
}

}  // namespace relate::binio
