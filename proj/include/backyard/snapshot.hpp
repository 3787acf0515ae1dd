// Usable under the terms in the Apache License, Version 2.0.
//
// Byte-exact snapshot primitives. All integers are stored little-endian at
// fixed width; containers are length-prefixed with u64. The container layout
// for each structure is documented in docs/FORMAT.md.

#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"

namespace backyard {

class SnapshotWriter {
 public:
  void put_u8(std::uint8_t v) { buf_.push_back(v); }

  void put_u32(u32 v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void put_u64(u64 v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }

  void put_f64(double v) {
    u64 bits;
    std::memcpy(&bits, &v, 8);
    put_u64(bits);
  }

  void put_u64_vec(const std::vector<u64>& v) {
    put_u64(v.size());
    for (u64 x : v) put_u64(x);
  }

  void put_bytes(const std::string& s) {
    put_u64(s.size());
    buf_.insert(buf_.end(), s.begin(), s.end());
  }

  const std::vector<std::uint8_t>& bytes() const { return buf_; }

  void write_file(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("snapshot: cannot open " + path);
    out.write(reinterpret_cast<const char*>(buf_.data()),
              static_cast<std::streamsize>(buf_.size()));
  }

 private:
  std::vector<std::uint8_t> buf_;
};

class SnapshotReader {
 public:
  explicit SnapshotReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}

  static SnapshotReader from_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("snapshot: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return SnapshotReader(std::move(bytes));
  }

  std::uint8_t get_u8() {
    need(1);
    return buf_[pos_++];
  }

  u32 get_u32() {
    need(4);
    u32 v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<u32>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }

  u64 get_u64() {
    need(8);
    u64 v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<u64>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }

  double get_f64() {
    u64 bits = get_u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }

  std::vector<u64> get_u64_vec() {
    u64 n = get_u64();
    need(n * 8);
    std::vector<u64> v(n);
    for (u64 i = 0; i < n; ++i) v[i] = get_u64();
    return v;
  }

  std::string get_bytes() {
    u64 n = get_u64();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == buf_.size(); }

 private:
  void need(u64 n) const {
    if (pos_ + n > buf_.size()) throw std::runtime_error("snapshot: truncated input");
  }

  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

}  // namespace backyard
