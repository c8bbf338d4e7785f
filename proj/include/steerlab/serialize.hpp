#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "steerlab/error.hpp"
#include "steerlab/tensor.hpp"

namespace steerlab {

// Tensor-table container: magic (4 bytes), format version u16, a
// caller-defined config block, then a table of named tensors
// (name length u32, name bytes, dtype tag u8, rank u8, dims u32 each,
// raw little-endian f32 data). All integers little-endian.
constexpr uint16_t kTensorTableVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

class ByteWriter {
 public:
  void u8(uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void bytes(const void* p, size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f32_array(const std::vector<float>& v) {
    for (float x : v) f32(x);
  }
  const std::string& data() const { return buf_; }

 private:
  std::string buf_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : buf_(std::move(data)) {}

  size_t offset() const { return pos_; }
  size_t remaining() const { return buf_.size() - pos_; }

  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(buf_[pos_++]);
  }
  uint16_t u16() {
    need(2);
    uint16_t v = 0;
    for (int i = 0; i < 2; ++i) v |= static_cast<uint16_t>(static_cast<uint8_t>(buf_[pos_++])) << (8 * i);
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf_[pos_++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf_[pos_++])) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    uint32_t n = u32();
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void f32_into(std::vector<float>& out, size_t count) {
    need(count * 4);
    out.resize(count);
    // Little-endian host assumed; bytes were written LE.
    std::memcpy(out.data(), buf_.data() + pos_, count * 4);
    pos_ += count * 4;
  }

 private:
  void need(size_t n) const {
    if (pos_ + n > buf_.size())
      throw FormatError("truncated file: need " + std::to_string(n) + " bytes at offset " +
                        std::to_string(pos_) + ", file has " + std::to_string(buf_.size()));
  }
  std::string buf_;
  size_t pos_ = 0;
};

inline void write_tensor_entry(ByteWriter& w, const std::string& name, const Tensor& t) {
  w.str(name);
  w.u8(kDtypeF32);
  w.u8(static_cast<uint8_t>(t.rank()));
  for (int d : t.shape) w.u32(static_cast<uint32_t>(d));
  w.bytes(t.data.data(), t.data.size() * sizeof(float));  // LE host
}

inline std::pair<std::string, Tensor> read_tensor_entry(ByteReader& r) {
  std::string name = r.str();
  uint8_t dtype = r.u8();
  if (dtype != kDtypeF32)
    throw FormatError("unsupported dtype tag " + std::to_string(dtype) + " at offset " +
                      std::to_string(r.offset() - 1));
  uint8_t rank = r.u8();
  std::vector<int> shape;
  int64_t numel = 1;
  for (int i = 0; i < rank; ++i) {
    uint32_t d = r.u32();
    if (d == 0 || d > (1u << 28))
      throw FormatError("bad dimension " + std::to_string(d) + " at offset " +
                        std::to_string(r.offset() - 4));
    shape.push_back(static_cast<int>(d));
    numel *= d;
  }
  Tensor t;
  t.shape = std::move(shape);
  r.f32_into(t.data, static_cast<size_t>(numel));
  return {std::move(name), std::move(t)};
}

inline void check_magic_version(ByteReader& r, const char expect[4], const std::string& kind) {
  if (r.remaining() < 4)
    throw FormatError(kind + ": file shorter than magic at offset 0");
  char magic[4];
  for (int i = 0; i < 4; ++i) magic[i] = static_cast<char>(r.u8());
  if (std::memcmp(magic, expect, 4) != 0)
    throw FormatError(kind + ": bad magic at offset 0, expected \"" + std::string(expect, 4) + "\"");
  uint16_t version = r.u16();
  if (version != kTensorTableVersion)
    throw FormatError(kind + ": unsupported format version " + std::to_string(version) +
                      " at offset 4 (supported: " + std::to_string(kTensorTableVersion) + ")");
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw Error("cannot open for writing: " + path);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw Error("write failed: " + path);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open for reading: " + path);
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return s;
}

}  // namespace steerlab
