#pragma once

// Little-endian binary readers/writers with a trailing CRC32 (zlib).

#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <zlib.h>

namespace lapar {

class BinaryWriter {
 public:
  void u16(uint16_t v) { raw(&v, 2); }
  void u32(uint32_t v) { raw(&v, 4); }
  void f32(float v) { raw(&v, 4); }
  void f64(double v) { raw(&v, 8); }
  void bytes(const void* p, size_t n) { raw(p, n); }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    raw(s.data(), s.size());
  }

  uint32_t crc() const {
    return static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf_.data()), static_cast<uInt>(buf_.size())));
  }

  // Appends the CRC of everything written so far, then writes the file.
  void finish(const std::string& path) {
    uint32_t c = crc();
    u32(c);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    f.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
  }

  const std::vector<char>& buffer() const { return buf_; }

 private:
  void raw(const void* p, size_t n) {
    const char* c = static_cast<const char*>(p);
    buf_.insert(buf_.end(), c, c + n);
  }
  std::vector<char> buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::string& path) : path_(path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    buf_.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    if (buf_.size() < 4) throw std::runtime_error("truncated file: " + path);
    uint32_t stored;
    std::memcpy(&stored, buf_.data() + buf_.size() - 4, 4);
    uint32_t actual = static_cast<uint32_t>(crc32(
        0L, reinterpret_cast<const Bytef*>(buf_.data()), static_cast<uInt>(buf_.size() - 4)));
    if (stored != actual) throw std::runtime_error("CRC mismatch (corrupt file): " + path);
    end_ = buf_.size() - 4;
  }

  uint16_t u16() { uint16_t v; raw(&v, 2); return v; }
  uint32_t u32() { uint32_t v; raw(&v, 4); return v; }
  float f32() { float v; raw(&v, 4); return v; }
  double f64() { double v; raw(&v, 8); return v; }
  std::string str() {
    uint32_t n = u32();
    if (pos_ + n > end_) throw std::runtime_error("truncated field in " + path_);
    std::string s(buf_.data() + pos_, n);
    pos_ += n;
    return s;
  }
  void bytes(void* p, size_t n) { raw(p, n); }
  bool at_end() const { return pos_ == end_; }

 private:
  void raw(void* p, size_t n) {
    if (pos_ + n > end_) throw std::runtime_error("truncated field in " + path_);
    std::memcpy(p, buf_.data() + pos_, n);
    pos_ += n;
  }
  std::string path_;
  std::vector<char> buf_;
  size_t pos_ = 0;
  size_t end_ = 0;
};

}  // namespace lapar
