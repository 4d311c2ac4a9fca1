#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace narstar {

class ChecksumMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised for unreadable or malformed files; carries the path in the message.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Little-endian byte buffer builder.
class ByteWriter {
 public:
  void u32(std::uint32_t x) { put_le(x); }
  void u64(std::uint64_t x) { put_le(x); }
  void f64(double x) { put_le(std::bit_cast<std::uint64_t>(x)); }
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }

  /// Appends a CRC-32 of everything written so far.
  void seal();

  const std::vector<char>& buffer() const noexcept { return buf_; }

 private:
  template <typename T>
  void put_le(T x) {
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      buf_.push_back(static_cast<char>(static_cast<unsigned char>(x >> (8 * i))));
    }
  }
  std::vector<char> buf_;
};

/// Little-endian reader over an in-memory file image.
class ByteReader {
 public:
  ByteReader(std::vector<char> data, std::string origin)
      : data_(std::move(data)), origin_(std::move(origin)) {}

  std::uint32_t u32() { return get_le<std::uint32_t>(); }
  std::uint64_t u64() { return get_le<std::uint64_t>(); }
  double f64() { return std::bit_cast<double>(get_le<std::uint64_t>()); }
  std::string bytes(std::size_t n);
  std::string string() { return bytes(u32()); }

  /// Verifies and strips the trailing CRC-32. Throws ChecksumMismatch.
  void verify_seal();
  bool at_end() const noexcept { return pos_ == data_.size(); }
  const std::string& origin() const noexcept { return origin_; }

  [[noreturn]] void fail(const std::string& what) const;

 private:
  template <typename T>
  T get_le() {
    if (data_.size() - pos_ < sizeof(T)) fail("unexpected end of file");
    T x = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      x |= static_cast<T>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    return x;
  }
  std::vector<char> data_;
  std::string origin_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<char>& data);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace narstar
