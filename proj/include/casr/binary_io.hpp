#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "casr/errors.hpp"

namespace casr {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian and written by memcpy");

/// Appends little-endian scalars to a byte buffer.
class ByteWriter {
 public:
  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    const auto* p = reinterpret_cast<const char*>(&value);
    bytes_.insert(bytes_.end(), p, p + sizeof(T));
  }
  void put_bytes(std::string_view s) { bytes_.insert(bytes_.end(), s.begin(), s.end()); }

  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

/// Reads little-endian scalars; every failure reports the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::vector<char> bytes) : bytes_(std::move(bytes)) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get(const char* what) {
    need(sizeof(T), what);
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string get_bytes(std::size_t n, const char* what) {
    need(n, what);
    std::string s(bytes_.data() + pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw IoError(std::string("truncated while reading ") + what, static_cast<std::int64_t>(pos_));
    }
  }

  std::vector<char> bytes_;
  std::size_t pos_ = 0;
};

std::vector<char> read_file_bytes(const std::filesystem::path& path);
// Writes via a temporary file and rename so readers never see a partial file.
void write_file_bytes(const std::filesystem::path& path, const std::vector<char>& bytes);

}  // namespace casr
