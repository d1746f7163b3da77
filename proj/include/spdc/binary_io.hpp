#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "spdc/errors.hpp"

namespace spdc::io {

static_assert(std::endian::native == std::endian::little,
              "container formats assume a little-endian host");

std::uint32_t crc32(std::span<const std::byte> bytes);
std::uint32_t crc32(std::string_view bytes);

/// Append-only little-endian byte buffer.
class ByteWriter {
 public:
  template <class T>
    requires std::is_trivially_copyable_v<T>
  void put(const T& v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    buf_.append(p, sizeof(T));
  }

  template <class T>
    requires std::is_trivially_copyable_v<T>
  void put_span(std::span<const T> v) {
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size_bytes());
  }

  void put_bytes(std::string_view s) { buf_.append(s); }

  /// u32 length prefix followed by the raw bytes.
  void put_string(std::string_view s) {
    put(static_cast<std::uint32_t>(s.size()));
    buf_.append(s);
  }

  std::size_t size() const { return buf_.size(); }
  const std::string& bytes() const { return buf_; }
  std::string_view tail(std::size_t from) const {
    return std::string_view(buf_).substr(from);
  }

 private:
  std::string buf_;
};

/// Bounds-checked reader; every overrun is a FormatError ("truncated").
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}

  template <class T>
    requires std::is_trivially_copyable_v<T>
  T get() {
    require(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  template <class T>
    requires std::is_trivially_copyable_v<T>
  void get_span(std::span<T> out) {
    require(out.size_bytes());
    std::memcpy(out.data(), data_.data() + pos_, out.size_bytes());
    pos_ += out.size_bytes();
  }

  std::string get_string() {
    const auto n = get<std::uint32_t>();
    require(n);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
  }

  std::string_view view(std::size_t from, std::size_t to) const {
    return data_.substr(from, to - from);
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void require(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError("truncated payload");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace spdc::io
