#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>

#include "vidseq/errors.hpp"

// Little-endian primitive streams shared by the record, checkpoint, and
// codebook formats.
namespace vidseq::binary {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

class Writer {
 public:
  explicit Writer(std::ostream& out) : out_(out) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    bytes(&value, sizeof(T));
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void put_array(std::span<const T> values) {
    bytes(values.data(), values.size_bytes());
  }

  void put_string16(const std::string& s) {
    if (s.size() > UINT16_MAX) throw ValidationError("string longer than 65535 bytes: " + s.substr(0, 32));
    put<std::uint16_t>(static_cast<std::uint16_t>(s.size()));
    bytes(s.data(), s.size());
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed after " + std::to_string(written_) + " bytes");
    written_ += n;
  }

  std::uint64_t written() const noexcept { return written_; }

 private:
  std::ostream& out_;
  std::uint64_t written_ = 0;
};

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <class T>
    requires std::is_arithmetic_v<T>
  T get() {
    T value{};
    bytes(&value, sizeof(T));
    return value;
  }

  template <class T>
    requires std::is_arithmetic_v<T>
  void get_array(std::span<T> values) {
    bytes(values.data(), values.size_bytes());
  }

  std::string get_string16() {
    const auto n = get<std::uint16_t>();
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::size_t>(in_.gcount());
    if (got != n) {
      throw CorruptionError("unexpected end of file at byte offset " + std::to_string(offset_ + got) +
                            " (needed " + std::to_string(n) + " bytes at offset " +
                            std::to_string(offset_) + ")");
    }
    offset_ += n;
  }

  bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace vidseq::binary
