#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>

#include "error.hpp"

namespace wvad {

// Little-endian primitive writer; the host byte order does not matter.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& out) : out_(out) {}

  void magic(std::string_view m) { out_.write(m.data(), static_cast<std::streamsize>(m.size())); }
  void u32(std::uint32_t v) { le(v); }
  void u64(std::uint64_t v) { le(v); }
  void f32(float v) { le(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { le(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    out_.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
  bool ok() const { return static_cast<bool>(out_); }

 private:
  template <class U>
  void le(U v) {
    std::array<char, sizeof(U)> buf{};
    for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    out_.write(buf.data(), buf.size());
  }
  std::ostream& out_;
};

// Counterpart of BinaryWriter. Every failure reports the byte offset.
class BinaryReader {
 public:
  explicit BinaryReader(std::istream& in) : in_(in) {}

  void expect_magic(std::string_view m) {
    const auto at = offset_;
    std::string got(m.size(), '\0');
    read(got.data(), got.size(), "magic");
    if (got != m) throw FormatError("bad magic, expected \"" + std::string(m) + "\"", at);
  }
  std::uint32_t u32() { return le<std::uint32_t>("u32"); }
  std::uint64_t u64() { return le<std::uint64_t>("u64"); }
  float f32() { return std::bit_cast<float>(le<std::uint32_t>("f32")); }
  double f64() { return std::bit_cast<double>(le<std::uint64_t>("f64")); }
  std::string bytes() {
    const auto n = u32();
    std::string s(n, '\0');
    read(s.data(), n, "string payload");
    return s;
  }
  std::uint64_t offset() const noexcept { return offset_; }
  bool at_end() { return in_.peek() == std::char_traits<char>::eof(); }

 private:
  template <class U>
  U le(const char* what) {
    std::array<unsigned char, sizeof(U)> buf{};
    read(reinterpret_cast<char*>(buf.data()), buf.size(), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
    return v;
  }
  void read(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw FormatError(std::string("truncated input while reading ") + what, offset_ + static_cast<std::uint64_t>(in_.gcount()));
    offset_ += n;
  }
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace wvad
