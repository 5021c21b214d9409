#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "ath/common.hpp"

namespace ath::detail {

// Little-endian byte IO, independent of host endianness.

inline void write_u8(std::ostream& out, std::uint8_t v) {
  out.put(static_cast<char>(v));
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
  char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(buf, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xffu);
  out.write(buf, 8);
}

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void fail_truncated(const std::string& path) {
  throw IoError("unexpected end of file: " + path);
}

inline std::uint8_t read_u8(std::istream& in, const std::string& path) {
  const int c = in.get();
  if (c == std::char_traits<char>::eof()) fail_truncated(path);
  return static_cast<std::uint8_t>(c);
}

inline std::uint32_t read_u32(std::istream& in, const std::string& path) {
  char buf[4];
  if (!in.read(buf, 4)) fail_truncated(path);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i)
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(std::istream& in, const std::string& path) {
  char buf[8];
  if (!in.read(buf, 8)) fail_truncated(path);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i)
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[i])) << (8 * i);
  return v;
}

inline double read_f64(std::istream& in, const std::string& path) {
  return std::bit_cast<double>(read_u64(in, path));
}

}  // namespace ath::detail
