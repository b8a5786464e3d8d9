#pragma once

// Little-endian primitive encoding shared by the container, token and
// checkpoint formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "amrt/error.hpp"

namespace amrt::io {

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

inline void put_u8(std::ostream& out, std::uint8_t v) { put(out, v); }
inline void put_u16(std::ostream& out, std::uint16_t v) { put(out, v); }
inline void put_u32(std::ostream& out, std::uint32_t v) { put(out, v); }
inline void put_f32(std::ostream& out, float v) { put(out, v); }
inline void put_f64(std::ostream& out, double v) { put(out, v); }

inline void put_magic(std::ostream& out, const char (&magic)[5]) { out.write(magic, 4); }

template <typename T>
T get(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T)))
    throw FormatError(FormatError::Kind::truncated, std::string("truncated while reading ") + what);
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

inline std::uint8_t get_u8(std::istream& in, const char* what) { return get<std::uint8_t>(in, what); }
inline std::uint16_t get_u16(std::istream& in, const char* what) { return get<std::uint16_t>(in, what); }
inline std::uint32_t get_u32(std::istream& in, const char* what) { return get<std::uint32_t>(in, what); }
inline float get_f32(std::istream& in, const char* what) { return get<float>(in, what); }
inline double get_f64(std::istream& in, const char* what) { return get<double>(in, what); }

inline void expect_magic(std::istream& in, const char (&magic)[5]) {
  char bytes[4];
  if (!in.read(bytes, 4))
    throw FormatError(FormatError::Kind::truncated, "truncated before magic bytes");
  if (std::memcmp(bytes, magic, 4) != 0)
    throw FormatError(FormatError::Kind::bad_magic,
                      std::string("bad magic: expected ") + magic);
}

inline void expect_version(std::istream& in, std::uint32_t expected) {
  const auto v = get_u32(in, "version");
  if (v != expected)
    throw FormatError(FormatError::Kind::version_mismatch,
                      "version mismatch: file has " + std::to_string(v) + ", reader supports " +
                          std::to_string(expected));
}

}  // namespace amrt::io
