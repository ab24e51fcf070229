#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>

namespace milvad::detail {

// All on-disk formats are little-endian regardless of host order.

inline void encode_u32le(std::uint32_t v, unsigned char out[4]) {
  out[0] = static_cast<unsigned char>(v & 0xFF);
  out[1] = static_cast<unsigned char>((v >> 8) & 0xFF);
  out[2] = static_cast<unsigned char>((v >> 16) & 0xFF);
  out[3] = static_cast<unsigned char>((v >> 24) & 0xFF);
}

inline std::uint32_t decode_u32le(const unsigned char in[4]) {
  return static_cast<std::uint32_t>(in[0]) |
         (static_cast<std::uint32_t>(in[1]) << 8) |
         (static_cast<std::uint32_t>(in[2]) << 16) |
         (static_cast<std::uint32_t>(in[3]) << 24);
}

inline void put_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char buf[4];
  encode_u32le(v, buf);
  os.write(reinterpret_cast<const char*>(buf), 4);
}

inline bool get_u32le(std::istream& is, std::uint32_t& v) {
  unsigned char buf[4];
  is.read(reinterpret_cast<char*>(buf), 4);
  if (is.gcount() != 4) return false;
  v = decode_u32le(buf);
  return true;
}

inline void put_u64le(std::ostream& os, std::uint64_t v) {
  put_u32le(os, static_cast<std::uint32_t>(v & 0xFFFFFFFFu));
  put_u32le(os, static_cast<std::uint32_t>(v >> 32));
}

inline bool get_u64le(std::istream& is, std::uint64_t& v) {
  std::uint32_t lo = 0, hi = 0;
  if (!get_u32le(is, lo) || !get_u32le(is, hi)) return false;
  v = static_cast<std::uint64_t>(lo) | (static_cast<std::uint64_t>(hi) << 32);
  return true;
}

inline void put_f32le(std::ostream& os, float f) {
  put_u32le(os, std::bit_cast<std::uint32_t>(f));
}

inline bool get_f32le(std::istream& is, float& f) {
  std::uint32_t bits = 0;
  if (!get_u32le(is, bits)) return false;
  f = std::bit_cast<float>(bits);
  return true;
}

inline void put_f64le(std::ostream& os, double d) {
  put_u64le(os, std::bit_cast<std::uint64_t>(d));
}

inline bool get_f64le(std::istream& is, double& d) {
  std::uint64_t bits = 0;
  if (!get_u64le(is, bits)) return false;
  d = std::bit_cast<double>(bits);
  return true;
}

}  // namespace milvad::detail
