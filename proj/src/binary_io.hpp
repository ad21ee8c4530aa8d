#ifndef CTCATTN_SRC_BINARY_IO_HPP_
#define CTCATTN_SRC_BINARY_IO_HPP_

#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

// Fixed little-endian encoding independent of host byte order.
namespace ctcattn::io {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename U>
void put_le(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  }
  os.write(buf, sizeof(U));
}

template <typename U>
U get_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) {
    throw FormatError("unexpected end of stream");
  }
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    v |= static_cast<U>(buf[i]) << (8 * i);
  }
  return v;
}

inline void put_f32(std::ostream& os, float f) {
  put_le<std::uint32_t>(os, std::bit_cast<std::uint32_t>(f));
}
inline float get_f32(std::istream& is) {
  return std::bit_cast<float>(get_le<std::uint32_t>(is));
}
inline void put_f64(std::ostream& os, double d) {
  put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(d));
}
inline double get_f64(std::istream& is) {
  return std::bit_cast<double>(get_le<std::uint64_t>(is));
}

inline void put_str(std::ostream& os, const std::string& s) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_str(std::istream& is, std::size_t max_len) {
  const auto n = get_le<std::uint32_t>(is);
  if (n > max_len) throw FormatError("string length out of range");
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError("truncated string");
  return s;
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
  char buf[4];
  if (!is.read(buf, 4) || std::string(buf, 4) != std::string(magic, 4)) {
    throw FormatError(std::string("bad magic, expected ") + magic);
  }
}

}  // namespace ctcattn::io

#endif  // CTCATTN_SRC_BINARY_IO_HPP_
