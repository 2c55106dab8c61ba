#include "fcdn/hashing.hpp"

#include <cstdio>
#include <cstring>

namespace fcdn {

void Fnv1a::update(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h_ ^= p[i];
    h_ *= 0x100000001b3ULL;
  }
}

void Fnv1a::update_u64(std::uint64_t v) {
  // Feed bytes little-endian so the digest is platform independent.
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  update(b, 8);
}

void Fnv1a::update_f64(double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  update_u64(bits);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t hash_string(std::string_view s) {
  Fnv1a h;
  h.update(s);
  return h.digest();
}

}  // namespace fcdn
