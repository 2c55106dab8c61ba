#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>

namespace fcdn {

// Streaming FNV-1a (64-bit). Used to fingerprint datasets, configs and
// checkpoints so pipelines can refuse mismatched inputs.
class Fnv1a {
 public:
  void update(const void* data, std::size_t n);
  void update(std::string_view s) { update(s.data(), s.size()); }
  void update_u64(std::uint64_t v);
  void update_i64(std::int64_t v) { update_u64(static_cast<std::uint64_t>(v)); }
  void update_f64(double v);
  std::uint64_t digest() const { return h_; }

 private:
  std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

std::string hex64(std::uint64_t v);
std::uint64_t hash_string(std::string_view s);

}  // namespace fcdn
