#pragma once

#include <cstdint>
#include <initializer_list>
#include <vector>

namespace fcdn {

// splitmix64 step; the reference mixer from Steele et al., used here both as a
// seed expander and to derive independent child streams from (seed, path) pairs.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d4a2fd1a4f14bdULL;
  return z ^ (z >> 31);
}

// Deterministic child-seed derivation: mixing the base seed with a path of
// integers (e.g. {subject, trial, channel}) gives decorrelated streams whose
// draws do not depend on how many values sibling streams consumed.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path);

// Self-contained generator built on xoshiro256** with hand-rolled sampling so
// results are bit-identical across platforms and standard libraries (std::
// distributions are implementation-defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  double gaussian();                      // standard normal, Box-Muller
  double gaussian(double mu, double sigma);
  // Von Mises on (-pi, pi] centered at 0; kappa = 0 degenerates to uniform.
  double von_mises(double kappa);
  // Unbiased integer in [0, n) by rejection.
  std::uint64_t uniform_int(std::uint64_t n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(uniform_int(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace fcdn
