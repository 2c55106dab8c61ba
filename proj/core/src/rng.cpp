#include "fcdn/rng.hpp"

#include <cmath>

#include "fcdn/error.hpp"

namespace fcdn {

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> path) {
  std::uint64_t state = base ^ 0xa5a5a5a55a5a5a5aULL;
  std::uint64_t out = splitmix64(state);
  for (std::uint64_t p : path) {
    state ^= p * 0x9e3779b97f4a7c15ULL;
    out = splitmix64(state);
  }
  return out;
}

Rng::Rng(std::uint64_t seed) {
  // Seed the four xoshiro words from splitmix64, per the generator's authors.
  std::uint64_t sm = seed;
  for (auto& w : s_) w = splitmix64(sm);
}

static inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  // 53 random bits into [0, 1); exact on IEEE doubles.
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform();
}

double Rng::gaussian() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  while (u1 == 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double a = 2.0 * M_PI * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

double Rng::gaussian(double mu, double sigma) {
  return mu + sigma * gaussian();
}

double Rng::von_mises(double kappa) {
  require(kappa >= 0.0, "von_mises: kappa must be non-negative");
  if (kappa < 1e-9) return uniform(-M_PI, M_PI);
  // Best & Fisher (1979) rejection sampler.
  const double tau = 1.0 + std::sqrt(1.0 + 4.0 * kappa * kappa);
  const double rho = (tau - std::sqrt(2.0 * tau)) / (2.0 * kappa);
  const double r = (1.0 + rho * rho) / (2.0 * rho);
  for (;;) {
    const double u1 = uniform();
    const double z = std::cos(M_PI * u1);
    const double f = (1.0 + r * z) / (r + z);
    const double c = kappa * (r - f);
    const double u2 = uniform();
    if (c * (2.0 - c) - u2 > 0.0 || std::log(c / u2) + 1.0 - c >= 0.0) {
      const double u3 = uniform();
      return (u3 < 0.5 ? -1.0 : 1.0) * std::acos(f);
    }
  }
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
  require(n > 0, "uniform_int: n must be positive");
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace fcdn
