#include "fcdn/bicubic.hpp"

#include <cmath>

namespace fcdn {

namespace {

// Cubic convolution kernel with a = -0.5.
double cubic_kernel(double x) {
  x = std::abs(x);
  if (x <= 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

}  // namespace

std::vector<double> cubic_resize_matrix(int n_in, int n_out) {
  require(n_in >= 2, "cubic resize: need at least 2 input samples");
  require(n_out >= 1, "cubic resize: need at least 1 output sample");
  std::vector<double> m(static_cast<std::size_t>(n_out) * n_in, 0.0);
  const double scale = static_cast<double>(n_in) / n_out;
  for (int i = 0; i < n_out; ++i) {
    double* row = &m[static_cast<std::size_t>(i) * n_in];
    const double s = (i + 0.5) * scale - 0.5;
    const auto base = static_cast<std::int64_t>(std::floor(s));
    for (std::int64_t tap = base - 1; tap <= base + 2; ++tap) {
      const double w = cubic_kernel(s - static_cast<double>(tap));
      if (w == 0.0) continue;
      if (tap < 0) {
        // x[-k] treated as x[0] + k*(x[0]-x[1])
        const double k = static_cast<double>(-tap);
        row[0] += (1.0 + k) * w;
        row[1] -= k * w;
      } else if (tap >= n_in) {
        const double k = static_cast<double>(tap - (n_in - 1));
        row[n_in - 1] += (1.0 + k) * w;
        row[n_in - 2] -= k * w;
      } else {
        row[tap] += w;
      }
    }
  }
  return m;
}

BicubicResize::BicubicResize(int h_in, int w_in, int h_out, int w_out)
    : h_in_(h_in), w_in_(w_in), h_out_(h_out), w_out_(w_out) {
  require(h_out >= 1 && w_out >= 1, "bicubic: bad target size");
  rh_ = cubic_resize_matrix(h_in, h_out);
  rw_ = cubic_resize_matrix(w_in, w_out);
  rh_t_.assign(static_cast<std::size_t>(h_in) * h_out, 0.0);
  for (int r = 0; r < h_out; ++r)
    for (int c = 0; c < h_in; ++c)
      rh_t_[static_cast<std::size_t>(c) * h_out + r] =
          rh_[static_cast<std::size_t>(r) * h_in + c];
  rw_t_.assign(static_cast<std::size_t>(w_in) * w_out, 0.0);
  for (int r = 0; r < w_out; ++r)
    for (int c = 0; c < w_in; ++c)
      rw_t_[static_cast<std::size_t>(c) * w_out + r] =
          rw_[static_cast<std::size_t>(r) * w_in + c];
}

}  // namespace fcdn
