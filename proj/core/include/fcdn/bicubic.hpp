#pragma once

#include <vector>

#include "fcdn/error.hpp"

namespace fcdn {

// Row-major n_out x n_in resampling matrix for cubic-convolution
// interpolation (a = -0.5) on half-pixel sample centers. Taps that fall
// outside the input are folded back onto the edge pair by linear
// extrapolation, so constants and straight ramps resample exactly; rows sum
// to 1.
std::vector<double> cubic_resize_matrix(int n_in, int n_out);

// Separable bicubic image resize with a precomputed plan so the transpose
// (the exact adjoint, used as the backward pass) reuses the same matrices.
class BicubicResize {
 public:
  BicubicResize(int h_in, int w_in, int h_out, int w_out);

  int h_in() const { return h_in_; }
  int w_in() const { return w_in_; }
  int h_out() const { return h_out_; }
  int w_out() const { return w_out_; }

  // x: h_in*w_in row-major image; y: h_out*w_out. apply_transpose maps a
  // gradient w.r.t. the output back to one w.r.t. the input.
  template <class T>
  void apply(const T* x, T* y) const {
    resample(x, y, rh_, rw_, h_in_, w_in_, h_out_, w_out_);
  }
  template <class T>
  void apply_transpose(const T* dy, T* dx) const {
    resample(dy, dx, rh_t_, rw_t_, h_out_, w_out_, h_in_, w_in_);
  }

 private:
  template <class T>
  static void resample(const T* x, T* y, const std::vector<double>& rh,
                       const std::vector<double>& rw, int hi, int wi, int ho,
                       int wo) {
    // tmp = Rh * X, y = tmp * Rw^T
    std::vector<double> tmp(static_cast<std::size_t>(ho) * wi, 0.0);
    for (int r = 0; r < ho; ++r) {
      const double* hrow = &rh[static_cast<std::size_t>(r) * hi];
      double* trow = &tmp[static_cast<std::size_t>(r) * wi];
      for (int k = 0; k < hi; ++k) {
        const double a = hrow[k];
        if (a == 0.0) continue;
        const T* xrow = &x[static_cast<std::size_t>(k) * wi];
        for (int c = 0; c < wi; ++c) trow[c] += a * xrow[c];
      }
    }
    for (int r = 0; r < ho; ++r) {
      const double* trow = &tmp[static_cast<std::size_t>(r) * wi];
      T* yrow = &y[static_cast<std::size_t>(r) * wo];
      for (int c = 0; c < wo; ++c) {
        const double* wrow = &rw[static_cast<std::size_t>(c) * wi];
        double acc = 0.0;
        for (int k = 0; k < wi; ++k) acc += trow[k] * wrow[k];
        yrow[c] = static_cast<T>(acc);
      }
    }
  }

  int h_in_, w_in_, h_out_, w_out_;
  std::vector<double> rh_, rw_;      // h_out x h_in, w_out x w_in
  std::vector<double> rh_t_, rw_t_;  // transposes, kept row-major for locality
};

}  // namespace fcdn
