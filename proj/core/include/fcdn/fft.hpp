#pragma once

#include <complex>
#include <span>
#include <vector>

namespace fcdn::fft {

// Thin deterministic wrappers over the FFT backend (plans created with
// measurement disabled so repeated runs are bit-identical).

// Real-to-complex forward transform; returns n/2+1 bins.
std::vector<std::complex<double>> rfft(std::span<const double> x);
// Inverse of rfft for a real signal of length n (includes the 1/n scale).
std::vector<double> irfft(std::span<const std::complex<double>> spec, std::size_t n);
// Full complex inverse transform (includes the 1/n scale).
std::vector<std::complex<double>> ifft(std::span<const std::complex<double>> spec);

// Analytic signal via the frequency-domain construction: zero the negative
// frequencies, double the positive ones, keep DC (and Nyquist when n is even).
std::vector<std::complex<double>> analytic_signal(std::span<const double> x);

}  // namespace fcdn::fft
