#include "fcdn/fft.hpp"

#include <fftw3.h>

#include "fcdn/error.hpp"

namespace fcdn::fft {

std::vector<std::complex<double>> rfft(std::span<const double> x) {
  require(!x.empty(), "rfft: empty input");
  const std::size_t n = x.size();
  std::vector<double> in(x.begin(), x.end());
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                        reinterpret_cast<fftw_complex*>(out.data()),
                                        FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  return out;
}

std::vector<double> irfft(std::span<const std::complex<double>> spec, std::size_t n) {
  require(spec.size() == n / 2 + 1, "irfft: spectrum length must be n/2+1");
  std::vector<std::complex<double>> in(spec.begin(), spec.end());
  std::vector<double> out(n);
  fftw_plan plan = fftw_plan_dft_c2r_1d(static_cast<int>(n),
                                        reinterpret_cast<fftw_complex*>(in.data()),
                                        out.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

std::vector<std::complex<double>> ifft(std::span<const std::complex<double>> spec) {
  require(!spec.empty(), "ifft: empty input");
  const std::size_t n = spec.size();
  std::vector<std::complex<double>> in(spec.begin(), spec.end());
  std::vector<std::complex<double>> out(n);
  fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(n),
                                    reinterpret_cast<fftw_complex*>(in.data()),
                                    reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_BACKWARD, FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  for (auto& v : out) v /= static_cast<double>(n);
  return out;
}

std::vector<std::complex<double>> analytic_signal(std::span<const double> x) {
  const std::size_t n = x.size();
  auto half = rfft(x);
  std::vector<std::complex<double>> full(n);
  full[0] = half[0];
  const bool even = (n % 2 == 0);
  const std::size_t pos_end = even ? n / 2 : (n + 1) / 2;  // exclusive
  for (std::size_t k = 1; k < pos_end; ++k) full[k] = 2.0 * half[k];
  if (even) full[n / 2] = half[n / 2];
  // Negative bins stay zero.
  return ifft(full);
}

}  // namespace fcdn::fft
