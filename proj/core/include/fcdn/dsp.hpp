#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fcdn/dataset.hpp"

namespace fcdn {

// FIR designed by the windowed-sinc method (Hamming). `taps` has order+1
// coefficients and is scaled so the magnitude response is 1 at a chosen
// reference frequency (band centre for band-passes, DC for low-passes).
struct FirFilter {
  std::vector<double> taps;
  double fs = 0.0;
  std::string label;

  int order() const { return static_cast<int>(taps.size()) - 1; }
  // Magnitude response |H(f)| of a single (causal) pass.
  double gain_at(double f_hz) const;
};

FirFilter design_bandpass(const BandDefinition& band, double fs, int order = 30);
FirFilter design_lowpass(double cutoff_hz, double fs, int order);

// Single-channel helpers (double precision), zero state at the edges.
std::vector<double> filter_forward(std::span<const double> x, std::span<const double> taps);
// Forward-backward application: zero phase, squared magnitude response.
std::vector<double> filter_zero_phase(std::span<const double> x, std::span<const double> taps);

// Decimation with a zero-phase anti-aliasing low-pass. A trailing remainder
// (when the trial length is not divisible by `factor`) is dropped and noted
// in the provenance.
EegDataset resample_decimate(const EegDataset& ds, int factor);

// Zero-phase second-order notch (biquad, forward-backward).
EegDataset notch_filter(const EegDataset& ds, double f0_hz, double q = 30.0);

// Zero-phase FIR band-pass over every trial and channel.
EegDataset bandpass_filter(const EegDataset& ds, const BandDefinition& band, int order = 30);

// Instantaneous phase per (trial, channel, sample) for one band.
struct PhaseTensor {
  std::vector<float> phase;  // wrapped to (-pi, pi], trial-major, time fastest
  std::int64_t n_trials = 0;
  int n_channels = 0;
  std::int64_t n_samples = 0;
  double fs = 0.0;
  BandDefinition band;
  std::vector<std::string> channel_names;

  std::span<const float> trial_channel(std::int64_t trial, int channel) const;
};

// Band-pass then frequency-domain analytic signal, phase = atan2(imag, real).
// fir_order 0 skips the filter (input already band-limited).
PhaseTensor analytic_phase(const EegDataset& ds, const BandDefinition& band,
                           int fir_order = 30);

// One-sided power spectral density, averaged over segments of all trials.
struct Spectrum {
  std::vector<double> freq_hz;
  std::vector<double> power;  // uV^2/Hz

  // Frequency of the largest value within [f_lo, f_hi].
  double peak_frequency(double f_lo, double f_hi) const;
};

Spectrum welch_psd(const EegDataset& ds, const std::string& channel, double f_lo,
                   double f_hi, double segment_s = 1.0, double overlap = 0.5);

// Event-related spectral perturbation: short-time power on a fixed time grid,
// expressed in dB relative to the mean power in a pre-onset baseline window.
struct Ersp {
  std::vector<double> times_s;   // relative to epoch onset
  std::vector<double> freqs_hz;
  std::vector<double> db;        // n_freqs x n_times, row-major

  double at(std::size_t f, std::size_t t) const { return db[f * times_s.size() + t]; }
};

Ersp compute_ersp(const EegDataset& ds, const std::string& channel,
                  double f_lo = 0.5, double f_hi = 50.0, int n_times = 400,
                  double baseline_start_s = -0.5, double baseline_end_s = 0.0);

void export_spectrum_csv(const Spectrum& s, const std::filesystem::path& path);
void export_ersp_csv(const Ersp& e, const std::filesystem::path& path);

}  // namespace fcdn
