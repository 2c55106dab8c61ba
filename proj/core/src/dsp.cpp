#include "fcdn/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <functional>
#include <numeric>

#include "fcdn/error.hpp"
#include "fcdn/fft.hpp"

namespace fcdn {

double FirFilter::gain_at(double f_hz) const {
  std::complex<double> h = 0.0;
  const double w = 2.0 * M_PI * f_hz / fs;
  for (std::size_t k = 0; k < taps.size(); ++k)
    h += taps[k] * std::exp(std::complex<double>(0.0, -w * static_cast<double>(k)));
  return std::abs(h);
}

static std::vector<double> hamming_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.54 - 0.46 * std::cos(2.0 * M_PI * i / (n - 1));
  return w;
}

FirFilter design_bandpass(const BandDefinition& band, double fs, int order) {
  band.validate(fs);
  require(order >= 2 && order % 2 == 0, "design_bandpass: order must be even and >= 2");
  const int n_taps = order + 1;
  const double w1 = band.f_min / (fs / 2.0);  // normalized (Nyquist = 1)
  const double w2 = band.f_max / (fs / 2.0);
  const auto win = hamming_window(n_taps);

  FirFilter f;
  f.fs = fs;
  f.label = "bandpass " + band.name;
  f.taps.resize(n_taps);
  const double mid = order / 2.0;
  for (int i = 0; i < n_taps; ++i) {
    const double m = i - mid;
    double ideal;
    if (m == 0.0) {
      ideal = w2 - w1;
    } else {
      ideal = (std::sin(M_PI * w2 * m) - std::sin(M_PI * w1 * m)) / (M_PI * m);
    }
    f.taps[i] = ideal * win[i];
  }
  // Short kernels lose most of their nominal gain at narrow low bands; rescale
  // to unit response at the band centre so pass-band amplitudes are preserved.
  const double g = f.gain_at(band.center());
  require(g > 1e-12, "design_bandpass: degenerate response at band centre");
  for (double& t : f.taps) t /= g;
  return f;
}

FirFilter design_lowpass(double cutoff_hz, double fs, int order) {
  require(cutoff_hz > 0.0 && cutoff_hz < fs / 2.0, "design_lowpass: cutoff out of range");
  require(order >= 2 && order % 2 == 0, "design_lowpass: order must be even and >= 2");
  const int n_taps = order + 1;
  const double wc = cutoff_hz / (fs / 2.0);
  const auto win = hamming_window(n_taps);

  FirFilter f;
  f.fs = fs;
  f.label = "lowpass";
  f.taps.resize(n_taps);
  const double mid = order / 2.0;
  for (int i = 0; i < n_taps; ++i) {
    const double m = i - mid;
    const double ideal = (m == 0.0) ? wc : std::sin(M_PI * wc * m) / (M_PI * m);
    f.taps[i] = ideal * win[i];
  }
  const double g = std::accumulate(f.taps.begin(), f.taps.end(), 0.0);
  for (double& t : f.taps) t /= g;  // unit DC gain
  return f;
}

std::vector<double> filter_forward(std::span<const double> x, std::span<const double> taps) {
  std::vector<double> y(x.size(), 0.0);
  const std::size_t nt = taps.size();
  for (std::size_t t = 0; t < x.size(); ++t) {
    double acc = 0.0;
    const std::size_t kmax = std::min(nt, t + 1);
    for (std::size_t k = 0; k < kmax; ++k) acc += taps[k] * x[t - k];
    y[t] = acc;
  }
  return y;
}

std::vector<double> filter_zero_phase(std::span<const double> x, std::span<const double> taps) {
  auto y = filter_forward(x, taps);
  std::reverse(y.begin(), y.end());
  y = filter_forward(y, taps);
  std::reverse(y.begin(), y.end());
  return y;
}

// Biquad with zero initial state, direct form I.
static std::vector<double> biquad_forward(std::span<const double> x, const double b[3],
                                          const double a[2]) {
  std::vector<double> y(x.size(), 0.0);
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
  for (std::size_t t = 0; t < x.size(); ++t) {
    const double v = b[0] * x[t] + b[1] * x1 + b[2] * x2 - a[0] * y1 - a[1] * y2;
    x2 = x1;
    x1 = x[t];
    y2 = y1;
    y1 = v;
    y[t] = v;
  }
  return y;
}

static void apply_per_channel(EegDataset& ds,
                              const std::function<std::vector<double>(std::span<const double>)>& fn) {
  std::vector<double> buf(ds.samples_per_trial);
  for (std::int64_t t = 0; t < ds.n_trials(); ++t) {
    for (int k = 0; k < ds.n_channels(); ++k) {
      auto sig = ds.trial_channel_mut(t, k);
      std::copy(sig.begin(), sig.end(), buf.begin());
      auto out = fn(buf);
      for (std::size_t i = 0; i < out.size(); ++i) sig[i] = static_cast<float>(out[i]);
    }
  }
}

EegDataset resample_decimate(const EegDataset& ds, int factor) {
  require(factor >= 1, "resample_decimate: factor must be >= 1");
  if (factor == 1) return ds;
  const double out_fs = ds.fs / factor;
  // Anti-alias comfortably inside the new Nyquist; longer kernel for larger
  // decimation ratios.
  const int order = 16 * factor;
  const auto lp = design_lowpass(0.45 * out_fs, ds.fs, order);

  const std::int64_t out_len = ds.samples_per_trial / factor;
  require(out_len > 0, "resample_decimate: trial shorter than factor");
  const bool dropped = (out_len * factor != ds.samples_per_trial);

  EegDataset out;
  out.subject_id = ds.subject_id;
  out.fs = out_fs;
  out.montage = ds.montage;
  out.class_names = ds.class_names;
  out.labels = ds.labels;
  out.samples_per_trial = out_len;
  out.epoch_onset_sample = ds.epoch_onset_sample / factor;
  out.provenance = ds.provenance;
  {
    char note[96];
    std::snprintf(note, sizeof note, "decimate x%d%s", factor,
                  dropped ? " (trailing remainder dropped)" : "");
    out.append_provenance(note);
  }
  out.samples.resize(static_cast<std::size_t>(ds.n_trials()) * ds.n_channels() * out_len);

  std::vector<double> buf(ds.samples_per_trial);
  for (std::int64_t t = 0; t < ds.n_trials(); ++t) {
    for (int k = 0; k < ds.n_channels(); ++k) {
      auto src = ds.trial_channel(t, k);
      std::copy(src.begin(), src.end(), buf.begin());
      auto smooth = filter_zero_phase(buf, lp.taps);
      auto dst = out.trial_channel_mut(t, static_cast<int>(k));
      for (std::int64_t i = 0; i < out_len; ++i)
        dst[i] = static_cast<float>(smooth[i * factor]);
    }
  }
  out.validate();
  return out;
}

EegDataset notch_filter(const EegDataset& ds, double f0_hz, double q) {
  require(f0_hz > 0.0 && f0_hz < ds.fs / 2.0, "notch_filter: frequency out of range");
  require(q > 0.0, "notch_filter: q must be positive");
  const double w0 = 2.0 * M_PI * f0_hz / ds.fs;
  const double alpha = std::sin(w0) / (2.0 * q);
  const double a0 = 1.0 + alpha;
  const double b[3] = {1.0 / a0, -2.0 * std::cos(w0) / a0, 1.0 / a0};
  const double a[2] = {-2.0 * std::cos(w0) / a0, (1.0 - alpha) / a0};

  EegDataset out = ds;
  apply_per_channel(out, [&](std::span<const double> x) {
    auto y = biquad_forward(x, b, a);
    std::reverse(y.begin(), y.end());
    y = biquad_forward(y, b, a);
    std::reverse(y.begin(), y.end());
    return y;
  });
  char note[64];
  std::snprintf(note, sizeof note, "notch %.10g Hz Q=%.10g", f0_hz, q);
  out.append_provenance(note);
  return out;
}

EegDataset bandpass_filter(const EegDataset& ds, const BandDefinition& band, int order) {
  auto fir = design_bandpass(band, ds.fs, order);
  EegDataset out = ds;
  apply_per_channel(out, [&](std::span<const double> x) {
    return filter_zero_phase(x, fir.taps);
  });
  char note[96];
  std::snprintf(note, sizeof note, "bandpass %s [%.10g,%.10g] Hz zero-phase %d taps",
                band.name.c_str(), band.f_min, band.f_max, order + 1);
  out.append_provenance(note);
  return out;
}

std::span<const float> PhaseTensor::trial_channel(std::int64_t trial, int channel) const {
  require(trial >= 0 && trial < n_trials, "phase tensor: trial index out of range");
  require(channel >= 0 && channel < n_channels, "phase tensor: channel index out of range");
  const std::size_t off =
      (static_cast<std::size_t>(trial) * n_channels + channel) * n_samples;
  return {phase.data() + off, static_cast<std::size_t>(n_samples)};
}

PhaseTensor analytic_phase(const EegDataset& ds, const BandDefinition& band, int fir_order) {
  // Order 0 skips the filter for signals that are already band-limited.
  auto filtered = fir_order == 0 ? ds : bandpass_filter(ds, band, fir_order);
  PhaseTensor pt;
  pt.n_trials = ds.n_trials();
  pt.n_channels = ds.n_channels();
  pt.n_samples = ds.samples_per_trial;
  pt.fs = ds.fs;
  pt.band = band;
  pt.channel_names = ds.montage.channel_names;
  pt.phase.resize(static_cast<std::size_t>(pt.n_trials) * pt.n_channels * pt.n_samples);

  std::vector<double> buf(ds.samples_per_trial);
  std::size_t off = 0;
  for (std::int64_t t = 0; t < pt.n_trials; ++t) {
    for (int k = 0; k < pt.n_channels; ++k) {
      auto sig = filtered.trial_channel(t, k);
      std::copy(sig.begin(), sig.end(), buf.begin());
      auto z = fft::analytic_signal(buf);
      for (std::int64_t i = 0; i < pt.n_samples; ++i)
        pt.phase[off + i] = static_cast<float>(std::atan2(z[i].imag(), z[i].real()));
      off += pt.n_samples;
    }
  }
  return pt;
}

double Spectrum::peak_frequency(double f_lo, double f_hi) const {
  double best_f = 0.0, best_p = -1.0;
  for (std::size_t i = 0; i < freq_hz.size(); ++i) {
    if (freq_hz[i] < f_lo || freq_hz[i] > f_hi) continue;
    if (power[i] > best_p) {
      best_p = power[i];
      best_f = freq_hz[i];
    }
  }
  require(best_p >= 0.0, "peak_frequency: no bins inside range");
  return best_f;
}

Spectrum welch_psd(const EegDataset& ds, const std::string& channel, double f_lo,
                   double f_hi, double segment_s, double overlap) {
  const int k = ds.montage.index_of(channel);
  require(overlap >= 0.0 && overlap < 1.0, "welch_psd: overlap must be in [0,1)");
  const std::int64_t seg = std::llround(segment_s * ds.fs);
  require(seg >= 8, "welch_psd: segment too short");
  require(seg <= ds.samples_per_trial, "welch_psd: segment longer than trial");
  const std::int64_t hop = std::max<std::int64_t>(1, std::llround(seg * (1.0 - overlap)));

  const auto win = hamming_window(static_cast<int>(seg));
  double u = 0.0;
  for (double w : win) u += w * w;
  u /= static_cast<double>(seg);

  std::vector<double> acc(seg / 2 + 1, 0.0);
  std::size_t n_segments = 0;
  std::vector<double> buf(seg);
  for (std::int64_t t = 0; t < ds.n_trials(); ++t) {
    auto sig = ds.trial_channel(t, k);
    for (std::int64_t s0 = 0; s0 + seg <= ds.samples_per_trial; s0 += hop) {
      for (std::int64_t i = 0; i < seg; ++i) buf[i] = sig[s0 + i] * win[i];
      auto spec = fft::rfft(buf);
      for (std::size_t f = 0; f < acc.size(); ++f) acc[f] += std::norm(spec[f]);
      ++n_segments;
    }
  }
  require(n_segments > 0, "welch_psd: no segments fit the trial");

  Spectrum out;
  const double scale = 1.0 / (ds.fs * u * static_cast<double>(seg) * n_segments);
  for (std::size_t f = 0; f < acc.size(); ++f) {
    const double freq = static_cast<double>(f) * ds.fs / seg;
    if (freq < f_lo || freq > f_hi) continue;
    double p = acc[f] * scale;
    if (f != 0 && f != acc.size() - 1) p *= 2.0;  // fold negative frequencies
    out.freq_hz.push_back(freq);
    out.power.push_back(p);
  }
  require(!out.freq_hz.empty(), "welch_psd: frequency range selects no bins");
  return out;
}

Ersp compute_ersp(const EegDataset& ds, const std::string& channel, double f_lo,
                  double f_hi, int n_times, double baseline_start_s,
                  double baseline_end_s) {
  const int k = ds.montage.index_of(channel);
  require(n_times >= 2, "ersp: need at least two time points");
  require(baseline_end_s > baseline_start_s, "ersp: empty baseline window");

  // Short-time window: half a second of signal, Hamming tapered.
  const std::int64_t seg = std::max<std::int64_t>(16, std::llround(0.5 * ds.fs));
  require(seg <= ds.samples_per_trial, "ersp: trial shorter than analysis window");
  const auto win = hamming_window(static_cast<int>(seg));

  // Evenly spaced window centres across the whole trial.
  std::vector<std::int64_t> centers(n_times);
  std::vector<double> times(n_times);
  for (int i = 0; i < n_times; ++i) {
    const double frac = (i + 0.5) / n_times;
    centers[i] = std::llround(frac * (ds.samples_per_trial - 1));
    times[i] = (centers[i] - ds.epoch_onset_sample) / ds.fs;
  }

  // Frequency bins of the short FFT restricted to [f_lo, f_hi].
  std::vector<std::size_t> bins;
  std::vector<double> freqs;
  for (std::size_t f = 0; f < static_cast<std::size_t>(seg / 2 + 1); ++f) {
    const double freq = static_cast<double>(f) * ds.fs / seg;
    if (freq >= f_lo && freq <= f_hi) {
      bins.push_back(f);
      freqs.push_back(freq);
    }
  }
  require(!bins.empty(), "ersp: frequency range selects no bins");

  // Baseline columns: centres whose time falls inside the pre-onset window.
  std::vector<int> baseline_cols;
  for (int i = 0; i < n_times; ++i)
    if (times[i] >= baseline_start_s && times[i] <= baseline_end_s)
      baseline_cols.push_back(i);
  require(!baseline_cols.empty(),
          "ersp: baseline window contains no time points; extend the epoch before onset");

  std::vector<double> power(bins.size() * n_times, 0.0);
  std::vector<double> buf(seg);
  for (std::int64_t t = 0; t < ds.n_trials(); ++t) {
    auto sig = ds.trial_channel(t, k);
    for (int i = 0; i < n_times; ++i) {
      const std::int64_t s0 = centers[i] - seg / 2;
      for (std::int64_t j = 0; j < seg; ++j) {
        const std::int64_t idx = s0 + j;
        const double v =
            (idx >= 0 && idx < ds.samples_per_trial) ? sig[idx] : 0.0;  // zero-pad edges
        buf[j] = v * win[j];
      }
      auto spec = fft::rfft(buf);
      for (std::size_t f = 0; f < bins.size(); ++f)
        power[f * n_times + i] += std::norm(spec[bins[f]]);
    }
  }
  for (double& p : power) p /= static_cast<double>(ds.n_trials());

  Ersp out;
  out.times_s = std::move(times);
  out.freqs_hz = std::move(freqs);
  out.db.resize(power.size());
  for (std::size_t f = 0; f < bins.size(); ++f) {
    double base = 0.0;
    for (int c : baseline_cols) base += power[f * n_times + c];
    base /= static_cast<double>(baseline_cols.size());
    base = std::max(base, 1e-300);
    for (int i = 0; i < n_times; ++i)
      out.db[f * n_times + i] =
          10.0 * std::log10(std::max(power[f * n_times + i], 1e-300) / base);
  }
  return out;
}

void export_spectrum_csv(const Spectrum& s, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "freq_hz,power\n";
  for (std::size_t i = 0; i < s.freq_hz.size(); ++i) {
    char line[64];
    std::snprintf(line, sizeof line, "%.9g,%.9g\n", s.freq_hz[i], s.power[i]);
    out << line;
  }
}

void export_ersp_csv(const Ersp& e, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "freq_hz";
  for (double t : e.times_s) {
    char cell[32];
    std::snprintf(cell, sizeof cell, ",%.6g", t);
    out << cell;
  }
  out << "\n";
  for (std::size_t f = 0; f < e.freqs_hz.size(); ++f) {
    char cell[32];
    std::snprintf(cell, sizeof cell, "%.6g", e.freqs_hz[f]);
    out << cell;
    for (std::size_t i = 0; i < e.times_s.size(); ++i) {
      std::snprintf(cell, sizeof cell, ",%.6g", e.at(f, i));
      out << cell;
    }
    out << "\n";
  }
}

}  // namespace fcdn
