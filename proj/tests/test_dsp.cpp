#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "fcdn/dsp.hpp"
#include "fcdn/montage.hpp"

using namespace fcdn;

namespace {

constexpr double kPi = 3.14159265358979323846;

EegDataset make_ds(double fs, std::int64_t T, std::int64_t trials,
                   const std::function<double(std::int64_t, int, std::int64_t)>& f,
                   std::int64_t onset = 0) {
  EegDataset ds;
  ds.subject_id = "synth";
  ds.fs = fs;
  ds.montage = Montage::from_channels({"c0", "c1"});
  ds.class_names = {"a", "b"};
  ds.samples_per_trial = T;
  ds.epoch_onset_sample = onset;
  for (std::int64_t tr = 0; tr < trials; ++tr) ds.labels.push_back(static_cast<int>(tr % 2));
  ds.samples.resize(static_cast<std::size_t>(trials) * 2 * T);
  for (std::int64_t tr = 0; tr < trials; ++tr)
    for (int ch = 0; ch < 2; ++ch) {
      auto dst = ds.trial_channel_mut(tr, ch);
      for (std::int64_t t = 0; t < T; ++t) dst[t] = static_cast<float>(f(tr, ch, t));
    }
  ds.validate();
  return ds;
}

// RMS over the middle half of every trial of one channel (edges excluded so
// filter transients do not contaminate the estimate).
double mid_rms(const EegDataset& ds, int ch) {
  double acc = 0.0;
  std::int64_t n = 0;
  const std::int64_t a = ds.samples_per_trial / 4, b = 3 * ds.samples_per_trial / 4;
  for (std::int64_t tr = 0; tr < ds.n_trials(); ++tr) {
    const auto x = ds.trial_channel(tr, ch);
    for (std::int64_t t = a; t < b; ++t) {
      acc += static_cast<double>(x[t]) * x[t];
      ++n;
    }
  }
  return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace

TEST_CASE("band-pass design is unity gain at the band centre") {
  for (const auto& band : BandDefinition::standard_bands()) {
    const FirFilter f = design_bandpass(band, 250.0, 30);
    CHECK(f.order() == 30);
    CHECK(f.taps.size() == 31);
    CHECK(f.gain_at(band.center()) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("low-pass design is unity at DC and small far above cutoff") {
  const FirFilter f = design_lowpass(20.0, 250.0, 60);
  CHECK(f.gain_at(0.0) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f.gain_at(100.0) < 0.02);
}

TEST_CASE("single forward pass makes a convolution of the right length") {
  const std::vector<double> x = {1.0, 0.0, 0.0, 0.0, 2.0};
  const std::vector<double> taps = {0.5, 0.25, 0.125};
  const auto y = filter_forward(x, taps);
  REQUIRE(y.size() == x.size());
  // Causal FIR with zero initial state: y[n] = sum_k taps[k] x[n-k].
  CHECK(y[0] == doctest::Approx(0.5));
  CHECK(y[1] == doctest::Approx(0.25));
  CHECK(y[2] == doctest::Approx(0.125));
  CHECK(y[3] == doctest::Approx(0.0));
  CHECK(y[4] == doctest::Approx(1.0));
}

TEST_CASE("zero-phase band-pass keeps a centre tone aligned and at amplitude") {
  const double fs = 250.0;
  const auto band = BandDefinition::alpha();
  const double f0 = band.center();
  const std::int64_t T = 1000;
  std::vector<double> x(static_cast<std::size_t>(T));
  for (std::int64_t t = 0; t < T; ++t)
    x[static_cast<std::size_t>(t)] = std::sin(2.0 * kPi * f0 * t / fs);
  const FirFilter f = design_bandpass(band, fs, 30);
  const auto y = filter_zero_phase(x, f.taps);
  REQUIRE(y.size() == x.size());
  double worst = 0.0;
  for (std::int64_t t = T / 4; t < 3 * T / 4; ++t)
    worst = std::max(worst, std::abs(y[static_cast<std::size_t>(t)] -
                                     x[static_cast<std::size_t>(t)]));
  // Unity-gain centre + zero phase: the middle of the series passes through
  // essentially unchanged (no lag, no scaling).
  CHECK(worst < 0.02);
}

TEST_CASE("band-pass filtering separates an in-band from an out-of-band tone") {
  const double fs = 250.0;
  const auto band = BandDefinition::alpha();
  const double inside = band.center();           // 10.5 Hz
  const double outside = band.center() * 8.0;    // three octaves up
  auto tone = [&](double f0) {
    return make_ds(fs, 1000, 2, [&](std::int64_t, int, std::int64_t t) {
      return std::sin(2.0 * kPi * f0 * t / fs);
    });
  };
  const EegDataset in_f = bandpass_filter(tone(inside), band, 30);
  const EegDataset out_f = bandpass_filter(tone(outside), band, 30);
  CHECK(mid_rms(in_f, 0) > 5.0 * mid_rms(out_f, 0));
  CHECK(mid_rms(in_f, 0) > 0.5);  // the in-band tone itself survives
}

TEST_CASE("notch removes its target frequency and spares the rest") {
  const double fs = 250.0;
  const auto mains = make_ds(fs, 1250, 2, [&](std::int64_t, int, std::int64_t t) {
    return std::sin(2.0 * kPi * 60.0 * t / fs);
  });
  const auto neighbour = make_ds(fs, 1250, 2, [&](std::int64_t, int, std::int64_t t) {
    return std::sin(2.0 * kPi * 10.0 * t / fs);
  });
  const EegDataset cleaned = notch_filter(mains, 60.0);
  const EegDataset passed = notch_filter(neighbour, 60.0);
  const double in_rms = mid_rms(mains, 0);
  CHECK(mid_rms(cleaned, 0) < 0.05 * in_rms);
  CHECK(mid_rms(passed, 0) > 0.9 * mid_rms(neighbour, 0));
}

TEST_CASE("decimation halves rate and length and keeps a slow tone") {
  const double fs = 250.0;
  const auto ds = make_ds(fs, 1001, 3, [&](std::int64_t, int, std::int64_t t) {
    return std::sin(2.0 * kPi * 5.0 * t / fs);
  }, 250);
  const EegDataset dn = resample_decimate(ds, 2);
  CHECK(dn.fs == doctest::Approx(125.0));
  CHECK(dn.samples_per_trial == 500);  // odd sample dropped
  CHECK(dn.n_trials() == 3);
  CHECK(dn.epoch_onset_sample == 125);
  double worst = 0.0;
  const auto y = dn.trial_channel(0, 0);
  for (std::int64_t t = 125; t < 375; ++t)
    worst = std::max(worst, std::abs(static_cast<double>(y[t]) -
                                     std::sin(2.0 * kPi * 5.0 * (2 * t) / fs)));
  CHECK(worst < 0.03);
  CHECK(dn.provenance.find("decimate") != std::string::npos);
}

TEST_CASE("welch psd locates planted tones") {
  const double fs = 250.0;
  const auto ds = make_ds(fs, 2500, 4, [&](std::int64_t, int, std::int64_t t) {
    return 3.0 * std::sin(2.0 * kPi * 7.0 * t / fs) +
           1.5 * std::sin(2.0 * kPi * 30.0 * t / fs);
  });
  const Spectrum s = welch_psd(ds, "c0", 0.5, 50.0);
  CHECK(s.peak_frequency(4.0, 10.0) == doctest::Approx(7.0).epsilon(0.08));
  CHECK(s.peak_frequency(25.0, 35.0) == doctest::Approx(30.0).epsilon(0.04));
  // Parseval sanity: total power is positive and finite.
  double total = 0.0;
  for (const double p : s.power) {
    REQUIRE(p >= 0.0);
    total += p;
  }
  CHECK(total > 0.0);
}

TEST_CASE("analytic phase of a tone advances at the tone frequency") {
  const double fs = 250.0;
  const double f0 = 10.0;
  const auto ds = make_ds(fs, 1000, 2, [&](std::int64_t, int, std::int64_t t) {
    return std::sin(2.0 * kPi * f0 * t / fs);
  });
  const PhaseTensor pt = analytic_phase(ds, BandDefinition::alpha(), 30);
  REQUIRE(pt.n_samples == 1000);
  const auto ph = pt.trial_channel(0, 0);
  const double want = 2.0 * kPi * f0 / fs;
  double worst = 0.0;
  for (std::int64_t t = 250; t < 750; ++t) {
    double d = static_cast<double>(ph[t + 1]) - ph[t];
    while (d <= -kPi) d += 2.0 * kPi;
    while (d > kPi) d -= 2.0 * kPi;
    worst = std::max(worst, std::abs(d - want));
  }
  CHECK(worst < 0.01);
}

TEST_CASE("order zero skips the band-pass for prefiltered input") {
  const double fs = 250.0;
  const auto raw = make_ds(fs, 800, 2, [&](std::int64_t tr, int ch, std::int64_t t) {
    return std::sin(2.0 * kPi * 10.0 * t / fs + 0.3 * tr + 0.1 * ch) +
           0.5 * std::sin(2.0 * kPi * 55.0 * t / fs);
  });
  const EegDataset filtered = bandpass_filter(raw, BandDefinition::alpha(), 30);
  const PhaseTensor direct = analytic_phase(raw, BandDefinition::alpha(), 30);
  const PhaseTensor pre = analytic_phase(filtered, BandDefinition::alpha(), 0);
  REQUIRE(direct.phase.size() == pre.phase.size());
  // Same signal path either way: filter here or inside, phases agree.
  double worst = 0.0;
  for (std::size_t i = 0; i < direct.phase.size(); ++i) {
    double d = static_cast<double>(direct.phase[i]) - pre.phase[i];
    while (d <= -kPi) d += 2.0 * kPi;
    while (d > kPi) d -= 2.0 * kPi;
    worst = std::max(worst, std::abs(d));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("event-related spectra show a post-onset alpha burst against baseline") {
  const double fs = 250.0;
  const std::int64_t T = 625;  // -0.5 s .. 2.0 s around onset at sample 125
  const auto ds = make_ds(fs, T, 6, [&](std::int64_t, int, std::int64_t t) {
    const double amp = t >= 125 ? 4.0 : 1.0;
    return amp * std::sin(2.0 * kPi * 10.0 * t / fs);
  }, 125);
  const Ersp e = compute_ersp(ds, "c0", 0.5, 30.0, 100, -0.5, 0.0);
  REQUIRE(!e.times_s.empty());
  REQUIRE(!e.freqs_hz.empty());
  double post = 0.0;
  int n_post = 0;
  for (std::size_t fi = 0; fi < e.freqs_hz.size(); ++fi) {
    if (e.freqs_hz[fi] < 8.0 || e.freqs_hz[fi] > 13.0) continue;
    for (std::size_t ti = 0; ti < e.times_s.size(); ++ti)
      if (e.times_s[ti] > 0.3 && e.times_s[ti] < 1.7) {
        post += e.at(fi, ti);
        ++n_post;
      }
  }
  REQUIRE(n_post > 0);
  // 4x amplitude = 16x power = +12 dB relative to the pre-onset baseline.
  CHECK(post / n_post > 6.0);
}
