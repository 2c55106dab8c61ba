#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <vector>

#include "fcdn/connectivity.hpp"
#include "fcdn/rng.hpp"
#include "fcdn/synth.hpp"

using namespace fcdn;

namespace {

constexpr double kPi = 3.14159265358979323846;

double wrap(double a) {
  while (a > kPi) a -= 2.0 * kPi;
  while (a <= -kPi) a += 2.0 * kPi;
  return a;
}

PhaseTensor make_phases(int K, std::int64_t N, std::int64_t T,
                        const std::function<double(std::int64_t, int, std::int64_t)>& f) {
  PhaseTensor pt;
  pt.n_trials = N;
  pt.n_channels = K;
  pt.n_samples = T;
  pt.fs = 125.0;
  pt.band = BandDefinition::alpha();
  pt.phase.resize(static_cast<std::size_t>(N) * K * T);
  for (int k = 0; k < K; ++k) pt.channel_names.push_back("ch" + std::to_string(k));
  for (std::int64_t n = 0; n < N; ++n)
    for (int k = 0; k < K; ++k)
      for (std::int64_t t = 0; t < T; ++t)
        pt.phase[(static_cast<std::size_t>(n) * K + k) * T + t] =
            static_cast<float>(wrap(f(n, k, t)));
  return pt;
}

// Independent O(K^2 N T) reference: |mean over trials and time of
// exp(j(phi_a - phi_b))| accumulated in double.
double plv_reference(const PhaseTensor& pt, int a, int b) {
  std::complex<double> acc(0.0, 0.0);
  std::int64_t count = 0;
  for (std::int64_t n = 0; n < pt.n_trials; ++n) {
    const auto pa = pt.trial_channel(n, a);
    const auto pb = pt.trial_channel(n, b);
    for (std::int64_t t = 0; t < pt.n_samples; ++t) {
      const double d = static_cast<double>(pa[t]) - static_cast<double>(pb[t]);
      acc += std::complex<double>(std::cos(d), std::sin(d));
      ++count;
    }
  }
  return std::abs(acc) / static_cast<double>(count);
}

}  // namespace

TEST_CASE("identical phase series lock perfectly") {
  Rng rng(1);
  std::vector<double> base(200);
  for (auto& v : base) v = rng.uniform(-kPi, kPi);
  const auto pt = make_phases(3, 2, 100, [&](std::int64_t n, int, std::int64_t t) {
    return base[static_cast<std::size_t>(n * 100 + t)];
  });
  const auto plv = plv_matrix(pt);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(plv.at(i, j) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("a constant phase lag still locks perfectly") {
  Rng rng(2);
  std::vector<double> base(500);
  for (auto& v : base) v = rng.uniform(-kPi, kPi);
  const auto pt = make_phases(2, 5, 100, [&](std::int64_t n, int k, std::int64_t t) {
    return base[static_cast<std::size_t>(n * 100 + t)] + (k == 1 ? 0.7 : 0.0);
  });
  const auto plv = plv_matrix(pt);
  CHECK(plv.at(0, 1) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("gaussian phase jitter shrinks locking by exp(-sigma^2/2)") {
  Rng rng(3);
  const double sigma = 0.2;
  std::vector<double> base(40 * 250), jit(40 * 250);
  for (auto& v : base) v = rng.uniform(-kPi, kPi);
  for (auto& v : jit) v = rng.gaussian(0.0, sigma);
  const auto pt = make_phases(2, 40, 250, [&](std::int64_t n, int k, std::int64_t t) {
    const auto i = static_cast<std::size_t>(n * 250 + t);
    return base[i] + (k == 1 ? jit[i] : 0.0);
  });
  const auto plv = plv_matrix(pt);
  CHECK(plv.at(0, 1) == doctest::Approx(std::exp(-sigma * sigma / 2)).epsilon(0.01));
}

TEST_CASE("independent uniform phases decorrelate") {
  Rng rng(4);
  const auto pt = make_phases(2, 20, 250,  // N*T = 5000 pooled samples
                              [&](std::int64_t, int, std::int64_t) {
                                return rng.uniform(-kPi, kPi);
                              });
  const auto plv = plv_matrix(pt);
  CHECK(plv.at(0, 1) < 0.05);  // E|mean| ~ sqrt(pi/(4*5000)) = 0.0125
  CHECK(plv.at(0, 1) >= 0.0);
}

TEST_CASE("matrix agrees with the brute-force definition") {
  Rng rng(5);
  const auto pt = make_phases(4, 3, 50, [&](std::int64_t, int, std::int64_t) {
    return rng.uniform(-kPi, kPi);
  });
  const auto plv = plv_matrix(pt);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      const double want = i == j ? 1.0 : plv_reference(pt, i, j);
      CHECK(std::abs(plv.at(i, j) - want) < 1e-10);
    }
}

TEST_CASE("matrix is symmetric with a unit diagonal") {
  Rng rng(6);
  const auto pt = make_phases(5, 4, 64, [&](std::int64_t, int, std::int64_t) {
    return rng.uniform(-kPi, kPi);
  });
  const auto plv = plv_matrix(pt);
  plv.validate();
  for (int i = 0; i < 5; ++i) {
    CHECK(plv.at(i, i) == 1.0);
    for (int j = 0; j < 5; ++j) CHECK(plv.at(i, j) == plv.at(j, i));
  }
}

TEST_CASE("edge trimming keeps exactly the middle of every series") {
  Rng rng(7);
  const auto pt = make_phases(2, 3, 100, [&](std::int64_t n, int k, std::int64_t t) {
    return 0.001 * static_cast<double>(n * 100000 + k * 1000 + t);
  });
  const auto trimmed = trim_phase_edges(pt, 10);
  CHECK(trimmed.n_samples == 80);
  CHECK(trimmed.n_trials == 3);
  for (std::int64_t n = 0; n < 3; ++n)
    for (int k = 0; k < 2; ++k) {
      const auto full = pt.trial_channel(n, k);
      const auto cut = trimmed.trial_channel(n, k);
      for (std::int64_t t = 0; t < 80; ++t) CHECK(cut[t] == full[t + 10]);
    }
}

TEST_CASE("node strength sums off-diagonal locking") {
  PlvMatrix plv;
  plv.n_channels = 3;
  plv.n_trials = 1;
  plv.n_timebins = 1;
  plv.band = BandDefinition::alpha();
  plv.channel_names = {"a", "b", "c"};
  plv.values = {1.0, 0.5, 0.2,
                0.5, 1.0, 0.4,
                0.2, 0.4, 1.0};
  const auto s = channel_strength(plv);
  REQUIRE(s.size() == 3);
  CHECK(s[0] == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(s[1] == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(s[2] == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("min-max weight normalization maps the strength range onto [0,1]") {
  const auto cw = normalize_weights({0.6, 0.8, 1.0}, BandDefinition::theta(), 77);
  REQUIRE(cw.w.size() == 3);
  CHECK(cw.w[0] == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(cw.w[1] == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(cw.w[2] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(!cw.degenerate);
  CHECK(cw.band.name == "theta");
  CHECK(cw.source_fingerprint == 77);
}

TEST_CASE("constant strengths fall back to uniform weights with the flag") {
  const auto cw = normalize_weights({0.4, 0.4, 0.4, 0.4}, BandDefinition::delta(), 0);
  CHECK(cw.degenerate);
  for (const double w : cw.w) CHECK(w == 1.0);
}

TEST_CASE("channel weighting scales every sample of its channel") {
  SynthConfig scfg = desk_synth_config(3);
  scfg.trials_per_class = 2;
  const EegDataset ds = generate_subject(scfg, 0);
  ChannelWeights cw;
  cw.band = BandDefinition::alpha();
  cw.w.assign(static_cast<std::size_t>(ds.n_channels()), 1.0);
  cw.w[2] = 0.25;
  cw.w[5] = 0.0;
  const EegDataset scaled = apply_channel_weights(ds, cw);
  for (std::int64_t tr = 0; tr < ds.n_trials(); ++tr)
    for (int ch : {0, 2, 5}) {
      const auto before = ds.trial_channel(tr, ch);
      const auto after = scaled.trial_channel(tr, ch);
      for (std::int64_t t = 0; t < ds.samples_per_trial; t += 17)
        CHECK(after[t] == doctest::Approx(before[t] * cw.w[static_cast<std::size_t>(ch)])
                              .epsilon(1e-6));
    }
}

TEST_CASE("matrix correlation is exactly 1 against itself") {
  Rng rng(8);
  const auto pt = make_phases(6, 2, 80, [&](std::int64_t, int, std::int64_t) {
    return rng.uniform(-kPi, kPi);
  });
  const auto plv = plv_matrix(pt);
  CHECK(std::abs(plv_pearson_cc(plv, plv) - 1.0) < 1e-12);
}

TEST_CASE("matrix correlation matches a hand-computed Pearson r") {
  auto mk = [](std::vector<double> upper) {
    PlvMatrix m;
    m.n_channels = 3;
    m.n_trials = 1;
    m.n_timebins = 1;
    m.band = BandDefinition::alpha();
    m.channel_names = {"a", "b", "c"};
    m.values = {1.0, upper[0], upper[1],
                upper[0], 1.0, upper[2],
                upper[1], upper[2], 1.0};
    return m;
  };
  const std::vector<double> x = {0.2, 0.4, 0.9}, y = {0.1, 0.5, 0.8};
  double sx = 0, sy = 0;
  for (int i = 0; i < 3; ++i) { sx += x[i]; sy += y[i]; }
  const double mx = sx / 3, my = sy / 3;
  double xy = 0, xx = 0, yy = 0;
  for (int i = 0; i < 3; ++i) {
    xy += (x[i] - mx) * (y[i] - my);
    xx += (x[i] - mx) * (x[i] - mx);
    yy += (y[i] - my) * (y[i] - my);
  }
  const double want = xy / std::sqrt(xx * yy);
  CHECK(std::abs(plv_pearson_cc(mk(x), mk(y)) - want) < 1e-12);
}

TEST_CASE("thresholded edges are above tau and sorted descending") {
  PlvMatrix plv;
  plv.n_channels = 4;
  plv.n_trials = 1;
  plv.n_timebins = 1;
  plv.band = BandDefinition::alpha();
  plv.channel_names = {"a", "b", "c", "d"};
  plv.values = {1.00, 0.95, 0.10, 0.92,
                0.95, 1.00, 0.99, 0.20,
                0.10, 0.99, 1.00, 0.30,
                0.92, 0.20, 0.30, 1.00};
  const auto edges = threshold_edges(plv, 0.9);
  REQUIRE(edges.size() == 3);
  CHECK(edges[0].value == doctest::Approx(0.99));
  CHECK(edges[1].value == doctest::Approx(0.95));
  CHECK(edges[2].value == doctest::Approx(0.92));
  CHECK(edges[0].k1 == 1);
  CHECK(edges[0].k2 == 2);
}

TEST_CASE("fingerprints separate distinct matrices") {
  Rng rng(9);
  const auto pt = make_phases(3, 2, 60, [&](std::int64_t, int, std::int64_t) {
    return rng.uniform(-kPi, kPi);
  });
  auto a = plv_matrix(pt);
  auto b = a;
  CHECK(plv_fingerprint(a) == plv_fingerprint(b));
  b.values[1] += 1e-6;
  b.values[b.n_channels] = b.values[1];
  CHECK(plv_fingerprint(a) != plv_fingerprint(b));
}

TEST_CASE("band weight extraction is deterministic end to end") {
  SynthConfig scfg = desk_synth_config(21);
  scfg.trials_per_class = 3;
  const EegDataset ds = generate_subject(scfg, 0);
  const auto a = band_channel_weights(ds, BandDefinition::alpha());
  const auto b = band_channel_weights(ds, BandDefinition::alpha());
  REQUIRE(a.w.size() == static_cast<std::size_t>(ds.n_channels()));
  CHECK(a.w == b.w);
  for (const double w : a.w) {
    CHECK(w >= 0.0);
    CHECK(w <= 1.0);
  }
}
