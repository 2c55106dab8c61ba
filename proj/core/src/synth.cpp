#include "fcdn/synth.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numeric>

#include <nlohmann/json.hpp>

#include "fcdn/error.hpp"
#include "fcdn/fft.hpp"
#include "fcdn/hashing.hpp"
#include "fcdn/rng.hpp"

namespace fcdn {

using nlohmann::json;

namespace {

BandDefinition band_by_name(const std::string& name) {
  for (const auto& b : BandDefinition::standard_bands())
    if (b.name == name) return b;
  throw ValidationError("synth: unknown band '" + name + "'");
}

double default_bandwidth(const std::string& band) {
  if (band == "delta") return 0.8;
  if (band == "theta") return 1.0;
  return 1.5;  // alpha
}

// Raised-cosine activation gate: silent before onset, fully on 200 ms later.
double onset_gate(double t_rel_s) {
  constexpr double ramp = 0.2;
  if (t_rel_s < 0.0) return 0.0;
  if (t_rel_s >= ramp) return 1.0;
  return 0.5 * (1.0 - std::cos(M_PI * t_rel_s / ramp));
}

// Jitter concentration from coupling strength; strength 1 means zero jitter
// (handled by the caller), and the map below is monotone with kappa(0) = 0.
double kappa_from_strength(double s) { return 2.0 * s / (1.0 - s); }

// Unit-RMS 1/f noise via spectral shaping of white Gaussian bins.
std::vector<double> pink_noise(Rng& rng, std::int64_t n) {
  const std::size_t bins = static_cast<std::size_t>(n) / 2 + 1;
  std::vector<std::complex<double>> spec(bins, 0.0);
  for (std::size_t k = 1; k < bins; ++k) {
    const double shape = 1.0 / std::sqrt(static_cast<double>(k));
    const bool nyquist = (n % 2 == 0) && (k == bins - 1);
    const double re = rng.gaussian() * shape;
    const double im = nyquist ? 0.0 : rng.gaussian() * shape;
    spec[k] = {re, im};
  }
  auto x = fft::irfft(spec, static_cast<std::size_t>(n));
  double rms = 0.0;
  for (double v : x) rms += v * v;
  rms = std::sqrt(rms / static_cast<double>(n));
  if (rms > 0.0)
    for (double& v : x) v /= rms;
  return x;
}

struct OscState {
  std::vector<double> theta;  // phase trajectory
  std::vector<double> env;    // amplitude envelope, mean ~1
};

// Narrowband oscillator: phase random walk around 2*pi*f0 plus a slowly
// varying envelope. Bandwidth maps to the Wiener-phase step variance.
OscState make_oscillator(Rng& rng, std::int64_t n, double fs, double f0, double bw) {
  OscState st;
  st.theta.resize(n);
  st.env.resize(n);
  const double step = 2.0 * M_PI * f0 / fs;
  const double sigma_w = std::sqrt(2.0 * M_PI * std::max(bw, 1e-3) / fs);
  double th = rng.uniform(-M_PI, M_PI);
  const double a = std::exp(-1.0 / (0.25 * fs));  // 250 ms envelope memory
  double s = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    st.theta[i] = th;
    th += step + sigma_w * rng.gaussian();
    s = a * s + (1.0 - a) * rng.gaussian();
    st.env[i] = std::max(0.1, 1.0 + 2.0 * s);
  }
  return st;
}

}  // namespace

void ClassSignature::validate(const Montage& montage, double fs) const {
  for (const auto& o : oscillators) {
    const auto band = band_by_name(o.band);
    band.validate(fs);
    require(!o.channels.empty(), "oscillator spec: empty channel subset");
    for (const auto& ch : o.channels) montage.index_of(ch);
    const double f0 = o.center_freq_hz == 0 ? band.center() : o.center_freq_hz;
    require(f0 >= band.f_min && f0 <= band.f_max,
            "oscillator spec: centre frequency outside band " + o.band);
    require(o.amplitude_uv >= 0.0, "oscillator spec: negative amplitude");
  }
  for (const auto& c : couplings) {
    const auto band = band_by_name(c.band);
    band.validate(fs);
    montage.index_of(c.channel_a);
    montage.index_of(c.channel_b);
    require(c.channel_a != c.channel_b, "coupling spec: self-coupling");
    require(c.strength >= 0.0 && c.strength <= 1.0,
            "coupling spec: strength outside [0,1]");
    const double f0 = c.center_freq_hz == 0 ? band.center() : c.center_freq_hz;
    require(f0 >= band.f_min && f0 <= band.f_max,
            "coupling spec: centre frequency outside band " + c.band);
    require(c.amplitude_uv >= 0.0, "coupling spec: negative amplitude");
  }
  require(background_noise_sigma_uv >= 0.0, "signature: negative noise sigma");
  require(pink_noise_gain >= 0.0, "signature: negative pink gain");
}

void SynthConfig::validate() const {
  require(n_subjects >= 1, "synth config: n_subjects must be >= 1");
  require(trials_per_class >= 1, "synth config: trials_per_class must be >= 1");
  require(fs > 0.0, "synth config: fs must be positive");
  require(epoch_end_s > epoch_start_s, "synth config: empty epoch span");
  require(epoch_start_s <= -0.5,
          "synth config: epoch must start at or before -0.5 s to cover the baseline");
  require(!signatures.empty(), "synth config: no class signatures");
  require(class_names.size() == signatures.size(),
          "synth config: class_names/signatures length mismatch");
  montage.validate();
  for (std::size_t i = 0; i < signatures.size(); ++i) {
    require(signatures[i].class_index == static_cast<int>(i),
            "synth config: signature class_index out of order");
    signatures[i].validate(montage, fs);
  }
  require(subject_variability >= 0.0, "synth config: negative subject_variability");
}

std::vector<std::string> default_class_names() {
  return {"picking up a cell phone", "pouring water", "opening a door", "eating food"};
}

std::vector<ClassSignature> default_paper_signatures() {
  // Frontal delta + occipital alpha everywhere; classes differ in lateral
  // emphasis and in which frontal-occipital pair is phase-locked. Amplitudes
  // are tuning constants chosen for ~0.8 desk-scale decodability, not taken
  // from any measurement.
  std::vector<ClassSignature> sig(4);
  for (int c = 0; c < 4; ++c) sig[c].class_index = c;

  sig[0].oscillators = {{{"Fz", "F3"}, "delta", 0, 5.0, 0},
                        {{"Oz", "O1"}, "alpha", 0, 4.5, 0}};
  sig[0].couplings = {{"Fz", "Oz", "alpha", 0.9, 0.0, 4.0, 0, 0}};

  sig[1].oscillators = {{{"Fz", "F4"}, "delta", 0, 5.0, 0},
                        {{"Oz", "O2"}, "alpha", 0, 4.5, 0}};
  sig[1].couplings = {{"F4", "Oz", "alpha", 0.9, 0.0, 4.0, 0, 0}};

  sig[2].oscillators = {{{"Fz", "Cz"}, "delta", 0, 4.5, 0},
                        {{"Cz"}, "theta", 0, 3.0, 0},
                        {{"POz", "Oz"}, "alpha", 0, 4.5, 0}};
  sig[2].couplings = {{"Fz", "POz", "alpha", 0.85, 0.0, 4.0, 0, 0}};

  sig[3].oscillators = {{{"Fz"}, "delta", 0, 5.5, 0},
                        {{"Fz", "Cz"}, "theta", 0, 2.5, 0},
                        {{"Oz", "PO3", "PO4"}, "alpha", 0, 3.5, 0}};
  sig[3].couplings = {{"Oz", "PO3", "alpha", 0.9, 0.0, 4.0, 0, 0},
                      {"Fz", "Cz", "theta", 0.85, 0.0, 3.0, 0, 0}};
  return sig;
}

std::vector<ClassSignature> coupling_only_signatures() {
  // Eight signal channels, each carrying exactly one alpha oscillator of the
  // same amplitude in every class; only the pairing changes. Marginal spectra
  // are therefore class-independent and all information lives in the PLV
  // topology.
  const double amp = 5.0, s = 0.95;
  auto pair = [&](const char* a, const char* b) {
    return CouplingSpec{a, b, "alpha", s, 0.0, amp, 0, 0};
  };
  std::vector<ClassSignature> sig(4);
  for (int c = 0; c < 4; ++c) {
    sig[c].class_index = c;
    sig[c].background_noise_sigma_uv = 2.0;
    sig[c].pink_noise_gain = 3.0;
  }
  sig[0].couplings = {pair("F3", "F4"), pair("C3", "C4"), pair("P3", "P4"),
                      pair("O1", "O2")};
  sig[1].couplings = {pair("F3", "C3"), pair("F4", "C4"), pair("P3", "O1"),
                      pair("P4", "O2")};
  sig[2].couplings = {pair("F3", "P3"), pair("F4", "P4"), pair("C3", "O1"),
                      pair("C4", "O2")};
  sig[3].couplings = {pair("F3", "O1"), pair("F4", "O2"), pair("C3", "P3"),
                      pair("C4", "P4")};
  return sig;
}

std::vector<ClassSignature> occipital_alpha_signatures() {
  // One alpha source per class, parked on a single occipital channel; a
  // class-independent frontal delta keeps the rest of the scalp busy.
  const OscillatorSpec frontal{{"Fz", "F3", "F4"}, "delta", 0, 4.0, 0};
  std::vector<ClassSignature> sig(4);
  const char* site[4] = {"O1", "O2", "Oz", "POz"};
  for (int c = 0; c < 4; ++c) {
    sig[c].class_index = c;
    sig[c].oscillators = {frontal, {{site[c]}, "alpha", 0, 6.0, 0}};
  }
  return sig;
}

static SynthConfig desk_base(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_subjects = 1;
  cfg.trials_per_class = 200;
  cfg.montage = Montage::desk16();
  cfg.fs = 125.0;
  cfg.epoch_start_s = -1.0;
  cfg.epoch_end_s = 5.0;
  cfg.class_names = default_class_names();
  cfg.subject_variability = 0.15;
  cfg.seed = seed;
  return cfg;
}

SynthConfig desk_synth_config(std::uint64_t seed) {
  auto cfg = desk_base(seed);
  cfg.signatures = default_paper_signatures();
  cfg.validate();
  return cfg;
}

SynthConfig paper_synth_config(std::uint64_t seed) {
  auto cfg = desk_base(seed);
  cfg.montage = Montage::paper64();
  cfg.fs = 250.0;
  cfg.trials_per_class = 50;
  cfg.signatures = default_paper_signatures();
  cfg.validate();
  return cfg;
}

SynthConfig coupling_only_config(std::uint64_t seed) {
  auto cfg = desk_base(seed);
  cfg.signatures = coupling_only_signatures();
  // Per-subject amplitude jitter would re-introduce class-dependent marginals
  // (each class jitters different coupling components), so keep it off.
  cfg.subject_variability = 0.0;
  cfg.validate();
  return cfg;
}

SynthConfig occipital_alpha_config(std::uint64_t seed) {
  auto cfg = desk_base(seed);
  cfg.signatures = occipital_alpha_signatures();
  cfg.subject_variability = 0.1;
  cfg.validate();
  return cfg;
}

json SynthConfig::to_json() const {
  json j;
  j["n_subjects"] = n_subjects;
  j["trials_per_class"] = trials_per_class;
  j["channel_names"] = montage.channel_names;
  j["fs"] = fs;
  j["epoch_start_s"] = epoch_start_s;
  j["epoch_end_s"] = epoch_end_s;
  j["class_names"] = class_names;
  j["subject_variability"] = subject_variability;
  j["seed"] = seed;
  json sigs = json::array();
  for (const auto& s : signatures) {
    json js;
    js["class_index"] = s.class_index;
    js["background_noise_sigma_uv"] = s.background_noise_sigma_uv;
    js["pink_noise_gain"] = s.pink_noise_gain;
    json oscs = json::array();
    for (const auto& o : s.oscillators) {
      oscs.push_back({{"channels", o.channels},
                      {"band", o.band},
                      {"center_freq_hz", o.center_freq_hz},
                      {"amplitude_uv", o.amplitude_uv},
                      {"bandwidth_hz", o.bandwidth_hz}});
    }
    js["oscillators"] = std::move(oscs);
    json cps = json::array();
    for (const auto& c : s.couplings) {
      cps.push_back({{"channel_a", c.channel_a},
                     {"channel_b", c.channel_b},
                     {"band", c.band},
                     {"strength", c.strength},
                     {"phase_lag", c.phase_lag},
                     {"amplitude_uv", c.amplitude_uv},
                     {"center_freq_hz", c.center_freq_hz},
                     {"bandwidth_hz", c.bandwidth_hz}});
    }
    js["couplings"] = std::move(cps);
    sigs.push_back(std::move(js));
  }
  j["signatures"] = std::move(sigs);
  return j;
}

SynthConfig SynthConfig::from_json(const json& j) {
  SynthConfig cfg;
  try {
    cfg.n_subjects = j.at("n_subjects").get<int>();
    cfg.trials_per_class = j.at("trials_per_class").get<int>();
    cfg.montage = Montage::from_channels(j.at("channel_names").get<std::vector<std::string>>());
    cfg.fs = j.at("fs").get<double>();
    cfg.epoch_start_s = j.at("epoch_start_s").get<double>();
    cfg.epoch_end_s = j.at("epoch_end_s").get<double>();
    cfg.class_names = j.at("class_names").get<std::vector<std::string>>();
    cfg.subject_variability = j.at("subject_variability").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& js : j.at("signatures")) {
      ClassSignature s;
      s.class_index = js.at("class_index").get<int>();
      s.background_noise_sigma_uv = js.at("background_noise_sigma_uv").get<double>();
      s.pink_noise_gain = js.at("pink_noise_gain").get<double>();
      for (const auto& jo : js.at("oscillators")) {
        OscillatorSpec o;
        o.channels = jo.at("channels").get<std::vector<std::string>>();
        o.band = jo.at("band").get<std::string>();
        o.center_freq_hz = jo.at("center_freq_hz").get<double>();
        o.amplitude_uv = jo.at("amplitude_uv").get<double>();
        o.bandwidth_hz = jo.at("bandwidth_hz").get<double>();
        s.oscillators.push_back(std::move(o));
      }
      for (const auto& jc : js.at("couplings")) {
        CouplingSpec c;
        c.channel_a = jc.at("channel_a").get<std::string>();
        c.channel_b = jc.at("channel_b").get<std::string>();
        c.band = jc.at("band").get<std::string>();
        c.strength = jc.at("strength").get<double>();
        c.phase_lag = jc.at("phase_lag").get<double>();
        c.amplitude_uv = jc.at("amplitude_uv").get<double>();
        c.center_freq_hz = jc.at("center_freq_hz").get<double>();
        c.bandwidth_hz = jc.at("bandwidth_hz").get<double>();
        s.couplings.push_back(std::move(c));
      }
      cfg.signatures.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("synth config JSON: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

namespace {

// Per-subject realization of a signature after variability jitter.
struct JitteredSignature {
  std::vector<OscillatorSpec> oscillators;
  std::vector<CouplingSpec> couplings;
  double noise_sigma = 0.0;
  double pink_gain = 0.0;
};

}  // namespace

EegDataset generate_subject(const SynthConfig& cfg, int subject_index) {
  cfg.validate();
  require(subject_index >= 0 && subject_index < cfg.n_subjects,
          "generate_subject: subject index out of range");

  const int K = cfg.montage.size();
  const std::int64_t S = std::llround((cfg.epoch_end_s - cfg.epoch_start_s) * cfg.fs);
  const std::int64_t onset = std::llround(-cfg.epoch_start_s * cfg.fs);
  const int C = cfg.n_classes();
  const std::int64_t n_trials = static_cast<std::int64_t>(cfg.trials_per_class) * C;
  const std::uint64_t su = static_cast<std::uint64_t>(subject_index);

  // Subject-level stream: component jitters in a fixed order, then the trial
  // shuffle. Independent of anything trial-level.
  Rng subj_rng(derive_seed(cfg.seed, {1, su}));
  std::vector<JitteredSignature> sigs(C);
  for (int c = 0; c < C; ++c) {
    const auto& src = cfg.signatures[c];
    auto& dst = sigs[c];
    dst.oscillators = src.oscillators;
    dst.couplings = src.couplings;
    dst.noise_sigma = src.background_noise_sigma_uv;
    dst.pink_gain = src.pink_noise_gain;
    for (auto& o : dst.oscillators)
      o.amplitude_uv *= std::exp(cfg.subject_variability * subj_rng.gaussian());
    for (auto& cp : dst.couplings) {
      cp.amplitude_uv *= std::exp(cfg.subject_variability * subj_rng.gaussian());
      cp.strength = std::clamp(
          cp.strength * std::exp(cfg.subject_variability * subj_rng.gaussian()), 0.0, 1.0);
    }
  }

  std::vector<int> labels(n_trials);
  for (std::int64_t i = 0; i < n_trials; ++i)
    labels[i] = static_cast<int>(i / cfg.trials_per_class);
  subj_rng.shuffle(labels);

  EegDataset ds;
  ds.subject_id = [&] {
    char buf[16];
    std::snprintf(buf, sizeof buf, "sub%02d", subject_index + 1);
    return std::string(buf);
  }();
  ds.fs = cfg.fs;
  ds.montage = cfg.montage;
  ds.class_names = cfg.class_names;
  ds.labels = labels;
  ds.samples_per_trial = S;
  ds.epoch_onset_sample = onset;
  {
    Fnv1a h;
    h.update(cfg.to_json().dump());
    char note[96];
    std::snprintf(note, sizeof note, "synth seed=%llu subject=%d config=%s",
                  static_cast<unsigned long long>(cfg.seed), subject_index,
                  hex64(h.digest()).c_str());
    ds.provenance = note;
  }
  ds.samples.assign(static_cast<std::size_t>(n_trials) * K * S, 0.0f);

  std::vector<double> gate(S);
  for (std::int64_t i = 0; i < S; ++i)
    gate[i] = onset_gate((i - onset) / cfg.fs);

  std::vector<std::vector<double>> chan(K, std::vector<double>(S));
  for (std::int64_t n = 0; n < n_trials; ++n) {
    const auto& sig = sigs[labels[n]];
    for (auto& ch : chan) std::fill(ch.begin(), ch.end(), 0.0);

    // Background: pink + white per channel, class-independent streams.
    for (int k = 0; k < K; ++k) {
      Rng rng(derive_seed(cfg.seed, {2, su, static_cast<std::uint64_t>(n),
                                     static_cast<std::uint64_t>(k)}));
      auto pink = pink_noise(rng, S);
      for (std::int64_t i = 0; i < S; ++i)
        chan[k][i] += sig.pink_gain * pink[i] + sig.noise_sigma * rng.gaussian();
    }

    // Power oscillators: independent instance per (spec, member channel).
    for (std::size_t oi = 0; oi < sig.oscillators.size(); ++oi) {
      const auto& o = sig.oscillators[oi];
      if (o.amplitude_uv == 0.0) continue;
      const auto band = band_by_name(o.band);
      const double f0 = o.center_freq_hz == 0 ? band.center() : o.center_freq_hz;
      const double bw = o.bandwidth_hz == 0 ? default_bandwidth(o.band) : o.bandwidth_hz;
      for (std::size_t ci = 0; ci < o.channels.size(); ++ci) {
        const int k = cfg.montage.index_of(o.channels[ci]);
        Rng rng(derive_seed(cfg.seed, {3, su, static_cast<std::uint64_t>(n), oi, ci}));
        auto osc = make_oscillator(rng, S, cfg.fs, f0, bw);
        for (std::int64_t i = 0; i < S; ++i)
          chan[k][i] += o.amplitude_uv * osc.env[i] * std::cos(osc.theta[i]) * gate[i];
      }
    }

    // Couplings: one shared oscillator, channel_b lagged and jittered.
    for (std::size_t pi = 0; pi < sig.couplings.size(); ++pi) {
      const auto& cp = sig.couplings[pi];
      if (cp.amplitude_uv == 0.0) continue;
      const auto band = band_by_name(cp.band);
      const double f0 = cp.center_freq_hz == 0 ? band.center() : cp.center_freq_hz;
      const double bw = cp.bandwidth_hz == 0 ? default_bandwidth(cp.band) : cp.bandwidth_hz;
      const int ka = cfg.montage.index_of(cp.channel_a);
      const int kb = cfg.montage.index_of(cp.channel_b);
      Rng rng(derive_seed(cfg.seed, {4, su, static_cast<std::uint64_t>(n), pi}));
      auto osc = make_oscillator(rng, S, cfg.fs, f0, bw);
      double delta = 0.0;
      if (cp.strength < 1.0 - 1e-9)
        delta = rng.von_mises(kappa_from_strength(cp.strength));
      for (std::int64_t i = 0; i < S; ++i) {
        const double a = cp.amplitude_uv * osc.env[i] * gate[i];
        chan[ka][i] += a * std::cos(osc.theta[i]);
        chan[kb][i] += a * std::cos(osc.theta[i] + cp.phase_lag + delta);
      }
    }

    for (int k = 0; k < K; ++k) {
      auto dst = ds.trial_channel_mut(n, k);
      for (std::int64_t i = 0; i < S; ++i) dst[i] = static_cast<float>(chan[k][i]);
    }
  }

  ds.validate();
  return ds;
}

}  // namespace fcdn
