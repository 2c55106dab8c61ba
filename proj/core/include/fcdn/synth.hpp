#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "fcdn/dataset.hpp"

namespace fcdn {

// A band-limited oscillation planted on a set of channels. Each listed
// channel receives an independent phase trajectory, so oscillator specs
// shape power only; phase locking comes exclusively from coupling specs.
struct OscillatorSpec {
  std::vector<std::string> channels;
  std::string band;          // "delta" | "theta" | "alpha"
  double center_freq_hz = 0; // 0 -> band centre
  double amplitude_uv = 0;
  double bandwidth_hz = 0;   // 0 -> band-dependent default
};

// A shared oscillator driving two channels: channel_b replays channel_a's
// phase shifted by phase_lag plus per-trial von-Mises jitter whose
// concentration grows with `strength` (1 -> jitter-free, perfect locking).
struct CouplingSpec {
  std::string channel_a;
  std::string channel_b;
  std::string band;
  double strength = 0.0;     // in [0, 1]
  double phase_lag = 0.0;    // radians
  double amplitude_uv = 4.0;
  double center_freq_hz = 0; // 0 -> band centre
  double bandwidth_hz = 0;   // 0 -> band-dependent default
};

struct ClassSignature {
  int class_index = 0;
  std::vector<OscillatorSpec> oscillators;
  std::vector<CouplingSpec> couplings;
  double background_noise_sigma_uv = 2.0;  // white
  double pink_noise_gain = 4.0;            // RMS uV of the 1/f background

  void validate(const Montage& montage, double fs) const;
};

struct SynthConfig {
  int n_subjects = 15;
  int trials_per_class = 50;
  Montage montage = Montage::desk16();
  double fs = 250.0;
  double epoch_start_s = -1.0;  // relative to imagery onset
  double epoch_end_s = 5.0;
  std::vector<std::string> class_names;
  std::vector<ClassSignature> signatures;  // one per class
  double subject_variability = 0.15;  // sigma of per-subject log-normal jitter
  std::uint64_t seed = 0;

  int n_classes() const { return static_cast<int>(signatures.size()); }
  void validate() const;

  nlohmann::json to_json() const;
  static SynthConfig from_json(const nlohmann::json& j);
};

// The four imagery tasks.
std::vector<std::string> default_class_names();

// Four signatures anchored to frontal delta and occipital alpha with a
// class-distinct frontal-occipital coupling topology. Uses only channels
// present in both bundled montages.
std::vector<ClassSignature> default_paper_signatures();

// Classes that differ only in which channel pairs are phase-locked: every
// signal channel carries exactly one alpha oscillator of equal amplitude in
// every class, so per-channel spectra match across classes.
std::vector<ClassSignature> coupling_only_signatures();

// Class information confined to single occipital channels; removing the
// occipital region erases it.
std::vector<ClassSignature> occipital_alpha_signatures();

SynthConfig desk_synth_config(std::uint64_t seed);
SynthConfig paper_synth_config(std::uint64_t seed);  // full 64-channel montage at 250 Hz
SynthConfig coupling_only_config(std::uint64_t seed);
SynthConfig occipital_alpha_config(std::uint64_t seed);

// Deterministic per (config, subject): equal inputs give byte-identical
// datasets regardless of call order or thread count.
EegDataset generate_subject(const SynthConfig& cfg, int subject_index);

}  // namespace fcdn
