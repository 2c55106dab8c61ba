#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fcdn/montage.hpp"

namespace fcdn {

// A named frequency band in Hz. The three standard bands below drive the
// whole pipeline: filtering, connectivity and the stacked image planes.
struct BandDefinition {
  std::string name;
  double f_min = 0.0;
  double f_max = 0.0;

  static BandDefinition delta() { return {"delta", 0.5, 4.0}; }
  static BandDefinition theta() { return {"theta", 4.0, 8.0}; }
  static BandDefinition alpha() { return {"alpha", 8.0, 13.0}; }
  static std::array<BandDefinition, 3> standard_bands() {
    return {delta(), theta(), alpha()};
  }

  double center() const { return 0.5 * (f_min + f_max); }
  // 0 < f_min < f_max < fs/2.
  void validate(double fs) const;
};

// In-memory trial collection for one subject. Samples are stored as float32
// in microvolts, trial-major then channel-major with time fastest — the same
// layout the container file uses, so I/O is a straight copy.
//
// Treated as immutable once built: every transform returns a new dataset.
struct EegDataset {
  std::string subject_id;
  double fs = 0.0;
  Montage montage;
  std::vector<std::string> class_names;
  std::vector<int> labels;          // one per trial, in [0, n_classes)
  std::int64_t samples_per_trial = 0;
  std::int64_t epoch_onset_sample = 0;  // index of cue onset within each trial
  std::string provenance;               // free-text processing history
  std::vector<float> samples;           // n_trials * K * samples_per_trial

  std::int64_t n_trials() const { return static_cast<std::int64_t>(labels.size()); }
  int n_channels() const { return montage.size(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }

  std::span<const float> trial_channel(std::int64_t trial, int channel) const;
  std::span<float> trial_channel_mut(std::int64_t trial, int channel);

  std::vector<std::int64_t> trials_of_class(int cls) const;
  void append_provenance(const std::string& step);
  void validate() const;
};

// Container round-trip. Layout: 8-byte magic, little-endian u32 header
// length, UTF-8 JSON header, then the float32 payload (little-endian).
void save_dataset(const EegDataset& ds, const std::filesystem::path& path);
EegDataset load_dataset(const std::filesystem::path& path);

// Time cropping. With relative_to_onset the window is in seconds around the
// cue onset; otherwise it is absolute within the trial. Returns a dataset
// whose onset index is remapped into the cropped frame (clamped to 0 when the
// onset falls before the crop).
EegDataset extract_epoch(const EegDataset& ds, double start_s, double end_s,
                         bool relative_to_onset);

// Remove all channels of a named region (montage order otherwise preserved).
EegDataset drop_channels(const EegDataset& ds, const std::string& region);

// Debug export: one row per sample, columns trial,channel,sample_index,value.
void export_csv(const EegDataset& ds, const std::filesystem::path& path);

// Order-sensitive digest of header fields and payload bytes.
std::uint64_t dataset_fingerprint(const EegDataset& ds);

}  // namespace fcdn
