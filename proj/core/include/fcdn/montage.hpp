#pragma once

#include <map>
#include <string>
#include <vector>

namespace fcdn {

// An ordered electrode layout plus named channel groups ("regions") used for
// ablation. Channel order is significant everywhere downstream: datasets,
// connectivity matrices and learned channel weights all follow it.
struct Montage {
  std::vector<std::string> channel_names;
  std::map<std::string, std::vector<std::string>> region_sets;

  // Full 64-channel cap (extended 10-20 naming), front-to-back rows.
  static Montage paper64();
  // 16-channel subset centred on midline + parieto-occipital sites; small
  // enough to train on a single core in minutes.
  static Montage desk16();
  // Rebuild a montage from bare names (e.g. after loading a dataset file),
  // attaching the standard region definitions restricted to present names.
  static Montage from_channels(std::vector<std::string> names);

  int size() const { return static_cast<int>(channel_names.size()); }
  bool has_channel(const std::string& name) const;
  // Index of a channel name; throws ValidationError if absent.
  int index_of(const std::string& name) const;
  // Uniqueness, at least two channels, region members all present.
  void validate() const;
};

// The parieto-occipital group targeted by the region-ablation study.
const std::vector<std::string>& occipital_channels();

}  // namespace fcdn
