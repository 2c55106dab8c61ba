#include "fcdn/montage.hpp"

#include <algorithm>
#include <set>

#include "fcdn/error.hpp"

namespace fcdn {

const std::vector<std::string>& occipital_channels() {
  static const std::vector<std::string> v = {"PO3", "PO4", "PO7", "PO8", "POz",
                                             "O1",  "O2",  "Oz",  "Iz"};
  return v;
}

Montage Montage::paper64() {
  return from_channels({
      "Fp1", "Fp2",
      "AF7", "AF5", "AF3", "AFz", "AF4", "AF6", "AF8",
      "F7",  "F5",  "F3",  "F1",  "Fz",  "F2",  "F4",  "F6",  "F8",
      "FT9", "FT7", "FC5", "FC3", "FC1", "FC2", "FC4", "FC6", "FT8", "FT10",
      "T7",  "C5",  "C3",  "C1",  "Cz",  "C2",  "C4",  "C6",  "T8",
      "TP7", "CP5", "CP3", "CP1", "CPz", "CP2", "CP4", "CP6", "TP8",
      "P7",  "P5",  "P3",  "P1",  "Pz",  "P2",  "P4",  "P6",  "P8",
      "PO7", "PO3", "POz", "PO4", "PO8",
      "O1",  "Oz",  "O2",
      "Iz",
  });
}

Montage Montage::desk16() {
  return from_channels({"Fz", "F3", "F4", "Cz", "C3", "C4", "Pz", "P3", "P4",
                        "POz", "PO3", "PO4", "O1", "O2", "Oz", "Iz"});
}

Montage Montage::from_channels(std::vector<std::string> names) {
  Montage m;
  m.channel_names = std::move(names);
  std::vector<std::string> occ;
  for (const auto& name : m.channel_names) {
    if (std::find(occipital_channels().begin(), occipital_channels().end(), name) !=
        occipital_channels().end()) {
      occ.push_back(name);
    }
  }
  m.region_sets["occipital"] = std::move(occ);
  m.validate();
  return m;
}

bool Montage::has_channel(const std::string& name) const {
  return std::find(channel_names.begin(), channel_names.end(), name) != channel_names.end();
}

int Montage::index_of(const std::string& name) const {
  auto it = std::find(channel_names.begin(), channel_names.end(), name);
  require(it != channel_names.end(), "montage: unknown channel '" + name + "'");
  return static_cast<int>(it - channel_names.begin());
}

void Montage::validate() const {
  require(channel_names.size() >= 2, "montage: need at least two channels");
  std::set<std::string> seen(channel_names.begin(), channel_names.end());
  require(seen.size() == channel_names.size(), "montage: duplicate channel names");
  for (const auto& [region, members] : region_sets) {
    for (const auto& ch : members) {
      require(seen.count(ch) != 0,
              "montage: region '" + region + "' references unknown channel '" + ch + "'");
    }
  }
}

}  // namespace fcdn
