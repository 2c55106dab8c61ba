#include "fcdn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "fcdn/error.hpp"
#include "fcdn/hashing.hpp"

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

namespace fcdn {

using nlohmann::json;

static constexpr char kMagic[8] = {'F', 'C', 'D', 'N', 'S', 'E', 'T', '1'};

void BandDefinition::validate(double fs) const {
  require(!name.empty(), "band: name must be non-empty");
  require(f_min > 0.0, "band '" + name + "': f_min must be positive");
  require(f_max > f_min, "band '" + name + "': f_max must exceed f_min");
  require(f_max < fs / 2.0, "band '" + name + "': f_max must lie below Nyquist");
}

std::span<const float> EegDataset::trial_channel(std::int64_t trial, int channel) const {
  require(trial >= 0 && trial < n_trials(), "trial index out of range");
  require(channel >= 0 && channel < n_channels(), "channel index out of range");
  const std::size_t off =
      (static_cast<std::size_t>(trial) * n_channels() + channel) * samples_per_trial;
  return {samples.data() + off, static_cast<std::size_t>(samples_per_trial)};
}

std::span<float> EegDataset::trial_channel_mut(std::int64_t trial, int channel) {
  auto s = static_cast<const EegDataset*>(this)->trial_channel(trial, channel);
  return {const_cast<float*>(s.data()), s.size()};
}

std::vector<std::int64_t> EegDataset::trials_of_class(int cls) const {
  std::vector<std::int64_t> out;
  for (std::int64_t i = 0; i < n_trials(); ++i)
    if (labels[i] == cls) out.push_back(i);
  return out;
}

void EegDataset::append_provenance(const std::string& step) {
  if (!provenance.empty()) provenance += "; ";
  provenance += step;
}

void EegDataset::validate() const {
  require(fs > 0.0, "dataset: sampling rate must be positive");
  montage.validate();
  require(!class_names.empty(), "dataset: class_names must be non-empty");
  require(samples_per_trial > 0, "dataset: samples_per_trial must be positive");
  require(epoch_onset_sample >= 0 && epoch_onset_sample <= samples_per_trial,
          "dataset: epoch_onset_sample out of range");
  for (int l : labels)
    require(l >= 0 && l < n_classes(), "dataset: label out of range");
  const auto expect = static_cast<std::size_t>(n_trials()) * n_channels() * samples_per_trial;
  require(samples.size() == expect, "dataset: payload size mismatch");
}

void save_dataset(const EegDataset& ds, const std::filesystem::path& path) {
  ds.validate();
  json header;
  header["schema_version"] = 1;
  header["subject_id"] = ds.subject_id;
  header["fs"] = ds.fs;
  header["channel_names"] = ds.montage.channel_names;
  header["class_names"] = ds.class_names;
  header["labels"] = ds.labels;
  header["n_trials"] = ds.n_trials();
  header["samples_per_trial"] = ds.samples_per_trial;
  header["epoch_onset_sample"] = ds.epoch_onset_sample;
  header["provenance"] = ds.provenance;
  const std::string htext = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  out.write(reinterpret_cast<const char*>(ds.samples.data()),
            static_cast<std::streamsize>(ds.samples.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

EegDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());

  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("not a dataset container (bad magic): " + path.string());
  std::uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in) throw IoError("truncated header length: " + path.string());
  std::string htext(hlen, '\0');
  in.read(htext.data(), hlen);
  if (!in) throw IoError("truncated header: " + path.string());

  json header;
  try {
    header = json::parse(htext);
  } catch (const json::exception& e) {
    throw IoError("malformed header JSON in " + path.string() + ": " + e.what());
  }
  if (header.value("schema_version", -1) != 1)
    throw IoError("unsupported schema_version in " + path.string());

  EegDataset ds;
  try {
    ds.subject_id = header.at("subject_id").get<std::string>();
    ds.fs = header.at("fs").get<double>();
    ds.montage = Montage::from_channels(
        header.at("channel_names").get<std::vector<std::string>>());
    ds.class_names = header.at("class_names").get<std::vector<std::string>>();
    ds.labels = header.at("labels").get<std::vector<int>>();
    ds.samples_per_trial = header.at("samples_per_trial").get<std::int64_t>();
    ds.epoch_onset_sample = header.at("epoch_onset_sample").get<std::int64_t>();
    ds.provenance = header.at("provenance").get<std::string>();
    const auto n_trials = header.at("n_trials").get<std::int64_t>();
    if (n_trials != ds.n_trials())
      throw IoError("n_trials does not match labels length in " + path.string());
  } catch (const json::exception& e) {
    throw IoError("missing or mistyped header field in " + path.string() + ": " + e.what());
  }

  const auto count =
      static_cast<std::size_t>(ds.n_trials()) * ds.n_channels() * ds.samples_per_trial;
  ds.samples.resize(count);
  in.read(reinterpret_cast<char*>(ds.samples.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
    throw IoError("truncated payload: " + path.string());
  in.peek();
  if (!in.eof()) throw IoError("trailing bytes after payload: " + path.string());

  ds.validate();
  return ds;
}

EegDataset extract_epoch(const EegDataset& ds, double start_s, double end_s,
                         bool relative_to_onset) {
  require(end_s > start_s, "extract_epoch: window must have positive length");
  const std::int64_t base = relative_to_onset ? ds.epoch_onset_sample : 0;
  const std::int64_t start = base + std::llround(start_s * ds.fs);
  const std::int64_t stop = base + std::llround(end_s * ds.fs);
  require(start >= 0 && stop <= ds.samples_per_trial && start < stop,
          "extract_epoch: window outside trial bounds");

  EegDataset out;
  out.subject_id = ds.subject_id;
  out.fs = ds.fs;
  out.montage = ds.montage;
  out.class_names = ds.class_names;
  out.labels = ds.labels;
  out.samples_per_trial = stop - start;
  out.epoch_onset_sample =
      std::clamp<std::int64_t>(ds.epoch_onset_sample - start, 0, out.samples_per_trial);
  out.provenance = ds.provenance;
  if (start != 0 || stop != ds.samples_per_trial) {
    char note[96];
    std::snprintf(note, sizeof note, "extract_epoch samples [%lld,%lld)",
                  static_cast<long long>(start), static_cast<long long>(stop));
    out.append_provenance(note);
  }

  out.samples.resize(
      static_cast<std::size_t>(ds.n_trials()) * ds.n_channels() * out.samples_per_trial);
  for (std::int64_t t = 0; t < ds.n_trials(); ++t) {
    for (int k = 0; k < ds.n_channels(); ++k) {
      auto src = ds.trial_channel(t, k);
      auto dst = out.trial_channel_mut(t, k);
      std::copy_n(src.data() + start, out.samples_per_trial, dst.data());
    }
  }
  out.validate();
  return out;
}

EegDataset drop_channels(const EegDataset& ds, const std::string& region) {
  auto it = ds.montage.region_sets.find(region);
  require(it != ds.montage.region_sets.end(),
          "drop_channels: unknown region '" + region + "'");
  const std::set<std::string> doomed(it->second.begin(), it->second.end());
  if (doomed.empty()) return ds;

  std::vector<int> keep;
  for (int k = 0; k < ds.n_channels(); ++k)
    if (doomed.count(ds.montage.channel_names[k]) == 0) keep.push_back(k);
  require(keep.size() >= 2, "drop_channels: fewer than two channels would remain");

  EegDataset out;
  out.subject_id = ds.subject_id;
  out.fs = ds.fs;
  Montage m;
  for (int k : keep) m.channel_names.push_back(ds.montage.channel_names[k]);
  for (const auto& [name, members] : ds.montage.region_sets) {
    std::vector<std::string> left;
    for (const auto& ch : members)
      if (doomed.count(ch) == 0) left.push_back(ch);
    m.region_sets[name] = std::move(left);
  }
  m.validate();
  out.montage = std::move(m);
  out.class_names = ds.class_names;
  out.labels = ds.labels;
  out.samples_per_trial = ds.samples_per_trial;
  out.epoch_onset_sample = ds.epoch_onset_sample;
  out.provenance = ds.provenance;
  out.append_provenance("drop_channels region=" + region);

  out.samples.resize(
      static_cast<std::size_t>(ds.n_trials()) * keep.size() * ds.samples_per_trial);
  for (std::int64_t t = 0; t < ds.n_trials(); ++t) {
    for (std::size_t kk = 0; kk < keep.size(); ++kk) {
      auto src = ds.trial_channel(t, keep[kk]);
      auto dst = out.trial_channel_mut(t, static_cast<int>(kk));
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }
  out.validate();
  return out;
}

void export_csv(const EegDataset& ds, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "trial,channel,sample_index,value\n";
  char line[128];
  for (std::int64_t t = 0; t < ds.n_trials(); ++t) {
    for (int k = 0; k < ds.n_channels(); ++k) {
      auto sig = ds.trial_channel(t, k);
      for (std::int64_t i = 0; i < ds.samples_per_trial; ++i) {
        std::snprintf(line, sizeof line, "%lld,%s,%lld,%.9g\n",
                      static_cast<long long>(t), ds.montage.channel_names[k].c_str(),
                      static_cast<long long>(i), static_cast<double>(sig[i]));
        out << line;
      }
    }
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::uint64_t dataset_fingerprint(const EegDataset& ds) {
  Fnv1a h;
  h.update(ds.subject_id);
  h.update_f64(ds.fs);
  for (const auto& c : ds.montage.channel_names) h.update(c);
  for (const auto& c : ds.class_names) h.update(c);
  for (int l : ds.labels) h.update_i64(l);
  h.update_i64(ds.samples_per_trial);
  h.update_i64(ds.epoch_onset_sample);
  h.update(ds.samples.data(), ds.samples.size() * sizeof(float));
  return h.digest();
}

}  // namespace fcdn
