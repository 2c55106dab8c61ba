#include "fcdn/checkpoint.hpp"

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fcdn/error.hpp"

namespace fcdn {

using json = nlohmann::json;

namespace {

constexpr char kMagic[8] = {'F', 'C', 'D', 'N', 'C', 'K', 'P', '1'};

json weights_to_json(const ChannelWeights& cw) {
  json j;
  j["w"] = cw.w;
  j["band"] = {{"name", cw.band.name}, {"f_min", cw.band.f_min}, {"f_max", cw.band.f_max}};
  j["source_fingerprint"] = cw.source_fingerprint;
  j["degenerate"] = cw.degenerate;
  return j;
}

ChannelWeights weights_from_json(const json& j) {
  ChannelWeights cw;
  cw.w = j.at("w").get<std::vector<double>>();
  cw.band.name = j.at("band").at("name").get<std::string>();
  cw.band.f_min = j.at("band").at("f_min").get<double>();
  cw.band.f_max = j.at("band").at("f_max").get<double>();
  cw.source_fingerprint = j.at("source_fingerprint").get<std::uint64_t>();
  cw.degenerate = j.at("degenerate").get<bool>();
  return cw;
}

}  // namespace

void save_checkpoint(const FcdnModel& model, const std::filesystem::path& path) {
  // model_tensors needs mutable access for the views; serialization only reads.
  auto& m = const_cast<FcdnModel&>(model);
  const auto tensors = model_tensors(m);

  json header;
  header["schema_version"] = 1;
  header["config"] = json::parse(model.cfg.to_json());
  header["is_teacher"] = model.is_teacher;
  header["channel_names"] = model.channel_names;
  header["class_names"] = model.class_names;
  header["fitted"] = model.fitted;
  header["seed"] = model.seed;
  header["trained_epochs"] = model.trained_epochs;
  header["train_fingerprint"] = model.train_fingerprint;
  header["preprocess_hash"] = model.preprocess_hash;
  json jweights = json::array();
  for (const auto& cw : model.weights) jweights.push_back(weights_to_json(cw));
  header["channel_weights"] = jweights;

  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& nt : tensors) {
    json entry;
    entry["name"] = nt.name;
    entry["shape"] = nt.tensor->shape;
    entry["offset"] = offset;
    manifest.push_back(entry);
    offset += nt.tensor->numel() * sizeof(float);
  }
  header["manifest"] = manifest;
  const std::string htext = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, sizeof kMagic);
  const std::uint32_t hlen = static_cast<std::uint32_t>(htext.size());
  out.write(reinterpret_cast<const char*>(&hlen), 4);
  out.write(htext.data(), static_cast<std::streamsize>(htext.size()));
  for (const auto& nt : tensors)
    out.write(reinterpret_cast<const char*>(nt.tensor->data.data()),
              static_cast<std::streamsize>(nt.tensor->numel() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

FcdnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path.string());

  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::string(magic, 8) != std::string(kMagic, 8))
    throw IoError("not a checkpoint file: " + path.string());
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
    throw IoError("unsupported checkpoint schema in " + path.string());

  FcdnModel model;
  try {
    const FcdnConfig cfg = FcdnConfig::from_json(header.at("config").dump());
    model = build_model(cfg, header.at("is_teacher").get<bool>());
    model.channel_names = header.at("channel_names").get<std::vector<std::string>>();
    model.class_names = header.at("class_names").get<std::vector<std::string>>();
    model.fitted = header.at("fitted").get<bool>();
    model.seed = header.at("seed").get<std::uint64_t>();
    model.trained_epochs = header.at("trained_epochs").get<int>();
    model.train_fingerprint = header.at("train_fingerprint").get<std::uint64_t>();
    model.preprocess_hash = header.at("preprocess_hash").get<std::string>();
    const json& jweights = header.at("channel_weights");
    require(jweights.size() == static_cast<std::size_t>(kNumBands),
            "checkpoint: expected one weight set per band");
    for (int b = 0; b < kNumBands; ++b) model.weights[b] = weights_from_json(jweights[b]);
  } catch (const json::exception& e) {
    throw IoError("bad header field in " + path.string() + ": " + e.what());
  }

  const auto tensors = model_tensors(model);
  const json& manifest = header.at("manifest");
  require(manifest.size() == tensors.size(),
          "checkpoint: manifest does not match the model architecture");
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const json& entry = manifest[i];
    require(entry.at("name").get<std::string>() == tensors[i].name,
            "checkpoint: manifest order mismatch at '" + tensors[i].name + "'");
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    require(shape == tensors[i].tensor->shape,
            "checkpoint: shape mismatch for '" + tensors[i].name + "'");
    in.read(reinterpret_cast<char*>(tensors[i].tensor->data.data()),
            static_cast<std::streamsize>(tensors[i].tensor->numel() * sizeof(float)));
    if (!in) throw IoError("truncated tensor data in " + path.string());
  }
  return model;
}

}  // namespace fcdn
