#pragma once

#include <filesystem>

#include "fcdn/model.hpp"

namespace fcdn {

// Binary model checkpoint: magic "FCDNCKP1", a little-endian uint32 header
// length, a JSON header (config, channel weights, names, training metadata
// and a tensor manifest), then the raw float32 tensor blobs in manifest
// order. A save/load round trip reproduces every byte of model state; the
// distillation teacher is not persisted.
void save_checkpoint(const FcdnModel& model, const std::filesystem::path& path);
FcdnModel load_checkpoint(const std::filesystem::path& path);

}  // namespace fcdn
