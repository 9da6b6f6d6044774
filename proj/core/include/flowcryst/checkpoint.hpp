#pragma once

#include <cstdint>
#include <string>

#include "flowcryst/net.hpp"

namespace flowcryst {

/// Provenance stored next to the parameters.
struct CheckpointMeta {
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string run_config;  ///< canonical key=value text of the training run
};

/// Binary checkpoint: magic, format version, a JSON header describing the
/// network and layout, then z-score statistics and parameters as
/// little-endian IEEE-754 doubles.
std::string serialize_checkpoint(const ModelParams& params, const CheckpointMeta& meta);
ModelParams deserialize_checkpoint(const std::string& bytes, CheckpointMeta* meta = nullptr);

void save_checkpoint(const std::string& path, const ModelParams& params, const CheckpointMeta& meta);
ModelParams load_checkpoint(const std::string& path, CheckpointMeta* meta = nullptr);

std::string net_config_to_json(const NetConfig& config);
NetConfig net_config_from_json(const std::string& text);

}  // namespace flowcryst
