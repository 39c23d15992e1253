#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "flock/keyvalue.hpp"
#include "flock/seqnet/model.hpp"

namespace flock::seqnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

KeyValues to_key_values(const ModelConfig& config);
/// Missing keys keep the values from base.
ModelConfig model_config_from(const KeyValues& kv, ModelConfig base = {});

/// Binary layout, little-endian:
///   "FLOCKCKP" | u32 version | str config | str scaler | str meta |
///   u32 tensor count | per tensor: str name, u64 rows, u64 cols, rows*cols f64 row-major |
///   u64 FNV-1a of all preceding bytes
/// where str is a u64 byte length followed by the bytes.
std::string serialize_checkpoint(const SequenceModel& model);
SequenceModel deserialize_checkpoint(const std::string& bytes);

/// Writes through a temporary file and renames it into place.
void save_checkpoint(const SequenceModel& model, const std::filesystem::path& path);
SequenceModel load_checkpoint(const std::filesystem::path& path);

}  // namespace flock::seqnet
