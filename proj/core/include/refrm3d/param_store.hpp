#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "refrm3d/network.hpp"

namespace refrm3d {

// Checkpoint archive: "VXA1" magic, a u32 little-endian manifest length,
// a JSON manifest listing tensor names/shapes/element offsets plus free-form
// metadata, then the concatenated f32 little-endian payloads. Readers are
// strict: any structural inconsistency (bad magic, short payload, trailing
// bytes, offset overlap) is a CorruptFile error.
struct TensorRecord {
  std::string name;
  std::vector<std::int64_t> shape;
  std::vector<float> values;
};

struct ParamArchive {
  nlohmann::json meta;  // e.g. seed, config hash, epoch, variant
  std::vector<TensorRecord> tensors;
};

void write_param_archive(const std::filesystem::path& path,
                         const ParamArchive& archive);
ParamArchive read_param_archive(const std::filesystem::path& path);

// Snapshot of named parameters (f64 in memory, stored as f32).
ParamArchive archive_from_params(const std::vector<NamedParam>& params,
                                 nlohmann::json meta);
// Writes archived values back into matching parameters; every parameter
// must find a record with its exact name and shape.
void load_params_from_archive(const ParamArchive& archive,
                              const std::vector<NamedParam>& params);

}  // namespace refrm3d
