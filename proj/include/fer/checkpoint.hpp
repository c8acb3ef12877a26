#pragma once

#include "fer/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fer {

struct CheckpointArray {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<float> data;
};

/// Flat binary layout, all integers little-endian:
///   "FERCKPT1" | u32 metadata_len | metadata JSON | u32 array_count |
///   per array: u32 name_len | name | u32 ndim | u64 dims[ndim] | f32 data[prod(dims)]
struct Checkpoint {
  nlohmann::ordered_json metadata;
  std::vector<CheckpointArray> arrays;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
/// Throws InputError on truncated or malformed bytes.
Checkpoint decode_checkpoint(std::string_view bytes);

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Captures every parameter group of `model`; roles and trainable flags go into
/// metadata["groups"].
Checkpoint make_checkpoint(const TrainableModel& model, nlohmann::ordered_json metadata);

/// Copies arrays into the matching groups by name. Throws InputError on a missing
/// group or shape mismatch.
void load_checkpoint(TrainableModel& model, const Checkpoint& ckpt);

} // namespace fer
