#pragma once

// Single-file checkpoint:
//   "ATLOPCKP" | u32 version | u64 manifest bytes | JSON manifest | f32 data
// All integers and floats little-endian. The manifest carries the config,
// schema, vocabulary, thresholds, epoch history and a tensor table
// [{name, shape, offset, count}] with offsets in floats from the start of
// the data section.

#include <cstdint>
#include <filesystem>

#include "atlop/trainer.hpp"

namespace atlop {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const TrainedModel& tm);
/// Throws DataError for a damaged or incompatible file.
TrainedModel load_checkpoint(const std::filesystem::path& path);

/// Rounds every parameter value to the nearest 32-bit float.
void round_parameters_to_f32(Model& model);

}  // namespace atlop
