#pragma once

#include <filesystem>
#include <iosfwd>

#include "loftr/config.hpp"
#include "loftr/model.hpp"

namespace loftr::LOFTR_PRECISION {

// "LFTC" container: magic, u32 version, u64-length config text, u32 parameter
// count, then per parameter a u32-length name followed by an LFTB blob.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Config config;
  ModelParams params;
};

void write_checkpoint(std::ostream& out, const Config& config, const ModelParams& params);
/// Rebuilds the architecture from the stored config and fills it. Missing,
/// duplicated, unknown or mis-shaped parameters raise InputError.
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Config& config, const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace loftr::LOFTR_PRECISION
