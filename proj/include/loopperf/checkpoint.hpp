#pragma once

// Binary parameter container:
//   "LPCKPT\0\0" | u32 version | u64 header bytes | header JSON | f64 data (LE)
// The header holds caller metadata and the ordered (name, shape) table.

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "loopperf/serialize.hpp"
#include "loopperf/tensornet.hpp"

namespace loopperf {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& store,
                     const Json& meta);

Json read_checkpoint_meta(const std::filesystem::path& path);

// Fills every store parameter whose name starts with `prefix` from the file.
// Missing names or differing shapes raise FormatError. Returns the metadata.
Json load_checkpoint(const std::filesystem::path& path, ParameterStore& store,
                     std::string_view prefix = "");

}  // namespace loopperf
