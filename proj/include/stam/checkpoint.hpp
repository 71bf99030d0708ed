#pragma once

#include <filesystem>

#include "stam/model.hpp"

namespace stam {

// "STAM1" + named-tensor manifest (u32 name length, name bytes, u32 rank,
// u32 extents, 64-bit little-endian values). Config scalars travel as
// "config.*" entries so a file fully reconstructs the model.
void save_checkpoint(const StamParams& params, const std::filesystem::path& path);
StamParams load_checkpoint(const std::filesystem::path& path);

}  // namespace stam
