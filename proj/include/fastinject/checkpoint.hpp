#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "fastinject/layers.hpp"

namespace fastinject {

// Binary layout, little-endian:
//   "FJCKPT1\n"
//   u64 entry count, then per entry: u32 key length, key, u32 value length, value
//   u64 tensor count, then per tensor: u32 name length, name, u32 rank (2),
//       u64 rows, u64 cols, rows*cols f64 values in row-major order
inline constexpr char kCheckpointMagic[] = "FJCKPT1\n";

using Manifest = std::map<std::string, std::string>;

struct Checkpoint {
  Manifest manifest;
  ParamStore params;
};

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const Manifest& manifest);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fastinject
