#pragma once

// Parameter checkpoint container:
//   "INFUNECK" | u32 version | u64 step | u64 seed | u32 len + meta text
//   | u32 count | per tensor: u32 len + name, u64 rows, u64 cols,
//     rows*cols f64 values, then the two Adam moments (row-major, little-endian)

#include <filesystem>
#include <string>

#include "infune/tensor.hpp"

namespace infune {

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params,
                     const std::string& meta = {});

struct Checkpoint {
  ParamStore params;
  std::string meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace infune
