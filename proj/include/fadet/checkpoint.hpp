#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fadet/tensor.hpp"

namespace fadet {

struct CheckpointError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Flat binary archive of named tensors. Layout (all little-endian):
//   magic   u8[8]  "FADETCK1"
//   count   u64
//   record* count times:
//     name_len u32, name bytes (UTF-8, no terminator)
//     ndim     u32, dims u64[ndim]
//     data     f64[prod(dims)] raw IEEE-754 bits
// Raw f64 bits make save -> load bit-exact.
void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, Tensor>>& entries);

std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace fadet
