#pragma once

#include <string>
#include <vector>

#include "fadet/tensor.hpp"

namespace fadet {

/// 8-bit binary PGM (P5), values scaled so the map's own min..max spans
/// 0..255; a constant map writes all zeros.
void write_pgm(const std::string& path, const std::vector<double>& values,
               int64_t height, int64_t width);

/// Reads P5/P2 into [H,W,1] doubles scaled to [0,1].
Tensor read_pgm(const std::string& path);

}  // namespace fadet
