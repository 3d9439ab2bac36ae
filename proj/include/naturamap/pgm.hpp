#pragma once

#include <filesystem>
#include <vector>

#include "naturamap/tensor.hpp"

namespace naturamap {

// 8-bit binary PGM (P5). Values are clamped to [0, 1] and quantized as
// round(255 * v), so 0 is black and 1 is white.
std::vector<std::uint8_t> encode_pgm(const TensorArray& map);
void write_pgm(const std::filesystem::path& path, const TensorArray& map);

// Maps of equal height placed left to right with a `gap`-pixel white gutter.
TensorArray side_by_side(const std::vector<TensorArray>& maps, std::size_t gap = 2);

}  // namespace naturamap
