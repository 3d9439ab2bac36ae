#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "naturamap/tensor.hpp"

namespace naturamap {

// NTSR tensor file layout (all integers little-endian):
//   "NTSR" | version u8 = 1 | dtype u8 = 1 (float32) | ndim u8 | 3 zero bytes
//   | ndim x u32 extents | row-major float32 payload
inline constexpr std::uint8_t kNtsrVersion = 1;
inline constexpr std::uint8_t kNtsrDtypeFloat32 = 1;

std::size_t ntsr_header_size(std::size_t ndim);

std::vector<std::uint8_t> encode_tensor(const TensorArray& t);
TensorArray decode_tensor(const std::vector<std::uint8_t>& bytes);

void write_tensor(const std::filesystem::path& path, const TensorArray& t);
TensorArray read_tensor(const std::filesystem::path& path);

}  // namespace naturamap
