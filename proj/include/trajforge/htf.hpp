#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "trajforge/tensor.hpp"

namespace trajforge::htf {

// Layout: "HTF1", u32 rank, rank x u64 extents, then float32 data. All
// little-endian, row-major, no padding.

std::vector<std::uint8_t> encode(const Tensor& t);
Tensor decode(std::span<const std::uint8_t> bytes);

void write_file(const std::filesystem::path& path, const Tensor& t);
Tensor read_file(const std::filesystem::path& path);

}  // namespace trajforge::htf
