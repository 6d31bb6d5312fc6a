#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace amdm {

/// 8-bit grayscale PNG; `pixels` holds `height` rows of `width` bytes, top row
/// first.
void write_png_gray(const std::filesystem::path& path, std::size_t width, std::size_t height,
                    const std::vector<std::uint8_t>& pixels);

}  // namespace amdm
