#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ixn {

/// 8-bit grayscale PNG writer (image grids, index-map dumps).
void write_png_gray8(const std::string& path, int width, int height,
                     const std::vector<std::uint8_t>& pixels);

}  // namespace ixn
