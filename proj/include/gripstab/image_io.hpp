#pragma once

#include <filesystem>

#include "gripstab/core.hpp"

namespace gripstab {

// 8-bit RGB PNG. Values are rounded to the nearest k/255 on write and
// decoded as k/255 on read, so rasters already on that grid round-trip exactly.
void write_png(const std::filesystem::path& path, const Raster& image);
Raster read_png(const std::filesystem::path& path);

}  // namespace gripstab
