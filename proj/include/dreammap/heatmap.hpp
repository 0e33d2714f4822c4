// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <vector>

#include "dreammap/grid.hpp"

namespace dreammap {

/// Binary PGM (P5, 8-bit), one pixel per cell, min-max scaled per image
/// (constant maps render as 0). Marked cells draw a 3x3 inverted cross
/// clipped at the borders.
void export_heatmap(const GridMap& map, const std::vector<int>& marked_cells,
                    const std::filesystem::path& path);

}  // namespace dreammap
