// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "dreammap/errors.hpp"
#include "dreammap/grid.hpp"

namespace dreammap {

// Map file, UTF-8 text:
//   REMAP v1
//   H W unit            (unit in {dbm, norm})
//   H lines of W space-separated decimal floats
void save_map(const std::filesystem::path& path, const GridMap& map);
GridMap load_map(const std::filesystem::path& path);

// Pair file: JSON {"meta": {...}, "empty": "<map path>", "occupied": "<map path>"}
// with map paths relative to the JSON's directory. save_pair writes the two
// map files next to the JSON as <stem>_empty.map / <stem>_occupied.map.
void save_pair(const std::filesystem::path& json_path, const EnvironmentPair& pair);
EnvironmentPair load_pair(const std::filesystem::path& json_path);

/// Exact shortest decimal rendering used by every text format in the project.
std::string format_double(double v);

}  // namespace dreammap
