// SPDX-License-Identifier: Apache-2.0

#include "dreammap/heatmap.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "dreammap/errors.hpp"

namespace dreammap {

void export_heatmap(const GridMap& map, const std::vector<int>& marked_cells,
                    const std::filesystem::path& path) {
  const int h = map.height(), w = map.width();
  const double lo = map.values().minCoeff();
  const double hi = map.values().maxCoeff();
  const double range = hi - lo;

  std::vector<std::uint8_t> pixels(static_cast<size_t>(h) * w, 0);
  if (range > 0) {
    for (int i = 0; i < map.size(); ++i)
      pixels[i] = static_cast<std::uint8_t>(std::lround(255.0 * (map[i] - lo) / range));
  }

  // plus-shaped inversion per mark; overlapping crosses invert once
  std::vector<bool> inverted(pixels.size(), false);
  for (int cell : marked_cells) {
    if (cell < 0 || cell >= map.size())
      throw std::invalid_argument("export_heatmap: mark out of range");
    const auto [r, c] = cell_coords(cell, w);
    const int offsets[5][2] = {{0, 0}, {-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    for (const auto& off : offsets) {
      const int rr = r + off[0], cc = c + off[1];
      if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
      inverted[static_cast<size_t>(rr) * w + cc] = true;
    }
  }
  for (size_t i = 0; i < pixels.size(); ++i)
    if (inverted[i]) pixels[i] = static_cast<std::uint8_t>(255 - pixels[i]);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("export_heatmap: cannot open " + path.string());
  out << "P5\n" << w << ' ' << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()),
            static_cast<std::streamsize>(pixels.size()));
  if (!out) throw DataError("export_heatmap: write failed for " + path.string());
}

}  // namespace dreammap
