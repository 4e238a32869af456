// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/voxel_grid.hpp"

#include <algorithm>

#include "partfit/error.hpp"

namespace partfit {

bool VoxelGrid::valid_resolution(int r) {
    return r >= kMinResolution && r <= kMaxResolution && (r & (r - 1)) == 0;
}

VoxelGrid::VoxelGrid(int resolution) : resolution_(resolution) {
    if (!valid_resolution(resolution)) {
        throw ConfigError(cat("voxel grid resolution must be a power of two in [",
                              kMinResolution, ", ", kMaxResolution, "], got ", resolution));
    }
    cells_.assign(static_cast<std::size_t>(resolution) * resolution * resolution, 0);
}

std::size_t VoxelGrid::occupied_count() const {
    return static_cast<std::size_t>(std::count(cells_.begin(), cells_.end(), std::uint8_t{1}));
}

std::vector<std::size_t> boundary_voxels(const VoxelGrid& grid) {
    std::vector<std::size_t> out;
    const int r = grid.resolution();
    for (int z = 0; z < r; ++z) {
        for (int y = 0; y < r; ++y) {
            for (int x = 0; x < r; ++x) {
                const std::uint8_t v = grid.at(x, y, z);
                const bool boundary =
                    (x > 0 && grid.at(x - 1, y, z) != v) || (x + 1 < r && grid.at(x + 1, y, z) != v) ||
                    (y > 0 && grid.at(x, y - 1, z) != v) || (y + 1 < r && grid.at(x, y + 1, z) != v) ||
                    (z > 0 && grid.at(x, y, z - 1) != v) || (z + 1 < r && grid.at(x, y, z + 1) != v);
                if (boundary) out.push_back(grid.linear_index(x, y, z));
            }
        }
    }
    return out;
}

}  // namespace partfit
