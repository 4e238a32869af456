// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "partfit/vec3.hpp"

namespace partfit {

// Cubic binary occupancy grid over the normalized frame [-0.5, 0.5]^3.
// Cells are stored x-fastest; values are exactly 0 or 1. Resolution is a
// power of two in [8, 256].
class VoxelGrid {
public:
    static constexpr int kMinResolution = 8;
    static constexpr int kMaxResolution = 256;

    VoxelGrid() = default;
    explicit VoxelGrid(int resolution);

    static bool valid_resolution(int r);

    int resolution() const { return resolution_; }
    std::size_t cell_count() const { return cells_.size(); }

    std::size_t linear_index(int x, int y, int z) const {
        const std::size_t r = static_cast<std::size_t>(resolution_);
        return static_cast<std::size_t>(x) + r * (static_cast<std::size_t>(y) + r * static_cast<std::size_t>(z));
    }

    std::uint8_t at(int x, int y, int z) const { return cells_[linear_index(x, y, z)]; }
    void set(int x, int y, int z, std::uint8_t v) { cells_[linear_index(x, y, z)] = v ? 1 : 0; }

    const std::vector<std::uint8_t>& cells() const { return cells_; }
    std::vector<std::uint8_t>& cells() { return cells_; }

    std::size_t occupied_count() const;

    bool operator==(const VoxelGrid& o) const = default;

private:
    int resolution_ = 0;
    std::vector<std::uint8_t> cells_;
};

/// Center of voxel (x, y, z) in the normalized frame. Exact: resolution is a
/// power of two, so the division is an exponent shift.
inline Vec3f voxel_center(int resolution, int x, int y, int z) {
    const double r = static_cast<double>(resolution);
    return Vec3f{static_cast<float>((x + 0.5) / r - 0.5),
                 static_cast<float>((y + 0.5) / r - 0.5),
                 static_cast<float>((z + 0.5) / r - 0.5)};
}

/// Maps a coordinate in [-0.5, 0.5] to its cell index, floor((c+0.5)*R)
/// clamped to [0, R-1]. Computed in double; every step is exact for
/// power-of-two R, so the result is platform-independent.
inline int voxel_axis_index(int resolution, float c) {
    const double t = (static_cast<double>(c) + 0.5) * static_cast<double>(resolution);
    int i = static_cast<int>(t >= 0.0 ? t : -1.0);
    if (i < 0) i = 0;
    if (i >= resolution) i = resolution - 1;
    return i;
}

/// Occupancy of the voxel whose cell contains p.
inline std::uint8_t voxel_occupancy(const VoxelGrid& grid, const Vec3f& p) {
    const int r = grid.resolution();
    return grid.at(voxel_axis_index(r, p.x), voxel_axis_index(r, p.y), voxel_axis_index(r, p.z));
}

/// Linear indices of voxels with at least one 6-neighbor of opposite
/// occupancy, in ascending order. Out-of-grid neighbors count as having the
/// same occupancy, so the faces of an all-ones grid are not boundary.
std::vector<std::size_t> boundary_voxels(const VoxelGrid& grid);

}  // namespace partfit
