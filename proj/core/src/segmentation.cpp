// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/segmentation.hpp"

#include <algorithm>

namespace partfit {

SegmentationResult segment_points(const ModelParams<float>& params, const VoxelGrid& grid,
                                  std::span<const Vec3f> points) {
    const auto fwd = forward(params, grid, points);
    SegmentationResult result;
    result.branch = fwd.argmax_branch;
    std::vector<bool> seen(static_cast<std::size_t>(params.config.branches), false);
    for (int b : result.branch) seen[static_cast<std::size_t>(b)] = true;
    for (int i = 0; i < params.config.branches; ++i) {
        if (seen[static_cast<std::size_t>(i)]) result.active_branches.push_back(i);
    }
    return result;
}

LabeledGrid segment_voxels(const ModelParams<float>& params, const VoxelGrid& grid) {
    const int r = grid.resolution();
    LabeledGrid out;
    out.resolution = r;
    out.labels.assign(grid.cell_count(), kUnlabeled);

    std::vector<Vec3f> centers;
    std::vector<std::size_t> cells;
    for (int z = 0; z < r; ++z) {
        for (int y = 0; y < r; ++y) {
            for (int x = 0; x < r; ++x) {
                if (grid.at(x, y, z)) {
                    centers.push_back(voxel_center(r, x, y, z));
                    cells.push_back(grid.linear_index(x, y, z));
                }
            }
        }
    }
    if (centers.empty()) return out;
    const auto seg = segment_points(params, grid, centers);
    for (std::size_t i = 0; i < cells.size(); ++i) {
        out.labels[cells[i]] = static_cast<std::uint16_t>(seg.branch[i]);
    }
    return out;
}

}  // namespace partfit
