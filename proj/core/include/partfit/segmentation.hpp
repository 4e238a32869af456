// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "partfit/dataset.hpp"
#include "partfit/model.hpp"

namespace partfit {

// Point-wise branch assignment: label(p) = argmax_i O_i(p), ties resolved to
// the lowest branch index. Every point gets a branch regardless of the
// predicted occupancy magnitude.
struct SegmentationResult {
    std::vector<int> branch;          // per point
    std::vector<int> active_branches; // branches that appear, ascending
};

SegmentationResult segment_points(const ModelParams<float>& params, const VoxelGrid& grid,
                                  std::span<const Vec3f> points);

// Occupied voxels labeled at their centers; empty voxels carry kUnlabeled.
struct LabeledGrid {
    int resolution = 0;
    std::vector<std::uint16_t> labels;  // x-fastest, kUnlabeled = empty

    std::size_t linear_index(int x, int y, int z) const {
        const auto r = static_cast<std::size_t>(resolution);
        return static_cast<std::size_t>(x) + r * (static_cast<std::size_t>(y) + r * static_cast<std::size_t>(z));
    }
    std::uint16_t at(int x, int y, int z) const { return labels[linear_index(x, y, z)]; }
};

LabeledGrid segment_voxels(const ModelParams<float>& params, const VoxelGrid& grid);

}  // namespace partfit
