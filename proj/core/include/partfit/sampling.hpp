// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

#include "partfit/dataset.hpp"
#include "partfit/rng.hpp"
#include "partfit/voxel_grid.hpp"

namespace partfit {

/// Draws n_uniform points uniformly in [-0.5, 0.5)^3 followed by n_surface
/// points uniform within boundary voxels (6-neighbor of opposite occupancy).
/// Each sample is tagged with voxel_occupancy at its position. All arithmetic
/// is exact power-of-two math on 32-bit draws, so results are identical
/// across platforms for a given rng state.
///
/// Throws DegenerateShapeError when n_surface > 0 and the boundary set is
/// empty (all-zero or all-one grid).
std::vector<QuerySample> sample_points(const VoxelGrid& grid, std::size_t n_uniform,
                                       std::size_t n_surface, Pcg32& rng);

}  // namespace partfit
