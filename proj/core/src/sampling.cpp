// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/sampling.hpp"

#include "partfit/error.hpp"

namespace partfit {

namespace {

// Exact: u is a multiple of 2^-32 in [0, 1), the subtraction is exact in
// double, and only the final float cast rounds.
float unit_to_frame(double u) { return static_cast<float>(u - 0.5); }

// Position uniform inside voxel v along one axis: (v + u) / R - 0.5. The sum
// is exact (v < 2^9, u a multiple of 2^-32), R is a power of two.
float voxel_to_frame(int v, double u, int resolution) {
    return static_cast<float>((static_cast<double>(v) + u) / static_cast<double>(resolution) - 0.5);
}

}  // namespace

std::vector<QuerySample> sample_points(const VoxelGrid& grid, std::size_t n_uniform,
                                       std::size_t n_surface, Pcg32& rng) {
    std::vector<QuerySample> out;
    out.reserve(n_uniform + n_surface);

    for (std::size_t i = 0; i < n_uniform; ++i) {
        QuerySample s;
        s.position = {unit_to_frame(rng.uniform()), unit_to_frame(rng.uniform()),
                      unit_to_frame(rng.uniform())};
        s.occupancy = voxel_occupancy(grid, s.position);
        out.push_back(s);
    }

    if (n_surface > 0) {
        const auto boundary = boundary_voxels(grid);
        if (boundary.empty()) {
            throw DegenerateShapeError(
                "cannot draw near-surface samples: grid has no occupied/empty boundary");
        }
        const int r = grid.resolution();
        for (std::size_t i = 0; i < n_surface; ++i) {
            const std::size_t l = boundary[rng.bounded(static_cast<std::uint32_t>(boundary.size()))];
            const int x = static_cast<int>(l % static_cast<std::size_t>(r));
            const int y = static_cast<int>((l / static_cast<std::size_t>(r)) % static_cast<std::size_t>(r));
            const int z = static_cast<int>(l / (static_cast<std::size_t>(r) * static_cast<std::size_t>(r)));
            QuerySample s;
            s.position = {voxel_to_frame(x, rng.uniform(), r), voxel_to_frame(y, rng.uniform(), r),
                          voxel_to_frame(z, rng.uniform(), r)};
            s.occupancy = voxel_occupancy(grid, s.position);
            out.push_back(s);
        }
    }
    return out;
}

}  // namespace partfit
