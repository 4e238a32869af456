// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "partfit/vec3.hpp"
#include "partfit/voxel_grid.hpp"

namespace partfit {

inline constexpr std::uint16_t kUnlabeled = 0xFFFF;

// A pre-sampled query point in the grid's normalized frame, tagged with the
// occupancy of its voxel and an optional ground-truth semantic label.
struct QuerySample {
    Vec3f position;
    std::uint8_t occupancy = 0;
    std::uint16_t label = kUnlabeled;

    bool operator==(const QuerySample&) const = default;
};

struct LabelInfo {
    std::uint16_t id = 0;
    std::string name;

    bool operator==(const LabelInfo&) const = default;
};

enum class Split { train, test, all };

Split split_from_string(const std::string& s);
const char* to_string(Split s);

struct ShapeRecord {
    std::string id;
    VoxelGrid grid;
    std::vector<QuerySample> samples;
    Split split = Split::train;  // train or test, never all

    bool operator==(const ShapeRecord&) const = default;
};

// Immutable after load; safe to share read-only across workers.
struct Dataset {
    std::string category;
    std::vector<ShapeRecord> records;
    std::vector<LabelInfo> labels;  // empty when the collection is unlabeled

    std::vector<std::size_t> split_indices(Split split) const;
    const LabelInfo* find_label(std::uint16_t id) const;
};

/// Deterministic split rule for containers (the format carries no split
/// field): records with index % 5 == 4 are the test split.
inline Split record_split(std::size_t record_index) {
    return record_index % 5 == 4 ? Split::test : Split::train;
}

/// Loads a PFDS container, keeping records of the requested split in file
/// order. Grids are decoded bit-exactly. Category is the file stem.
Dataset load_dataset(const std::filesystem::path& path, Split split);

/// Writes the canonical PFDS container; save followed by load round-trips
/// byte-identically.
void save_dataset(const std::filesystem::path& path, const Dataset& dataset);

std::vector<std::uint8_t> pack_occupancy(const VoxelGrid& grid);
void unpack_occupancy(const std::vector<std::uint8_t>& bytes, VoxelGrid& grid);

}  // namespace partfit
