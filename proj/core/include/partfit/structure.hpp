// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "partfit/dataset.hpp"
#include "partfit/model.hpp"

namespace partfit {

// Binary part-presence vector: entry i is 1 iff P_i >= threshold.
using ExistenceVector = std::vector<std::uint8_t>;

ExistenceVector existence_vector(const ModelParams<float>& params, const VoxelGrid& grid,
                                 double threshold = 0.5);

std::string existence_key(const ExistenceVector& v);  // e.g. "10110010"

struct ShapeGroup {
    ExistenceVector vector;
    std::vector<std::string> shape_ids;
    std::vector<std::string> categories;  // aligned with shape_ids
};

/// Partitions shapes by exact existence-vector equality; groups ordered by
/// descending size, ties by ascending vector key.
std::vector<ShapeGroup> cluster_shapes(const Dataset& dataset, const ModelParams<float>& params,
                                       double threshold = 0.5);

/// Multi-dataset variant; each dataset contributes its category name.
std::vector<ShapeGroup> cluster_shapes(std::span<const Dataset* const> datasets,
                                       const ModelParams<float>& params, double threshold = 0.5);

struct ClassificationResult {
    // Group -> category; groups under min_size get no assignment ("N/A").
    std::vector<std::optional<std::string>> group_category;
    // Per category: precision (nullopt when the category is never predicted)
    // and recall over the evaluated shapes.
    std::map<std::string, std::optional<double>> precision;
    std::map<std::string, double> recall;
};

/// Labels groups of size >= min_size with the majority category of their
/// members and scores the induced classification.
ClassificationResult classify_groups(const std::vector<ShapeGroup>& groups,
                                     std::size_t min_size = 10);

}  // namespace partfit
