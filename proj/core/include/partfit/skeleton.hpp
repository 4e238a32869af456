// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "partfit/segmentation.hpp"
#include "partfit/vec3.hpp"
#include "partfit/voxel_grid.hpp"

namespace partfit {

enum class NodeKind { part, joint, heuristic };

const char* to_string(NodeKind k);

struct SkeletonNode {
    int id = 0;
    NodeKind kind = NodeKind::part;
    Vec3d position;
    bool optimizable = true;  // joints stay fixed
};

struct SkeletonEdge {
    int a = 0;
    int b = 0;
};

struct SkeletonGraph {
    std::vector<SkeletonNode> nodes;
    std::vector<SkeletonEdge> edges;

    int degree(int node_id) const;
};

// Category-specific extra nodes, declared rather than hard-coded: a "join"
// rule adds one node connected to every part node of the listed labels; a
// "tip" rule adds, per part of a listed label, a node at the part's farthest
// voxel from its joint.
enum class HeuristicKind { join, tip };

struct HeuristicRule {
    HeuristicKind kind = HeuristicKind::join;
    std::string name;
    std::vector<std::uint16_t> labels;
};

struct HeuristicConfig {
    std::vector<HeuristicRule> rules;
};

/// Builds the initial skeleton from a labeled grid: one part node per
/// 6-connected component of each label at the component's voxel centroid, a
/// joint node at the contact centroid of every 6-adjacent component pair
/// (connected to both part nodes), then heuristic nodes per config. Throws on
/// a grid with no labeled voxels.
SkeletonGraph build_skeleton(const LabeledGrid& grid, const HeuristicConfig& config = {});

/// Symmetric chamfer distance: mean_x min_y |x-y|^2 + mean_y min_x |x-y|^2.
double chamfer_distance(std::span<const Vec3d> x, std::span<const Vec3d> y);

struct SkeletonOptimizeConfig {
    int samples_per_edge = 16;
    int interior_samples = 2048;
    int iterations = 500;
    double step = 0.01;
    std::uint64_t seed = 11;
};

/// Gradient descent on the chamfer distance between points sampled on the
/// skeleton (node positions plus a fixed interior parameterization of every
/// edge) and the given target points. Only optimizable node positions move;
/// the step is halved whenever a trial increases the objective, so accepted
/// iterates never increase it. Exact nearest-neighbor ties average their
/// gradient contributions, so symmetric stationary points stay fixed.
SkeletonGraph optimize_skeleton_points(const SkeletonGraph& graph,
                                       std::span<const Vec3d> targets,
                                       const SkeletonOptimizeConfig& config = {});

/// Convenience wrapper: targets are config.interior_samples points drawn
/// uniformly inside the occupied voxels of gt (fixed for the whole run).
SkeletonGraph optimize_skeleton(const SkeletonGraph& graph, const VoxelGrid& gt,
                                const SkeletonOptimizeConfig& config = {});

}  // namespace partfit
