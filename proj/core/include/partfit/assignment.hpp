// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "partfit/dataset.hpp"
#include "partfit/model.hpp"

namespace partfit {

enum class AssignMode { exhaustive, greedy };

AssignMode assign_mode_from_string(const std::string& s);
const char* to_string(AssignMode m);

// Aligned per-point predictions and ground truth for one shape. Callers pass
// occupied ground-truth points only; every point given here participates.
struct ShapeLabels {
    std::vector<int> pred_branch;
    std::vector<std::uint16_t> gt_label;
};

// Many-to-one branch -> semantic label mapping, total over all branches.
// Branches that never appear as an argmax are excluded from the search and
// mapped to the globally most frequent ground-truth label.
struct LabelAssignment {
    std::vector<std::uint16_t> branch_to_label;  // size = n_branches
    std::vector<int> active_branches;            // searched branches, ascending
    double achieved_iou = 0.0;
    AssignMode mode_used = AssignMode::exhaustive;
};

/// Mean per-part IOU for one shape: for each label, |pred ∧ gt| / |pred ∨ gt|
/// (1 when the union is empty), averaged over the n_labels labels.
double per_part_iou_shape(std::span<const std::uint16_t> pred, std::span<const std::uint16_t> gt,
                          int n_labels);

/// Per-shape means averaged over shapes.
double per_part_iou(std::span<const std::vector<std::uint16_t>> pred,
                    std::span<const std::vector<std::uint16_t>> gt, int n_labels);

/// Searches the branch -> label mapping maximizing the mean per-part IOU.
/// Exhaustive mode enumerates all n_labels^B mappings over the B active
/// branches (ties resolved to the lexicographically smallest mapping) and
/// throws when that exceeds `budget`; greedy mode starts from each branch's
/// majority-overlap label and hill-climbs single-branch reassignments.
LabelAssignment best_label_assignment(std::span<const ShapeLabels> shapes, int n_branches,
                                      int n_labels, AssignMode mode,
                                      double budget = 1e8);

struct EvalReport {
    std::string category;
    std::string split;
    double mean_iou = 0.0;
    std::vector<double> per_label_iou;        // indexed by label id
    LabelAssignment assignment;
    std::vector<std::size_t> branch_usage;    // argmax point counts per branch
    std::size_t shape_count = 0;
    int n_labels = 0;
};

/// Runs the full evaluation protocol on a labeled dataset split: argmax
/// segmentation over the occupied sample pools, assignment search, per-part
/// IOU. Throws when the split has no labeled occupied samples.
EvalReport evaluate_segmentation(const ModelParams<float>& params, const Dataset& dataset,
                                 Split split, AssignMode mode, double budget = 1e8);

}  // namespace partfit
