// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "partfit/assignment.hpp"
#include "partfit/segmentation.hpp"
#include "partfit/skeleton.hpp"
#include "partfit/structure.hpp"
#include "partfit/trainer.hpp"

namespace partfit {

/// ASCII PLY of colored occupied-voxel centers (no faces); labels pick from a
/// fixed palette by id.
std::string labeled_points_ply(const LabeledGrid& grid);

/// Wavefront OBJ with vertices and line elements for skeleton viewers.
std::string skeleton_obj(const SkeletonGraph& graph);

std::string skeleton_json(const SkeletonGraph& graph);

std::string eval_report_json(const EvalReport& report, const std::vector<LabelInfo>& labels);

std::string clustering_json(const std::vector<ShapeGroup>& groups,
                            const ClassificationResult& classification, std::size_t min_size);

/// One JSON line per era: era, iou, revived branches with reasons, rollback.
std::string era_record_jsonl(const EraRecord& record);

/// CSV header and rows for the per-iteration loss log.
std::string loss_csv_header();
std::string loss_csv_row(std::int64_t iteration, const LossBreakdown& loss);

/// Writes via a temp file and rename so readers never see partial content.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace partfit
