// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/assignment.hpp"

#include <algorithm>
#include <cmath>

#include "partfit/error.hpp"
#include "partfit/segmentation.hpp"

namespace partfit {

AssignMode assign_mode_from_string(const std::string& s) {
    if (s == "exhaustive") return AssignMode::exhaustive;
    if (s == "greedy") return AssignMode::greedy;
    throw ConfigError(cat("unknown assignment mode '", s, "' (exhaustive|greedy)"));
}

const char* to_string(AssignMode m) {
    return m == AssignMode::exhaustive ? "exhaustive" : "greedy";
}

double per_part_iou_shape(std::span<const std::uint16_t> pred, std::span<const std::uint16_t> gt,
                          int n_labels) {
    if (pred.size() != gt.size()) throw Error("per_part_iou: length mismatch");
    double acc = 0;
    for (int l = 0; l < n_labels; ++l) {
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const bool p = pred[i] == static_cast<std::uint16_t>(l);
            const bool g = gt[i] == static_cast<std::uint16_t>(l);
            inter += (p && g) ? 1 : 0;
            uni += (p || g) ? 1 : 0;
        }
        acc += uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    }
    return acc / static_cast<double>(n_labels);
}

double per_part_iou(std::span<const std::vector<std::uint16_t>> pred,
                    std::span<const std::vector<std::uint16_t>> gt, int n_labels) {
    if (pred.size() != gt.size() || pred.empty()) throw Error("per_part_iou: bad shape lists");
    double acc = 0;
    for (std::size_t s = 0; s < pred.size(); ++s) {
        acc += per_part_iou_shape(pred[s], gt[s], n_labels);
    }
    return acc / static_cast<double>(pred.size());
}

namespace {

// Per-shape sufficient statistics for evaluating a mapping in O(B + L).
struct ShapeCounts {
    std::vector<std::size_t> branch_label;  // [branch * n_labels + label]
    std::vector<std::size_t> branch_total;  // [branch]
    std::vector<std::size_t> gt_total;      // [label]
};

double mapping_iou(std::span<const ShapeCounts> counts, std::span<const std::uint16_t> mapping,
                   int n_labels) {
    double acc = 0;
    std::vector<std::size_t> inter(static_cast<std::size_t>(n_labels));
    std::vector<std::size_t> pred(static_cast<std::size_t>(n_labels));
    for (const auto& sc : counts) {
        std::fill(inter.begin(), inter.end(), 0);
        std::fill(pred.begin(), pred.end(), 0);
        for (std::size_t b = 0; b < mapping.size(); ++b) {
            const std::uint16_t l = mapping[b];
            inter[l] += sc.branch_label[b * static_cast<std::size_t>(n_labels) + l];
            pred[l] += sc.branch_total[b];
        }
        double shape_acc = 0;
        for (int l = 0; l < n_labels; ++l) {
            const std::size_t uni = sc.gt_total[static_cast<std::size_t>(l)] +
                                    pred[static_cast<std::size_t>(l)] -
                                    inter[static_cast<std::size_t>(l)];
            shape_acc += uni == 0 ? 1.0 : static_cast<double>(inter[static_cast<std::size_t>(l)]) /
                                              static_cast<double>(uni);
        }
        acc += shape_acc / static_cast<double>(n_labels);
    }
    return acc / static_cast<double>(counts.size());
}

}  // namespace

LabelAssignment best_label_assignment(std::span<const ShapeLabels> shapes, int n_branches,
                                      int n_labels, AssignMode mode, double budget) {
    if (shapes.empty()) throw Error("best_label_assignment: no shapes");
    if (n_labels < 1) throw Error("best_label_assignment: n_labels must be >= 1");

    std::vector<ShapeCounts> counts(shapes.size());
    std::vector<std::size_t> global_gt(static_cast<std::size_t>(n_labels), 0);
    std::vector<std::size_t> usage(static_cast<std::size_t>(n_branches), 0);
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        const auto& sh = shapes[s];
        if (sh.pred_branch.size() != sh.gt_label.size()) {
            throw Error("best_label_assignment: pred/gt length mismatch");
        }
        auto& sc = counts[s];
        sc.branch_label.assign(static_cast<std::size_t>(n_branches) * n_labels, 0);
        sc.branch_total.assign(static_cast<std::size_t>(n_branches), 0);
        sc.gt_total.assign(static_cast<std::size_t>(n_labels), 0);
        for (std::size_t i = 0; i < sh.pred_branch.size(); ++i) {
            const int b = sh.pred_branch[i];
            const std::uint16_t l = sh.gt_label[i];
            if (b < 0 || b >= n_branches) throw Error("best_label_assignment: branch out of range");
            if (l >= n_labels) throw Error("best_label_assignment: gt label out of range");
            ++sc.branch_label[static_cast<std::size_t>(b) * n_labels + l];
            ++sc.branch_total[static_cast<std::size_t>(b)];
            ++sc.gt_total[l];
            ++global_gt[l];
            ++usage[static_cast<std::size_t>(b)];
        }
    }

    LabelAssignment result;
    for (int b = 0; b < n_branches; ++b) {
        if (usage[static_cast<std::size_t>(b)] > 0) result.active_branches.push_back(b);
    }
    const std::size_t n_active = result.active_branches.size();
    const std::uint16_t fallback_label = static_cast<std::uint16_t>(
        std::max_element(global_gt.begin(), global_gt.end()) - global_gt.begin());

    // Compact the statistics to active branches only.
    std::vector<ShapeCounts> active_counts(shapes.size());
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        auto& sc = active_counts[s];
        sc.branch_label.resize(n_active * static_cast<std::size_t>(n_labels));
        sc.branch_total.resize(n_active);
        sc.gt_total = counts[s].gt_total;
        for (std::size_t k = 0; k < n_active; ++k) {
            const auto b = static_cast<std::size_t>(result.active_branches[k]);
            sc.branch_total[k] = counts[s].branch_total[b];
            for (int l = 0; l < n_labels; ++l) {
                sc.branch_label[k * n_labels + l] =
                    counts[s].branch_label[b * static_cast<std::size_t>(n_labels) + l];
            }
        }
    }

    std::vector<std::uint16_t> mapping(n_active, 0);
    double best = -1.0;
    std::vector<std::uint16_t> best_mapping = mapping;

    if (mode == AssignMode::exhaustive) {
        const double space = std::pow(static_cast<double>(n_labels), static_cast<double>(n_active));
        if (space > budget) {
            throw Error(cat("exhaustive assignment refused: ", n_labels, "^", n_active, " = ",
                            space, " mappings exceed the budget of ", budget,
                            "; use greedy mode"));
        }
        // Odometer enumeration in lexicographic order; strict improvement
        // keeps the lexicographically smallest maximizer.
        bool done = n_active == 0;
        if (n_active == 0) {
            best = mapping_iou(active_counts, mapping, n_labels);
            best_mapping = mapping;
        }
        while (!done) {
            const double iou = mapping_iou(active_counts, mapping, n_labels);
            if (iou > best) {
                best = iou;
                best_mapping = mapping;
            }
            int pos = static_cast<int>(n_active) - 1;
            while (pos >= 0) {
                if (++mapping[static_cast<std::size_t>(pos)] <
                    static_cast<std::uint16_t>(n_labels)) {
                    break;
                }
                mapping[static_cast<std::size_t>(pos)] = 0;
                --pos;
            }
            if (pos < 0) done = true;
        }
        result.mode_used = AssignMode::exhaustive;
    } else {
        // Majority-overlap start, then single-branch hill climbing.
        for (std::size_t k = 0; k < n_active; ++k) {
            std::size_t best_count = 0;
            std::uint16_t best_label = 0;
            for (int l = 0; l < n_labels; ++l) {
                std::size_t c = 0;
                for (const auto& sc : active_counts) {
                    c += sc.branch_label[k * static_cast<std::size_t>(n_labels) + l];
                }
                if (c > best_count) {
                    best_count = c;
                    best_label = static_cast<std::uint16_t>(l);
                }
            }
            mapping[k] = best_label;
        }
        best = mapping_iou(active_counts, mapping, n_labels);
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::size_t k = 0; k < n_active; ++k) {
                std::uint16_t best_l = mapping[k];
                double local_best = best;
                for (int l = 0; l < n_labels; ++l) {
                    mapping[k] = static_cast<std::uint16_t>(l);
                    const double iou = mapping_iou(active_counts, mapping, n_labels);
                    if (iou > local_best) {
                        local_best = iou;
                        best_l = static_cast<std::uint16_t>(l);
                    }
                }
                mapping[k] = best_l;
                if (local_best > best) {
                    best = local_best;
                    improved = true;
                }
            }
        }
        best_mapping = mapping;
        result.mode_used = AssignMode::greedy;
    }

    result.branch_to_label.assign(static_cast<std::size_t>(n_branches), fallback_label);
    for (std::size_t k = 0; k < n_active; ++k) {
        result.branch_to_label[static_cast<std::size_t>(result.active_branches[k])] =
            best_mapping[k];
    }
    result.achieved_iou = best;
    return result;
}

EvalReport evaluate_segmentation(const ModelParams<float>& params, const Dataset& dataset,
                                 Split split, AssignMode mode, double budget) {
    if (dataset.labels.empty()) {
        throw Error("evaluate_segmentation: dataset carries no ground-truth labels");
    }
    const int n_labels = static_cast<int>(dataset.labels.size());
    const int n_branches = params.config.branches;

    std::vector<ShapeLabels> shapes;
    for (const auto& rec : dataset.records) {
        if (split != Split::all && rec.split != split) continue;
        std::vector<Vec3f> points;
        ShapeLabels sl;
        for (const auto& s : rec.samples) {
            if (s.occupancy != 0 && s.label != kUnlabeled) {
                points.push_back(s.position);
                sl.gt_label.push_back(s.label);
            }
        }
        if (points.empty()) continue;
        const auto seg = segment_points(params, rec.grid, points);
        sl.pred_branch = seg.branch;
        shapes.push_back(std::move(sl));
    }
    if (shapes.empty()) {
        throw Error("evaluate_segmentation: no labeled occupied samples in the requested split");
    }

    EvalReport report;
    report.category = dataset.category;
    report.split = to_string(split);
    report.n_labels = n_labels;
    report.shape_count = shapes.size();
    report.assignment =
        best_label_assignment(std::span<const ShapeLabels>(shapes), n_branches, n_labels, mode,
                              budget);
    report.mean_iou = report.assignment.achieved_iou;

    report.branch_usage.assign(static_cast<std::size_t>(n_branches), 0);
    for (const auto& sh : shapes) {
        for (int b : sh.pred_branch) ++report.branch_usage[static_cast<std::size_t>(b)];
    }

    // Per-label IOU of the chosen mapping, mean over shapes.
    report.per_label_iou.assign(static_cast<std::size_t>(n_labels), 0.0);
    for (const auto& sh : shapes) {
        for (int l = 0; l < n_labels; ++l) {
            std::size_t inter = 0, uni = 0;
            for (std::size_t i = 0; i < sh.pred_branch.size(); ++i) {
                const bool p = report.assignment.branch_to_label[static_cast<std::size_t>(
                                   sh.pred_branch[i])] == static_cast<std::uint16_t>(l);
                const bool g = sh.gt_label[i] == static_cast<std::uint16_t>(l);
                inter += (p && g) ? 1 : 0;
                uni += (p || g) ? 1 : 0;
            }
            report.per_label_iou[static_cast<std::size_t>(l)] +=
                uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
        }
    }
    for (auto& v : report.per_label_iou) v /= static_cast<double>(shapes.size());
    return report;
}

}  // namespace partfit
