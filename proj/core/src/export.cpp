// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/export.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "partfit/error.hpp"

namespace partfit {

namespace {

using json = nlohmann::ordered_json;

struct Rgb {
    int r, g, b;
};

// Fixed 16-entry palette; label ids wrap around.
constexpr Rgb kPalette[16] = {
    {230, 25, 75},  {60, 180, 75},   {255, 225, 25}, {0, 130, 200},
    {245, 130, 48}, {145, 30, 180},  {70, 240, 240}, {240, 50, 230},
    {210, 245, 60}, {250, 190, 212}, {0, 128, 128},  {220, 190, 255},
    {170, 110, 40}, {128, 0, 0},     {170, 255, 195}, {128, 128, 0},
};

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

}  // namespace

std::string labeled_points_ply(const LabeledGrid& grid) {
    std::vector<std::size_t> cells;
    for (std::size_t v = 0; v < grid.labels.size(); ++v) {
        if (grid.labels[v] != kUnlabeled) cells.push_back(v);
    }
    std::string out;
    out += "ply\nformat ascii 1.0\n";
    out += "element vertex " + std::to_string(cells.size()) + "\n";
    out += "property float x\nproperty float y\nproperty float z\n";
    out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out += "element face 0\nproperty list uchar int vertex_indices\nend_header\n";
    const int r = grid.resolution;
    const auto rr = static_cast<std::size_t>(r);
    char line[128];
    for (std::size_t v : cells) {
        const int x = static_cast<int>(v % rr);
        const int y = static_cast<int>((v / rr) % rr);
        const int z = static_cast<int>(v / (rr * rr));
        const Vec3f c = voxel_center(r, x, y, z);
        const Rgb rgb = kPalette[grid.labels[v] % 16];
        std::snprintf(line, sizeof(line), "%.6f %.6f %.6f %d %d %d\n", c.x, c.y, c.z, rgb.r, rgb.g,
                      rgb.b);
        out += line;
    }
    return out;
}

std::string skeleton_obj(const SkeletonGraph& graph) {
    std::string out = "# skeleton line segments\n";
    char line[128];
    for (const auto& n : graph.nodes) {
        std::snprintf(line, sizeof(line), "v %.6f %.6f %.6f\n", n.position.x, n.position.y,
                      n.position.z);
        out += line;
    }
    for (const auto& e : graph.edges) {
        std::snprintf(line, sizeof(line), "l %d %d\n", e.a + 1, e.b + 1);  // OBJ is 1-based
        out += line;
    }
    return out;
}

std::string skeleton_json(const SkeletonGraph& graph) {
    json j;
    j["nodes"] = json::array();
    for (const auto& n : graph.nodes) {
        j["nodes"].push_back({{"id", n.id},
                              {"kind", to_string(n.kind)},
                              {"position", {n.position.x, n.position.y, n.position.z}},
                              {"optimizable", n.optimizable}});
    }
    j["edges"] = json::array();
    for (const auto& e : graph.edges) j["edges"].push_back({e.a, e.b});
    return j.dump(2) + "\n";
}

std::string eval_report_json(const EvalReport& report, const std::vector<LabelInfo>& labels) {
    auto label_name = [&labels](std::uint16_t id) -> std::string {
        for (const auto& l : labels) {
            if (l.id == id) return l.name;
        }
        return std::to_string(id);
    };
    json j;
    j["category"] = report.category;
    j["split"] = report.split;
    j["shape_count"] = report.shape_count;
    j["mean_iou"] = report.mean_iou;
    j["per_label_iou"] = json::object();
    for (std::size_t l = 0; l < report.per_label_iou.size(); ++l) {
        j["per_label_iou"][label_name(static_cast<std::uint16_t>(l))] = report.per_label_iou[l];
    }
    j["assignment"] = json::object();
    for (std::size_t b = 0; b < report.assignment.branch_to_label.size(); ++b) {
        j["assignment"][std::to_string(b)] = label_name(report.assignment.branch_to_label[b]);
    }
    j["active_branches"] = report.assignment.active_branches;
    j["search_mode"] = to_string(report.assignment.mode_used);
    j["branch_usage"] = report.branch_usage;
    return j.dump(2) + "\n";
}

std::string clustering_json(const std::vector<ShapeGroup>& groups,
                            const ClassificationResult& classification, std::size_t min_size) {
    json j;
    j["min_group_size"] = min_size;
    j["groups"] = json::array();
    for (std::size_t g = 0; g < groups.size(); ++g) {
        json jg;
        jg["vector"] = existence_key(groups[g].vector);
        jg["size"] = groups[g].shape_ids.size();
        jg["members"] = groups[g].shape_ids;
        if (classification.group_category[g].has_value()) {
            jg["category"] = *classification.group_category[g];
        } else {
            jg["category"] = nullptr;
        }
        j["groups"].push_back(std::move(jg));
    }
    j["precision"] = json::object();
    for (const auto& [c, p] : classification.precision) {
        if (p.has_value()) {
            j["precision"][c] = *p;
        } else {
            j["precision"][c] = nullptr;
        }
    }
    j["recall"] = json::object();
    for (const auto& [c, v] : classification.recall) j["recall"][c] = v;
    return j.dump(2) + "\n";
}

std::string era_record_jsonl(const EraRecord& record) {
    json j;
    j["era"] = record.era;
    j["iou"] = record.iou;
    j["iou_measured"] = record.iou_measured;
    j["rollback"] = record.rollback;
    j["revived"] = json::array();
    for (const auto& ev : record.revived) {
        j["revived"].push_back({{"branch", ev.branch}, {"reason", ev.reason}});
    }
    j["mean_loss"] = record.mean_loss;
    return j.dump() + "\n";
}

std::string loss_csv_header() { return "iter,L_total,L_recon_sum,L_recon_max,L_deform,L_sparse\n"; }

std::string loss_csv_row(std::int64_t iteration, const LossBreakdown& loss) {
    std::string out = std::to_string(iteration);
    out += ',' + format_double(loss.total);
    out += ',' + format_double(loss.recon_sum);
    out += ',' + format_double(loss.recon_max);
    out += ',' + format_double(loss.deform);
    out += ',' + format_double(loss.sparse);
    out += '\n';
    return out;
}

void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw Error(cat("cannot write ", tmp.string()));
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw Error(cat("write failed: ", tmp.string()));
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace partfit
