// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "partfit/assignment.hpp"
#include "partfit/rng.hpp"
#include "partfit/segmentation.hpp"

using namespace partfit;

namespace {

// Brute-force oracle: applies a mapping pointwise and scores it with the
// plain set-arithmetic definition, enumerating every mapping directly.
double oracle_score(const std::vector<ShapeLabels>& shapes,
                    const std::vector<std::uint16_t>& branch_to_label, int n_labels) {
    double acc = 0;
    for (const auto& sh : shapes) {
        std::vector<std::uint16_t> mapped(sh.pred_branch.size());
        for (std::size_t i = 0; i < mapped.size(); ++i) {
            mapped[i] = branch_to_label[static_cast<std::size_t>(sh.pred_branch[i])];
        }
        acc += per_part_iou_shape(mapped, sh.gt_label, n_labels);
    }
    return acc / static_cast<double>(shapes.size());
}

struct OracleBest {
    double iou = -1;
    std::vector<std::uint16_t> mapping;
};

OracleBest oracle_best(const std::vector<ShapeLabels>& shapes, int n_branches, int n_labels) {
    OracleBest best;
    std::vector<std::uint16_t> mapping(static_cast<std::size_t>(n_branches), 0);
    std::size_t total = 1;
    for (int b = 0; b < n_branches; ++b) total *= static_cast<std::size_t>(n_labels);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t c = code;
        for (int b = n_branches - 1; b >= 0; --b) {
            mapping[static_cast<std::size_t>(b)] =
                static_cast<std::uint16_t>(c % static_cast<std::size_t>(n_labels));
            c /= static_cast<std::size_t>(n_labels);
        }
        const double iou = oracle_score(shapes, mapping, n_labels);
        if (iou > best.iou) {
            best.iou = iou;
            best.mapping = mapping;
        }
    }
    return best;
}

std::vector<ShapeLabels> random_instance(Pcg32& rng, int n_shapes, int n_branches, int n_labels,
                                         int points) {
    std::vector<ShapeLabels> shapes(static_cast<std::size_t>(n_shapes));
    for (auto& sh : shapes) {
        for (int p = 0; p < points; ++p) {
            sh.pred_branch.push_back(static_cast<int>(rng.bounded(static_cast<std::uint32_t>(n_branches))));
            sh.gt_label.push_back(static_cast<std::uint16_t>(rng.bounded(static_cast<std::uint32_t>(n_labels))));
        }
    }
    return shapes;
}

ModelParams<float> two_branch_half_space_model() {
    // branch 0 dominates x < 0, branch 1 dominates x > 0
    ModelConfig cfg;
    cfg.branches = 2;
    cfg.resolution = 16;
    cfg.encoder_channels = {2, 2, 2};
    cfg.template_hidden = 1;
    cfg.template_layers = 2;
    cfg.use_deformation = false;
    Pcg32 rng(3);
    auto params = init_model<float>(cfg, rng);
    for (std::size_t k = 0; k < params.layout.head_w.count; ++k) {
        params.values[params.layout.head_w.offset + k] = 0.0f;
    }
    auto head_b = params.tensor(params.layout.head_b);
    const int sw = cfg.head_slice_width();
    head_b[12 + cfg.latent_dim] = 60.0f / cfg.existence_logit_scale;
    head_b[sw + 12 + cfg.latent_dim] = 60.0f / cfg.existence_logit_scale;
    for (int i = 0; i < 2; ++i) {
        auto w0 = params.tensor(params.layout.template_w[i][0]);
        w0[0] = i == 0 ? -40.0f : 40.0f;
        w0[1] = 0.0f;
        w0[2] = 0.0f;
        params.tensor(params.layout.template_w[i][1])[0] = 30.0f;
        params.tensor(params.layout.template_b[i][1])[0] = -5.0f;
    }
    return params;
}

}  // namespace

TEST_CASE("per-part IOU set arithmetic") {
    SUBCASE("identical labels score 1") {
        const std::vector<std::uint16_t> a = {0, 1, 1, 0};
        CHECK(per_part_iou_shape(a, a, 2) == 1.0);
    }
    SUBCASE("disjoint labels with non-empty unions score 0") {
        const std::vector<std::uint16_t> pred = {0, 0, 1, 1};
        const std::vector<std::uint16_t> gt = {1, 1, 0, 0};
        CHECK(per_part_iou_shape(pred, gt, 2) == 0.0);
    }
    SUBCASE("gt (A,A,B,B) vs pred (A,B,B,B)") {
        // IOU_A = |{0}| / |{0,1}| = 1/2, IOU_B = |{2,3}| / |{1,2,3}| = 2/3
        const std::vector<std::uint16_t> gt = {0, 0, 1, 1};
        const std::vector<std::uint16_t> pred = {0, 1, 1, 1};
        CHECK(per_part_iou_shape(pred, gt, 2) == doctest::Approx(7.0 / 12.0).epsilon(1e-12));
    }
    SUBCASE("labels absent from both sides count as 1") {
        const std::vector<std::uint16_t> a = {0, 0};
        CHECK(per_part_iou_shape(a, a, 3) == 1.0);
    }
    SUBCASE("relabeling pred and gt jointly leaves the score unchanged") {
        const std::vector<std::uint16_t> pred = {0, 1, 2, 1};
        const std::vector<std::uint16_t> gt = {0, 2, 2, 1};
        // swap labels 0 <-> 2 on both sides
        const std::vector<std::uint16_t> pred2 = {2, 1, 0, 1};
        const std::vector<std::uint16_t> gt2 = {2, 0, 0, 1};
        CHECK(per_part_iou_shape(pred, gt, 3) ==
              doctest::Approx(per_part_iou_shape(pred2, gt2, 3)).epsilon(1e-15));
    }
    SUBCASE("dataset-level value averages per-shape means") {
        const std::vector<std::vector<std::uint16_t>> pred = {{0, 0}, {1, 1}};
        const std::vector<std::vector<std::uint16_t>> gt = {{0, 0}, {0, 0}};
        // shape 0: labels 0 and 1 both perfect or empty -> 1; shape 1: IOU_0 = 0, IOU_1 = 0
        CHECK(per_part_iou(pred, gt, 2) == doctest::Approx(0.5).epsilon(1e-12));
    }
}

TEST_CASE("segment_points argmax with lowest-index tie rule") {
    const auto params = two_branch_half_space_model();
    VoxelGrid grid(16);
    grid.set(8, 8, 8, 1);

    SUBCASE("branch 1 dominates the positive half space") {
        std::vector<Vec3f> points = {{0.4f, 0.1f, 0.0f}, {-0.4f, 0.1f, 0.0f}, {0.3f, -0.2f, 0.2f}};
        const auto seg = segment_points(params, grid, points);
        CHECK(seg.branch == std::vector<int>{1, 0, 1});
        CHECK(seg.active_branches == std::vector<int>{0, 1});
    }
    SUBCASE("N=1 labels everything with branch 0") {
        ModelConfig cfg;
        cfg.branches = 1;
        cfg.resolution = 16;
        cfg.encoder_channels = {2, 2, 2};
        Pcg32 rng(4);
        const auto p1 = init_model<float>(cfg, rng);
        std::vector<Vec3f> points = {{0.1f, 0.2f, 0.3f}, {-0.3f, 0.0f, 0.1f}};
        const auto seg = segment_points(p1, grid, points);
        CHECK(seg.branch == std::vector<int>{0, 0});
    }
    SUBCASE("exact ties pick the lowest branch index") {
        // identical branches produce bitwise-equal occupancies
        auto params2 = two_branch_half_space_model();
        const auto& layout = params2.layout;
        for (std::size_t l = 0; l < layout.template_dims.size(); ++l) {
            const auto src_w = params2.tensor(layout.template_w[0][l]);
            auto dst_w = params2.tensor(layout.template_w[1][l]);
            std::copy(src_w.begin(), src_w.end(), dst_w.begin());
            const auto src_b = params2.tensor(layout.template_b[0][l]);
            auto dst_b = params2.tensor(layout.template_b[1][l]);
            std::copy(src_b.begin(), src_b.end(), dst_b.begin());
        }
        std::vector<Vec3f> points = {{-0.2f, 0.0f, 0.0f}};
        const auto seg = segment_points(params2, grid, points);
        CHECK(seg.branch[0] == 0);
    }
}

TEST_CASE("segment_voxels labels occupied voxel centers like segment_points") {
    const auto params = two_branch_half_space_model();
    VoxelGrid grid(16);
    SUBCASE("empty grid stays unlabeled") {
        const auto seg = segment_voxels(params, grid);
        for (auto l : seg.labels) CHECK(l == kUnlabeled);
    }
    SUBCASE("single occupied voxel gets exactly one label") {
        grid.set(3, 8, 8, 1);
        const auto seg = segment_voxels(params, grid);
        std::size_t labeled = 0;
        for (auto l : seg.labels) labeled += l != kUnlabeled ? 1 : 0;
        CHECK(labeled == 1);
        CHECK(seg.at(3, 8, 8) == 0);  // x < 0 half space
    }
    SUBCASE("labels agree with segment_points at voxel centers") {
        Pcg32 rng(9);
        for (auto& c : grid.cells()) c = rng.uniform() < 0.2 ? 1 : 0;
        const auto seg = segment_voxels(params, grid);
        std::vector<Vec3f> centers;
        std::vector<std::size_t> cells;
        for (int z = 0; z < 16; ++z) {
            for (int y = 0; y < 16; ++y) {
                for (int x = 0; x < 16; ++x) {
                    if (grid.at(x, y, z)) {
                        centers.push_back(voxel_center(16, x, y, z));
                        cells.push_back(grid.linear_index(x, y, z));
                    }
                }
            }
        }
        const auto pts = segment_points(params, grid, centers);
        for (std::size_t i = 0; i < cells.size(); ++i) {
            CHECK(seg.labels[cells[i]] == static_cast<std::uint16_t>(pts.branch[i]));
        }
    }
}

TEST_CASE("argmax labels are invariant to positive scaling of occupancies") {
    // scaling all O_i at a point by the same positive constant cannot change
    // the argmax; verified on the raw forward result
    const auto params = two_branch_half_space_model();
    VoxelGrid grid(16);
    grid.set(8, 8, 8, 1);
    std::vector<Vec3f> points;
    Pcg32 rng(12);
    for (int i = 0; i < 32; ++i) {
        points.push_back({static_cast<float>(rng.uniform() - 0.5),
                          static_cast<float>(rng.uniform() - 0.5),
                          static_cast<float>(rng.uniform() - 0.5)});
    }
    const auto fwd = forward(params, grid, points);
    for (std::size_t p = 0; p < points.size(); ++p) {
        int best = 0;
        float best_v = fwd.occupancy_of(0, p) * 3.5f;
        for (int i = 1; i < 2; ++i) {
            const float v = fwd.occupancy_of(i, p) * 3.5f;
            if (v > best_v) {
                best_v = v;
                best = i;
            }
        }
        CHECK(best == fwd.argmax_branch[p]);
    }
}

TEST_CASE("best_label_assignment basics") {
    SUBCASE("single branch picks the better of two labels") {
        std::vector<ShapeLabels> shapes(1);
        shapes[0].pred_branch = {0, 0, 0, 0};
        shapes[0].gt_label = {1, 1, 1, 0};
        const auto a = best_label_assignment(shapes, 1, 2, AssignMode::exhaustive);
        const auto oracle = oracle_best(shapes, 1, 2);
        CHECK(a.branch_to_label[0] == oracle.mapping[0]);
        CHECK(a.achieved_iou == doctest::Approx(oracle.iou).epsilon(1e-12));
    }
    SUBCASE("bijective prediction recovers the bijection with IOU 1") {
        std::vector<ShapeLabels> shapes(1);
        shapes[0].pred_branch = {2, 0, 1, 2, 0};
        shapes[0].gt_label = {0, 1, 2, 0, 1};
        const auto a = best_label_assignment(shapes, 3, 3, AssignMode::exhaustive);
        CHECK(a.achieved_iou == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(a.branch_to_label[2] == 0);
        CHECK(a.branch_to_label[0] == 1);
        CHECK(a.branch_to_label[1] == 2);
    }
    SUBCASE("unused branches map to the most frequent gt label") {
        std::vector<ShapeLabels> shapes(1);
        shapes[0].pred_branch = {0, 0, 0};
        shapes[0].gt_label = {1, 1, 0};
        const auto a = best_label_assignment(shapes, 4, 2, AssignMode::exhaustive);
        CHECK(a.active_branches == std::vector<int>{0});
        CHECK(a.branch_to_label[1] == 1);
        CHECK(a.branch_to_label[2] == 1);
        CHECK(a.branch_to_label[3] == 1);
    }
    SUBCASE("budget overflow is refused with a hint") {
        std::vector<ShapeLabels> shapes(1);
        for (int b = 0; b < 12; ++b) {
            shapes[0].pred_branch.push_back(b);
            shapes[0].gt_label.push_back(0);
        }
        CHECK_THROWS_WITH_AS(
            best_label_assignment(shapes, 12, 3, AssignMode::exhaustive, 1000.0),
            doctest::Contains("greedy"), Error);
    }
}

TEST_CASE("evaluation pipeline scores a prediction-consistent dataset at 1.0") {
    // craft ground truth from the model's own argmax labels; the evaluation
    // protocol must then find a perfect assignment
    const auto params = two_branch_half_space_model();
    Dataset ds;
    ds.category = "oracle";
    ds.labels = {{0, "left"}, {1, "right"}};
    Pcg32 rng(31);
    for (int s = 0; s < 5; ++s) {
        ShapeRecord rec;
        rec.id = cat("s", s);
        rec.grid = VoxelGrid(16);
        for (auto& c : rec.grid.cells()) c = rng.uniform() < 0.3 ? 1 : 0;
        std::vector<Vec3f> points;
        for (int p = 0; p < 64; ++p) {
            QuerySample q;
            q.position = {static_cast<float>(rng.uniform() - 0.5),
                          static_cast<float>(rng.uniform() - 0.5),
                          static_cast<float>(rng.uniform() - 0.5)};
            q.occupancy = 1;  // treat every probe as occupied ground truth
            rec.samples.push_back(q);
            points.push_back(q.position);
        }
        const auto seg = segment_points(params, rec.grid, points);
        for (int p = 0; p < 64; ++p) {
            rec.samples[static_cast<std::size_t>(p)].label =
                static_cast<std::uint16_t>(seg.branch[static_cast<std::size_t>(p)]);
        }
        rec.split = Split::test;
        ds.records.push_back(std::move(rec));
    }
    const auto report = evaluate_segmentation(params, ds, Split::test, AssignMode::exhaustive);
    CHECK(report.mean_iou == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(report.assignment.branch_to_label[0] == 0);
    CHECK(report.assignment.branch_to_label[1] == 1);

    SUBCASE("unlabeled datasets are refused") {
        Dataset unlabeled = ds;
        unlabeled.labels.clear();
        CHECK_THROWS(evaluate_segmentation(params, unlabeled, Split::test, AssignMode::exhaustive));
    }
}

TEST_CASE("exhaustive assignment equals the brute-force oracle on random instances") {
    Pcg32 rng(2026);
    for (int trial = 0; trial < 50; ++trial) {
        const int n_branches = 1 + static_cast<int>(rng.bounded(4));  // <= 4
        const int n_labels = 2 + static_cast<int>(rng.bounded(2));    // <= 3
        const int n_shapes = 1 + static_cast<int>(rng.bounded(3));
        const auto shapes = random_instance(rng, n_shapes, n_branches, n_labels, 200);

        const auto exhaustive =
            best_label_assignment(shapes, n_branches, n_labels, AssignMode::exhaustive);
        const auto greedy = best_label_assignment(shapes, n_branches, n_labels, AssignMode::greedy);
        const auto oracle = oracle_best(shapes, n_branches, n_labels);

        CHECK(exhaustive.achieved_iou == doctest::Approx(oracle.iou).epsilon(1e-12));
        CHECK(oracle_score(shapes, exhaustive.branch_to_label, n_labels) ==
              doctest::Approx(oracle.iou).epsilon(1e-12));
        CHECK(exhaustive.achieved_iou >= greedy.achieved_iou - 1e-12);
        // greedy result is self-consistent
        CHECK(oracle_score(shapes, greedy.branch_to_label, n_labels) ==
              doctest::Approx(greedy.achieved_iou).epsilon(1e-12));
    }
}
