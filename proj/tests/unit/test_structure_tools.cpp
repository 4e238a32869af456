// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "partfit/rng.hpp"
#include "partfit/export.hpp"
#include "partfit/skeleton.hpp"
#include "partfit/structure.hpp"

using namespace partfit;

namespace {

// Model whose existence scores come straight from the head bias.
ModelParams<float> pinned_existence_model(const std::vector<double>& scores) {
    ModelConfig cfg;
    cfg.branches = static_cast<int>(scores.size());
    cfg.resolution = 16;
    cfg.encoder_channels = {2, 2, 2};
    cfg.template_hidden = 4;
    cfg.template_layers = 2;
    cfg.deform_hidden = 4;
    Pcg32 rng(6);
    auto params = init_model<float>(cfg, rng);
    for (std::size_t k = 0; k < params.layout.head_w.count; ++k) {
        params.values[params.layout.head_w.offset + k] = 0.0f;
    }
    auto bias = params.tensor(params.layout.head_b);
    const int sw = cfg.head_slice_width();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double p = std::min(std::max(scores[i], 1e-7), 1.0 - 1e-7);
        bias[i * sw + 12 + cfg.latent_dim] =
            static_cast<float>(std::log(p / (1.0 - p))) / cfg.existence_logit_scale;
    }
    return params;
}

LabeledGrid two_part_bar() {
    // two-part bar along x at R=16: part 0 occupies x in [2,7], part 1 x in
    // [8,13], both with y,z in [7,9)
    LabeledGrid grid;
    grid.resolution = 16;
    grid.labels.assign(16 * 16 * 16, kUnlabeled);
    for (int x = 2; x <= 13; ++x) {
        for (int y = 7; y < 9; ++y) {
            for (int z = 7; z < 9; ++z) {
                grid.labels[grid.linear_index(x, y, z)] = x <= 7 ? 0 : 1;
            }
        }
    }
    return grid;
}

}  // namespace

TEST_CASE("existence vector thresholding") {
    const auto params = pinned_existence_model({0.9, 0.1});
    VoxelGrid grid(16);
    grid.set(8, 8, 8, 1);

    SUBCASE("0.5 threshold splits high and low") {
        CHECK(existence_vector(params, grid, 0.5) == ExistenceVector{1, 0});
    }
    SUBCASE("zero threshold accepts everything") {
        CHECK(existence_vector(params, grid, 0.0) == ExistenceVector{1, 1});
    }
    SUBCASE("score exactly at threshold counts as present") {
        const auto half = pinned_existence_model({0.5, 0.25});
        const auto v = existence_vector(half, grid, 0.5);
        CHECK(v[0] == 1);
        CHECK(v[1] == 0);
    }
    SUBCASE("raising the threshold never turns a 0 into a 1") {
        const auto p = pinned_existence_model({0.3, 0.7, 0.95});
        for (double low = 0.0; low < 1.0; low += 0.1) {
            const auto a = existence_vector(p, grid, low);
            const auto b = existence_vector(p, grid, low + 0.05);
            for (std::size_t i = 0; i < a.size(); ++i) CHECK(b[i] <= a[i]);
        }
    }
}

TEST_CASE("cluster_shapes partitions by exact vector equality") {
    Dataset ds;
    ds.category = "probe";
    for (int i = 0; i < 6; ++i) {
        ShapeRecord rec;
        rec.id = cat("s", i);
        rec.grid = VoxelGrid(16);
        if (i % 3 == 0) rec.grid.set(2, 2, 2, 1);  // three grid variants
        if (i % 3 == 1) rec.grid.set(12, 12, 12, 1);
        rec.split = Split::train;
        ds.records.push_back(std::move(rec));
    }

    SUBCASE("constant existence heads give a single group") {
        const auto params = pinned_existence_model({0.9, 0.9});
        const auto groups = cluster_shapes(ds, params, 0.5);
        REQUIRE(groups.size() == 1);
        CHECK(groups[0].shape_ids.size() == 6);
        // partition property: every shape appears exactly once
        std::size_t total = 0;
        for (const auto& g : groups) total += g.shape_ids.size();
        CHECK(total == ds.records.size());
    }
    SUBCASE("groups are ordered by descending size") {
        // encoder with nonzero weights responds to the grid content
        ModelConfig cfg;
        cfg.branches = 4;
        cfg.resolution = 16;
        cfg.encoder_channels = {2, 2, 2};
        Pcg32 rng(19);
        const auto params = init_model<float>(cfg, rng);
        const auto groups = cluster_shapes(ds, params, 0.5);
        std::size_t total = 0;
        for (std::size_t g = 1; g < groups.size(); ++g) {
            CHECK(groups[g - 1].shape_ids.size() >= groups[g].shape_ids.size());
        }
        for (const auto& g : groups) total += g.shape_ids.size();
        CHECK(total == ds.records.size());
    }
}

TEST_CASE("classify_groups majority vote with minimum size") {
    SUBCASE("one big group of a single category is perfect") {
        ShapeGroup g;
        for (int i = 0; i < 12; ++i) {
            g.shape_ids.push_back(cat("a", i));
            g.categories.push_back("chair");
        }
        const auto result = classify_groups({g}, 10);
        REQUIRE(result.group_category[0].has_value());
        CHECK(*result.group_category[0] == "chair");
        CHECK(*result.precision.at("chair") == 1.0);
        CHECK(result.recall.at("chair") == 1.0);
    }
    SUBCASE("groups below min_size get no label; recalls drop to 0") {
        ShapeGroup g;
        for (int i = 0; i < 4; ++i) {
            g.shape_ids.push_back(cat("a", i));
            g.categories.push_back("chair");
        }
        const auto result = classify_groups({g}, 10);
        CHECK_FALSE(result.group_category[0].has_value());
        CHECK_FALSE(result.precision.at("chair").has_value());
        CHECK(result.recall.at("chair") == 0.0);
    }
    SUBCASE("mixed group counts misassigned members against recall") {
        // 7 chairs + 3 tables in one group of 10 -> labeled chair;
        // recall(table) = 0/3, precision(chair) = 7/10
        ShapeGroup g;
        for (int i = 0; i < 7; ++i) {
            g.shape_ids.push_back(cat("c", i));
            g.categories.push_back("chair");
        }
        for (int i = 0; i < 3; ++i) {
            g.shape_ids.push_back(cat("t", i));
            g.categories.push_back("table");
        }
        const auto result = classify_groups({g}, 10);
        CHECK(*result.group_category[0] == "chair");
        CHECK(*result.precision.at("chair") == doctest::Approx(0.7).epsilon(1e-12));
        CHECK(result.recall.at("chair") == 1.0);
        CHECK(result.recall.at("table") == 0.0);
        CHECK_FALSE(result.precision.at("table").has_value());
    }
}

TEST_CASE("build_skeleton on hand-built grids") {
    SUBCASE("single part gives one node and no edges") {
        LabeledGrid grid;
        grid.resolution = 16;
        grid.labels.assign(16 * 16 * 16, kUnlabeled);
        // 3x1x1 bar of label 0 at y=z=8, x in {4,5,6}
        for (int x = 4; x <= 6; ++x) grid.labels[grid.linear_index(x, 8, 8)] = 0;
        const auto g = build_skeleton(grid);
        REQUIRE(g.nodes.size() == 1);
        CHECK(g.edges.empty());
        CHECK(g.nodes[0].kind == NodeKind::part);
        // centroid of voxel centers x in {4,5,6} -> x center (5+0.5)/16-0.5
        CHECK(g.nodes[0].position.x == doctest::Approx((5.5 / 16.0) - 0.5).epsilon(1e-9));
        CHECK(g.nodes[0].position.y == doctest::Approx((8.5 / 16.0) - 0.5).epsilon(1e-9));
    }
    SUBCASE("two touching parts give 2 part nodes + 1 joint + 2 edges") {
        const LabeledGrid grid = two_part_bar();
        const auto g = build_skeleton(grid);
        REQUIRE(g.nodes.size() == 3);
        REQUIRE(g.edges.size() == 2);
        CHECK(g.nodes[0].kind == NodeKind::part);
        CHECK(g.nodes[1].kind == NodeKind::part);
        CHECK(g.nodes[2].kind == NodeKind::joint);
        CHECK_FALSE(g.nodes[2].optimizable);
        CHECK(g.degree(2) == 2);
    }
    SUBCASE("L-shaped two-part grid matches hand-computed centroids") {
        LabeledGrid grid;
        grid.resolution = 16;
        grid.labels.assign(16 * 16 * 16, kUnlabeled);
        // part 0: horizontal run x in {4..7}, y=4, z=4
        for (int x = 4; x <= 7; ++x) grid.labels[grid.linear_index(x, 4, 4)] = 0;
        // part 1: vertical run y in {5..8} at x=7, z=4 (touches part 0 at (7,4,4)-(7,5,4))
        for (int y = 5; y <= 8; ++y) grid.labels[grid.linear_index(7, y, 4)] = 1;
        const auto g = build_skeleton(grid);
        REQUIRE(g.nodes.size() == 3);
        auto center = [](double v) { return (v + 0.5) / 16.0 - 0.5; };
        CHECK(g.nodes[0].position.x == doctest::Approx(center(5.5)).epsilon(1e-6));
        CHECK(g.nodes[0].position.y == doctest::Approx(center(4)).epsilon(1e-6));
        CHECK(g.nodes[1].position.x == doctest::Approx(center(7)).epsilon(1e-6));
        CHECK(g.nodes[1].position.y == doctest::Approx(center(6.5)).epsilon(1e-6));
        // joint at the centroid of contact voxels (7,4,4) and (7,5,4)
        CHECK(g.nodes[2].position.x == doctest::Approx(center(7)).epsilon(1e-6));
        CHECK(g.nodes[2].position.y == doctest::Approx(center(4.5)).epsilon(1e-6));
        CHECK(g.nodes[2].position.z == doctest::Approx(center(4)).epsilon(1e-6));
    }
    SUBCASE("empty labeled grid is an error") {
        LabeledGrid grid;
        grid.resolution = 16;
        grid.labels.assign(16 * 16 * 16, kUnlabeled);
        CHECK_THROWS(build_skeleton(grid));
    }
    SUBCASE("heuristic join and tip rules") {
        const LabeledGrid grid = two_part_bar();
        HeuristicConfig config;
        config.rules.push_back({HeuristicKind::join, "bridge", {0, 1}});
        config.rules.push_back({HeuristicKind::tip, "ends", {0}});
        const auto g = build_skeleton(grid, config);
        // 2 parts + 1 joint + 1 join node + 1 tip node
        REQUIRE(g.nodes.size() == 5);
        CHECK(g.nodes[3].kind == NodeKind::heuristic);
        CHECK(g.degree(3) == 2);  // join connects both listed parts
        CHECK(g.nodes[4].kind == NodeKind::heuristic);
        CHECK(g.degree(4) == 1);
        // tip sits at part 0's voxel farthest from the joint: x = 2 end
        CHECK(g.nodes[4].position.x < g.nodes[0].position.x);
    }
}

TEST_CASE("exports stay well-formed on edge cases") {
    SUBCASE("empty labeled grid exports a zero-vertex PLY") {
        LabeledGrid grid;
        grid.resolution = 16;
        grid.labels.assign(16 * 16 * 16, kUnlabeled);
        const std::string ply = labeled_points_ply(grid);
        CHECK(ply.find("element vertex 0") != std::string::npos);
    }
    SUBCASE("skeleton OBJ uses 1-based line indices") {
        SkeletonGraph g;
        g.nodes.push_back({0, NodeKind::part, {0, 0, 0}, true});
        g.nodes.push_back({1, NodeKind::part, {1, 0, 0}, true});
        g.edges.push_back({0, 1});
        const std::string obj = skeleton_obj(g);
        CHECK(obj.find("l 1 2") != std::string::npos);
    }
}

TEST_CASE("chamfer distance properties") {
    Pcg32 rng(44);
    std::vector<Vec3d> a, b;
    for (int i = 0; i < 20; ++i) {
        a.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
        b.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    }
    CHECK(chamfer_distance(a, a) == 0.0);
    CHECK(chamfer_distance(a, b) == doctest::Approx(chamfer_distance(b, a)).epsilon(1e-12));
    CHECK(chamfer_distance(a, b) > 0.0);
}

TEST_CASE("optimize_skeleton descent behavior") {
    // straight bar of voxels along x
    VoxelGrid gt(16);
    for (int x = 3; x <= 12; ++x) {
        for (int y = 7; y < 9; ++y) {
            for (int z = 7; z < 9; ++z) gt.set(x, y, z, 1);
        }
    }

    SUBCASE("single node at the centroid of a symmetric point set stays put") {
        // exact ties are averaged, so the gradient cancels by symmetry
        SkeletonGraph g;
        g.nodes.push_back({0, NodeKind::part, {0.0, 0.0, 0.0}, true});
        const std::vector<Vec3d> targets = {{-0.25, 0.0, 0.0}, {0.25, 0.0, 0.0},
                                            {0.0, -0.25, 0.0}, {0.0, 0.25, 0.0}};
        SkeletonOptimizeConfig config;
        config.iterations = 100;
        const auto out = optimize_skeleton_points(g, targets, config);
        CHECK(std::abs(out.nodes[0].position.x) < 1e-6);
        CHECK(std::abs(out.nodes[0].position.y) < 1e-6);
        CHECK(std::abs(out.nodes[0].position.z) < 1e-6);
    }

    SUBCASE("objective decreases from a perturbed start and is monotone") {
        SkeletonGraph g;
        g.nodes.push_back({0, NodeKind::part, {-0.35, 0.12, -0.08}, true});
        g.nodes.push_back({1, NodeKind::part, {0.28, -0.15, 0.1}, true});
        g.edges.push_back({0, 1});

        SkeletonOptimizeConfig config;
        config.iterations = 200;
        const auto out = optimize_skeleton(g, gt, config);

        // reproduce the fixed target set to compare objectives directly
        auto objective = [&](const SkeletonGraph& graph) {
            SkeletonOptimizeConfig c2 = config;
            c2.iterations = 0;  // no movement, objective evaluated on entry
            // instead compute via chamfer_distance on the same samples
            std::vector<Vec3d> x;
            for (const auto& n : graph.nodes) x.push_back(n.position);
            for (const auto& e : graph.edges) {
                for (int k = 0; k < config.samples_per_edge; ++k) {
                    const double t = static_cast<double>(k + 1) / (config.samples_per_edge + 1);
                    x.push_back(graph.nodes[static_cast<std::size_t>(e.a)].position * (1 - t) +
                                graph.nodes[static_cast<std::size_t>(e.b)].position * t);
                }
            }
            // target set: regenerate with the same seed
            Pcg32 rng(mix_seed(config.seed, 0x736b656cull), config.seed);
            std::vector<std::size_t> occ;
            for (std::size_t v = 0; v < gt.cells().size(); ++v) {
                if (gt.cells()[v]) occ.push_back(v);
            }
            std::vector<Vec3d> y(static_cast<std::size_t>(config.interior_samples));
            for (auto& t : y) {
                const std::size_t v = occ[rng.bounded(static_cast<std::uint32_t>(occ.size()))];
                const double xx = static_cast<double>(v % 16);
                const double yy = static_cast<double>((v / 16) % 16);
                const double zz = static_cast<double>(v / 256);
                t = {(xx + rng.uniform()) / 16 - 0.5, (yy + rng.uniform()) / 16 - 0.5,
                     (zz + rng.uniform()) / 16 - 0.5};
            }
            return chamfer_distance(x, y);
        };
        CHECK(objective(out) < objective(g));

        // endpoints end up near the bar ends (within one voxel of the
        // grid-search optimum along the axis; see the acceptance suite for
        // the full oracle comparison)
        const double left = std::min(out.nodes[0].position.x, out.nodes[1].position.x);
        const double right = std::max(out.nodes[0].position.x, out.nodes[1].position.x);
        CHECK(left < -0.15);
        CHECK(right > 0.15);
        CHECK(std::abs(out.nodes[0].position.y) < 0.08);
        CHECK(std::abs(out.nodes[1].position.y) < 0.08);
    }

    SUBCASE("empty ground truth is an error") {
        SkeletonGraph g;
        g.nodes.push_back({0, NodeKind::part, {0, 0, 0}, true});
        VoxelGrid empty(16);
        CHECK_THROWS(optimize_skeleton(g, empty, {}));
    }
}
