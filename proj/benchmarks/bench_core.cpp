// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

// Throughput benchmarks for the training-critical paths: encoder passes,
// per-point branch evaluation, full gradient iterations, and the chamfer
// refinement used by the skeleton tools.

#include <benchmark/benchmark.h>

#include "partfit/gradients.hpp"
#include "partfit/sampling.hpp"
#include "partfit/skeleton.hpp"
#include "partfit/synth.hpp"
#include "partfit/trainer.hpp"

namespace {

using namespace partfit;

ModelConfig bench_config(int branches, int resolution) {
    ModelConfig cfg;
    cfg.branches = branches;
    cfg.resolution = resolution;
    cfg.encoder_channels = {6, 12, 24, 48};
    cfg.deform_hidden = 16;
    cfg.template_hidden = 32;
    cfg.template_layers = 4;
    return cfg;
}

struct Fixture {
    ModelParams<float> params;
    VoxelGrid grid{32};
    std::vector<Vec3f> points;
    std::vector<float> targets;

    Fixture() {
        Pcg32 rng(1);
        params = init_model<float>(bench_config(8, 32), rng);
        Pcg32 g(2);
        for (auto& c : grid.cells()) c = g.uniform() < 0.15 ? 1 : 0;
        points.resize(8192);
        for (auto& p : points) {
            p = {static_cast<float>(g.uniform() - 0.5), static_cast<float>(g.uniform() - 0.5),
                 static_cast<float>(g.uniform() - 0.5)};
        }
        targets.resize(points.size());
        for (std::size_t i = 0; i < points.size(); ++i) {
            targets[i] = static_cast<float>(voxel_occupancy(grid, points[i]));
        }
    }
};

Fixture& fixture() {
    static Fixture fx;
    return fx;
}

void BM_Encode(benchmark::State& state) {
    auto& fx = fixture();
    for (auto _ : state) {
        benchmark::DoNotOptimize(encode(fx.params, fx.grid));
    }
}
BENCHMARK(BM_Encode);

void BM_ForwardPoints(benchmark::State& state) {
    auto& fx = fixture();
    const auto n = static_cast<std::size_t>(state.range(0));
    for (auto _ : state) {
        const auto result = forward(fx.params, fx.grid, std::span<const Vec3f>(fx.points.data(), n));
        benchmark::DoNotOptimize(result.occupancy_sum.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n) *
                            fx.params.config.branches);
}
BENCHMARK(BM_ForwardPoints)->Arg(1024)->Arg(8192);

void BM_GradientIteration(benchmark::State& state) {
    auto& fx = fixture();
    const int batch = static_cast<int>(state.range(0));
    std::vector<BatchItem<float>> items;
    for (int k = 0; k < batch; ++k) {
        items.push_back({&fx.grid, std::span<const Vec3f>(fx.points.data() + k * 256, 256),
                         std::span<const float>(fx.targets.data() + k * 256, 256)});
    }
    LossSpec spec;
    spec.weights = {0.1, 100.0, 0.01};
    std::vector<float> grad;
    ThreadPool pool(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(
            batch_gradients<float>(fx.params, std::span<const BatchItem<float>>(items), spec, grad,
                                   &pool));
    }
}
BENCHMARK(BM_GradientIteration)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_ChamferRefine(benchmark::State& state) {
    VoxelGrid bar(32);
    for (int x = 8; x <= 23; ++x) {
        for (int y = 14; y < 16; ++y) {
            for (int z = 14; z < 16; ++z) bar.set(x, y, z, 1);
        }
    }
    SkeletonGraph line;
    line.nodes.push_back({0, NodeKind::part, {-0.2, 0.0, 0.0}, true});
    line.nodes.push_back({1, NodeKind::part, {0.2, 0.0, 0.0}, true});
    line.edges.push_back({0, 1});
    SkeletonOptimizeConfig config;
    config.iterations = static_cast<int>(state.range(0));
    for (auto _ : state) {
        benchmark::DoNotOptimize(optimize_skeleton(line, bar, config));
    }
}
BENCHMARK(BM_ChamferRefine)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
