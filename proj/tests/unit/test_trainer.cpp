// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "partfit/checkpoint.hpp"
#include "partfit/error.hpp"
#include "partfit/sampling.hpp"
#include "partfit/synth.hpp"
#include "partfit/trainer.hpp"

using namespace partfit;

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }

Dataset small_synthetic(int count, int resolution, std::uint64_t seed) {
    SynthConfig config;
    config.family = "two_box";
    config.count = count;
    config.resolution = resolution;
    config.samples_uniform = 128;
    config.samples_surface = 128;
    config.seed = seed;
    Pcg32 rng(seed, 0x73796e74);
    return synth_generate(config, rng);
}

TrainConfig smoke_config() {
    TrainConfig c;
    c.branches = 2;
    c.eras = 1;
    c.era_iterations = 5;
    c.batch_size = 2;
    c.points_per_shape = 32;
    c.encoder_channels = {2, 4, 8};
    c.deform_hidden = 4;
    c.template_hidden = 4;
    c.template_layers = 3;
    c.seed = 3;
    c.threads = 1;
    return c;
}

// A model whose occupancy is ~1 for x > 0 and ~0 for x < 0, existence ~1,
// affine exactly identity, no deformation. Lets IoU tests pick point sets.
ModelParams<float> half_space_model() {
    ModelConfig cfg;
    cfg.branches = 1;
    cfg.resolution = 16;
    cfg.encoder_channels = {2, 2, 2};
    cfg.template_hidden = 1;
    cfg.template_layers = 2;
    cfg.use_deformation = false;
    Pcg32 rng(8);
    auto params = init_model<float>(cfg, rng);
    // zero the whole head so A = [I|0] and raw outputs come from the bias
    for (std::size_t k = 0; k < params.layout.head_w.count; ++k) {
        params.values[params.layout.head_w.offset + k] = 0.0f;
    }
    auto head_b = params.tensor(params.layout.head_b);
    head_b[12 + cfg.latent_dim] = 60.0f / cfg.existence_logit_scale;  // existence ~ 1
    auto g_w0 = params.tensor(params.layout.template_w[0][0]);
    g_w0[0] = 50.0f;
    g_w0[1] = 0.0f;
    g_w0[2] = 0.0f;
    params.tensor(params.layout.template_b[0][0])[0] = 0.0f;
    params.tensor(params.layout.template_w[0][1])[0] = 50.0f;
    params.tensor(params.layout.template_b[0][1])[0] = -10.0f;
    return params;
}

ShapeRecord four_sample_record(std::uint8_t gt0, std::uint8_t gt1, std::uint8_t gt2,
                               std::uint8_t gt3) {
    ShapeRecord rec;
    rec.id = "probe";
    rec.grid = VoxelGrid(16);
    rec.samples.resize(4);
    rec.samples[0].position = {-0.3f, 0.0f, 0.0f};
    rec.samples[1].position = {0.3f, 0.1f, 0.0f};
    rec.samples[2].position = {0.4f, -0.1f, 0.1f};
    rec.samples[3].position = {-0.2f, 0.2f, -0.1f};
    rec.samples[0].occupancy = gt0;
    rec.samples[1].occupancy = gt1;
    rec.samples[2].occupancy = gt2;
    rec.samples[3].occupancy = gt3;
    return rec;
}

}  // namespace

TEST_CASE("adam matches the hand-traced update to 1e-12") {
    AdamConfig cfg;
    cfg.learning_rate = 0.1;
    AdamState<double> opt(1, cfg);
    std::vector<double> theta = {1.0};
    const std::vector<double> gs = {1.0, -0.5, 0.25};

    double m = 0, v = 0, expected = 1.0;
    for (std::size_t t = 1; t <= gs.size(); ++t) {
        const double g = gs[t - 1];
        std::vector<double> grad = {g};
        opt.step(std::span<double>(theta), std::span<const double>(grad));

        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double m_hat = m / (1.0 - std::pow(0.9, static_cast<double>(t)));
        const double v_hat = v / (1.0 - std::pow(0.999, static_cast<double>(t)));
        expected -= 0.1 * m_hat / (std::sqrt(v_hat) + 1e-8);
        CHECK(theta[0] == doctest::Approx(expected).epsilon(1e-12));
    }
}

TEST_CASE("ablation letters map onto trainer flags") {
    const AblationFlags full = parse_ablation("TDFR");
    CHECK(full.use_templates);
    CHECK(full.use_deformation);
    CHECK(full.use_deform_constraint);
    CHECK(full.use_revive_scheme);
    CHECK(full.use_sum_loss);
    CHECK(full.use_max_loss);
    CHECK(ablation_string(full) == "TDFR");

    const AblationFlags bs = parse_ablation("BSR");
    CHECK_FALSE(bs.use_templates);
    CHECK(bs.use_sum_loss);
    CHECK_FALSE(bs.use_max_loss);
    CHECK(bs.use_revive_scheme);
    CHECK(ablation_string(bs) == "BSR");

    const AblationFlags bm = parse_ablation("BM");
    CHECK_FALSE(bm.use_sum_loss);
    CHECK(bm.use_max_loss);

    CHECK_THROWS_AS(parse_ablation("XYZ"), ConfigError);
    CHECK_THROWS_AS(parse_ablation("BT"), ConfigError);
    CHECK_THROWS_AS(parse_ablation("TSM"), ConfigError);
    CHECK_THROWS_AS(parse_ablation("DR"), ConfigError);  // missing base letter
}

TEST_CASE("reconstruction IoU set arithmetic") {
    const auto params = half_space_model();

    SUBCASE("pred {1,2} against gt {2,3} gives 1/3") {
        const ShapeRecord rec = four_sample_record(0, 0, 1, 1);
        const ShapeRecord* ptr = &rec;
        CHECK(reconstruction_iou(params, std::span<const ShapeRecord* const>(&ptr, 1)) ==
              doctest::Approx(1.0 / 3.0).epsilon(1e-9));
    }
    SUBCASE("perfect predictor scores 1") {
        const ShapeRecord rec = four_sample_record(0, 1, 1, 0);
        const ShapeRecord* ptr = &rec;
        CHECK(reconstruction_iou(params, std::span<const ShapeRecord* const>(&ptr, 1)) ==
              doctest::Approx(1.0).epsilon(1e-9));
    }
    SUBCASE("all-zero predictor scores 0 when something is occupied") {
        auto zero = half_space_model();
        zero.tensor(zero.layout.template_w[0][1])[0] = 0.0f;
        zero.tensor(zero.layout.template_b[0][1])[0] = -60.0f;
        const ShapeRecord rec = four_sample_record(1, 1, 0, 0);
        const ShapeRecord* ptr = &rec;
        CHECK(reconstruction_iou(zero, std::span<const ShapeRecord* const>(&ptr, 1)) == 0.0);
    }
}

TEST_CASE("era maintenance follows the rollback and revive rules") {
    TrainConfig config = smoke_config();
    config.branches = 4;
    config.encoder_channels = {2, 2, 2};
    const Dataset ds = small_synthetic(5, 16, 17);
    std::vector<const ShapeRecord*> shapes;
    for (const auto& rec : ds.records) shapes.push_back(&rec);

    ModelConfig mc = config.model_config(16);
    Pcg32 rng(7);
    auto params = init_model<float>(mc, rng);
    AdamState<float> opt(params.values.size(), config.adam);

    // pin the existence fractions: zero the P rows of the head and drive the
    // raw existence from the bias alone
    auto pin_fractions = [&](ModelParams<float>& p, std::vector<double> fractions) {
        const int sw = mc.head_slice_width();
        const int head_out = mc.head_output_dim();
        for (int f = 0; f < mc.head_input_dim(); ++f) {
            for (int i = 0; i < mc.branches; ++i) {
                p.values[p.layout.head_w.offset + static_cast<std::size_t>(f) * head_out +
                         static_cast<std::size_t>(i) * sw + 12 + mc.latent_dim] = 0.0f;
            }
        }
        auto bias = p.tensor(p.layout.head_b);
        for (int i = 0; i < mc.branches; ++i) {
            bias[i * sw + 12 + mc.latent_dim] =
                static_cast<float>(logit(fractions[i])) / mc.existence_logit_scale;
        }
    };

    SUBCASE("dead branches revived plus the oldest survivor") {
        pin_fractions(params, {0.02, 0.5, 0.5, 0.04});
        params.ages = {3, 1, 2, 0};
        EraState state;
        const auto record =
            era_end_maintenance(params, opt, state, shapes, config, 1, false, nullptr);
        REQUIRE(record.revived.size() == 3);
        CHECK(record.revived[0].branch == 0);
        CHECK(record.revived[0].reason == "dead");
        CHECK(record.revived[1].branch == 3);
        CHECK(record.revived[1].reason == "dead");
        CHECK(record.revived[2].branch == 2);  // oldest among survivors {1:1, 2:2}
        CHECK(record.revived[2].reason == "oldest");
        CHECK(params.ages == std::vector<std::uint32_t>{0, 2, 0, 0});
        CHECK_FALSE(record.rollback);
        CHECK(state.prev_params.has_value());
    }

    SUBCASE("all fractions healthy: only the oldest branch is revived") {
        pin_fractions(params, {0.5, 0.6, 0.7, 0.8});
        params.ages = {3, 1, 2, 0};
        EraState state;
        const auto record =
            era_end_maintenance(params, opt, state, shapes, config, 1, false, nullptr);
        REQUIRE(record.revived.size() == 1);
        CHECK(record.revived[0].branch == 0);
        CHECK(record.revived[0].reason == "oldest");
        CHECK(params.ages == std::vector<std::uint32_t>{0, 2, 3, 1});
    }

    SUBCASE("worse IoU rolls back to the previous checkpoint bitwise") {
        pin_fractions(params, {0.5, 0.6, 0.7, 0.8});
        EraState state;
        auto good = params;
        good.values[good.layout.conv_w[0].offset] = 0.125f;  // marker
        state.prev_params = good;
        state.prev_optimizer = opt;
        state.prev_iou = 0.999;  // unbeatable
        const auto record =
            era_end_maintenance(params, opt, state, shapes, config, 2, false, nullptr);
        CHECK(record.rollback);
        CHECK(record.iou == 0.999);
        CHECK(record.iou_measured < 0.999);
        // parameters equal the checkpoint except for branches revived after
        CHECK(params.values[params.layout.conv_w[0].offset] == 0.125f);
    }

    SUBCASE("final era skips revivals but still checkpoints") {
        pin_fractions(params, {0.02, 0.5, 0.5, 0.04});
        params.ages = {3, 1, 2, 0};
        EraState state;
        const auto record =
            era_end_maintenance(params, opt, state, shapes, config, 8, true, nullptr);
        CHECK(record.revived.empty());
        CHECK(params.ages == std::vector<std::uint32_t>{4, 2, 3, 1});
        CHECK(state.prev_params.has_value());
    }
}

TEST_CASE("train smoke run produces history and finite loss") {
    const Dataset ds = small_synthetic(5, 16, 21);
    TrainConfig config = smoke_config();

    int iterations_seen = 0;
    TrainHooks hooks;
    hooks.on_iteration = [&](std::int64_t, const LossBreakdown& loss) {
        ++iterations_seen;
        CHECK(std::isfinite(loss.total));
    };
    const auto result = train(ds, config, hooks);
    CHECK(iterations_seen == 5);
    REQUIRE(result.history.size() == 1);
    CHECK(std::isfinite(result.history[0].iou));
}

TEST_CASE("train is deterministic for a fixed seed") {
    const Dataset ds = small_synthetic(5, 16, 22);
    TrainConfig config = smoke_config();
    config.eras = 2;
    config.era_iterations = 4;
    const auto a = train(ds, config);
    const auto b = train(ds, config);
    CHECK(a.params.values == b.params.values);
    CHECK(a.optimizer.m == b.optimizer.m);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t e = 0; e < a.history.size(); ++e) {
        CHECK(a.history[e].iou == b.history[e].iou);
    }

    SUBCASE("thread count does not change the result") {
        TrainConfig threaded = config;
        threaded.threads = 3;
        const auto c = train(ds, threaded);
        CHECK(c.params.values == a.params.values);
    }
}

TEST_CASE("resume continues the era sequence") {
    const Dataset ds = small_synthetic(5, 16, 23);
    TrainConfig config = smoke_config();
    config.eras = 3;
    config.era_iterations = 4;

    // capture the working state after era 2 (an interruption point), then
    // resume era 3 from it
    ModelParams<float> mid_params;
    AdamState<float> mid_opt;
    EraState mid_state;
    TrainHooks capture;
    capture.on_era_end = [&](const EraRecord& record, const ModelParams<float>& p,
                             const AdamState<float>& o) {
        if (record.era != 2) return;
        mid_params = p;
        mid_opt = o;
        mid_state.completed_eras = record.era;
        mid_state.prev_params = p;
        mid_state.prev_optimizer = o;
        mid_state.prev_iou = record.iou;
        mid_state.history.push_back(record);
    };
    train(ds, config, capture);
    REQUIRE(mid_state.completed_eras == 2);

    const auto resumed = train(ds, config, {}, mid_state, mid_params, mid_opt);
    REQUIRE(resumed.history.size() == 2);  // mid_state history had era 2 only
    CHECK(resumed.history.back().era == 3);
    CHECK(resumed.history.back().iou >= mid_state.prev_iou);  // standing never regresses

    // resuming twice from the same state is bit-identical
    const auto resumed2 = train(ds, config, {}, mid_state, mid_params, mid_opt);
    CHECK(resumed2.params.values == resumed.params.values);
    CHECK(resumed2.history.back().iou == resumed.history.back().iou);
}

TEST_CASE("without the revive scheme ages never change") {
    const Dataset ds = small_synthetic(5, 16, 24);
    TrainConfig config = smoke_config();
    config.eras = 2;
    config.era_iterations = 3;
    config.ablation = parse_ablation("TDF");
    const auto result = train(ds, config);
    CHECK(result.params.ages == std::vector<std::uint32_t>{0, 0});
    for (const auto& record : result.history) {
        CHECK(record.revived.empty());
        CHECK_FALSE(record.rollback);
    }
}

TEST_CASE("trainer aborts on non-finite loss with a diagnostic") {
    const Dataset ds = small_synthetic(5, 16, 25);
    TrainConfig config = smoke_config();
    config.adam.learning_rate = 1e30;
    config.era_iterations = 8;
    CHECK_THROWS_AS(train(ds, config), NonFiniteLossError);
}

TEST_CASE("trainer rejects empty train splits and mixed resolutions") {
    TrainConfig config = smoke_config();
    SUBCASE("empty split") {
        Dataset empty;
        CHECK_THROWS(train(empty, config));
    }
    SUBCASE("mixed resolutions") {
        Dataset ds = small_synthetic(4, 16, 26);
        Dataset other = small_synthetic(2, 32, 26);
        other.records[0].split = Split::train;
        ds.records.push_back(other.records[0]);
        CHECK_THROWS(train(ds, config));
    }
}

TEST_CASE("checkpoint round-trips parameters, ages and optimizer state") {
    const ModelConfig cfg = smoke_config().model_config(16);
    Pcg32 rng(5);
    auto params = init_model<float>(cfg, rng);
    params.ages = {4, 9};
    AdamState<float> opt(params.values.size());
    opt.step_count = 42;
    for (std::size_t i = 0; i < opt.m.size(); ++i) {
        opt.m[i] = static_cast<float>(i % 7) * 0.25f;
        opt.v[i] = static_cast<float>(i % 5) * 0.125f;
    }

    const auto path = std::filesystem::temp_directory_path() / "partfit_tests" / "model.pfck";
    std::filesystem::create_directories(path.parent_path());
    save_checkpoint(path, params, &opt);
    const Checkpoint ck = load_checkpoint(path);
    CHECK(ck.params.values == params.values);
    CHECK(ck.params.ages == params.ages);
    CHECK(ck.params.config == cfg);
    REQUIRE(ck.optimizer.has_value());
    CHECK(ck.optimizer->step_count == 42);
    CHECK(ck.optimizer->m == opt.m);
    CHECK(ck.optimizer->v == opt.v);

    SUBCASE("corrupt magic is a format error") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("ZZZZ", 4);
        f.close();
        CHECK_THROWS_AS(load_checkpoint(path), FormatError);
    }
}
