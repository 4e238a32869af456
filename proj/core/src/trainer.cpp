// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "partfit/error.hpp"
#include "partfit/log.hpp"

namespace partfit {

namespace {
// Stream selectors for the independent rng families.
constexpr std::uint64_t kInitStream = 0x696e6974;    // "init"
constexpr std::uint64_t kIterStream = 0x69746572;    // "iter"
constexpr std::uint64_t kReviveStream = 0x72657669;  // "revi"
}  // namespace

AblationFlags parse_ablation(const std::string& letters) {
    AblationFlags f;
    bool base = false, templates = false, sum_only = false, max_only = false;
    f.use_deformation = false;
    f.use_deform_constraint = false;
    f.use_revive_scheme = false;
    for (char c : letters) {
        switch (c) {
            case 'B': base = true; break;
            case 'T': templates = true; break;
            case 'S': sum_only = true; break;
            case 'M': max_only = true; break;
            case 'D': f.use_deformation = true; break;
            case 'F': f.use_deform_constraint = true; break;
            case 'R': f.use_revive_scheme = true; break;
            default:
                throw ConfigError(cat("unknown ablation letter '", std::string(1, c),
                                      "' (expected letters from B,T,S,M,D,F,R)"));
        }
    }
    if (base == templates) {
        throw ConfigError("ablation must contain exactly one of 'B' or 'T'");
    }
    if (sum_only && max_only) {
        throw ConfigError("ablation letters 'S' and 'M' are mutually exclusive");
    }
    f.use_templates = templates;
    f.use_sum_loss = !max_only;
    f.use_max_loss = !sum_only;
    return f;
}

std::string ablation_string(const AblationFlags& f) {
    std::string s;
    s += f.use_templates ? 'T' : 'B';
    if (!f.use_max_loss) s += 'S';
    if (!f.use_sum_loss) s += 'M';
    if (f.use_deformation) s += 'D';
    if (f.use_deform_constraint) s += 'F';
    if (f.use_revive_scheme) s += 'R';
    return s;
}

ModelConfig TrainConfig::model_config(int resolution) const {
    ModelConfig cfg;
    cfg.branches = branches;
    cfg.resolution = resolution;
    cfg.encoder_channels = encoder_channels;
    cfg.latent_dim = latent_dim;
    cfg.deform_hidden = deform_hidden;
    cfg.deform_layers = deform_layers;
    cfg.template_hidden = template_hidden;
    cfg.template_layers = template_layers;
    cfg.deform_scale = deform_scale;
    cfg.template_mode = ablation.use_templates;
    cfg.use_deformation = ablation.use_deformation;
    cfg.activation = activation;
    cfg.head_init_scale = head_init_scale;
    cfg.head_output_scale = head_output_scale;
    cfg.existence_logit_scale = existence_logit_scale;
    cfg.template_output_bias = template_output_bias;
    cfg.template_output_gain = template_output_gain;
    return cfg;
}

LossSpec TrainConfig::loss_spec() const {
    LossSpec spec;
    spec.weights = weights;
    spec.flags.use_sum = ablation.use_sum_loss;
    spec.flags.use_max = ablation.use_max_loss;
    spec.flags.use_deform_constraint = ablation.use_deform_constraint;
    return spec;
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("trainer: batch size must be >= 1");
    if (era_iterations < 1) throw ConfigError("trainer: era_iterations must be >= 1");
    if (resolved_eras() < 1) throw ConfigError("trainer: eras must be >= 1");
    if (points_per_shape < 1) throw ConfigError("trainer: points_per_shape must be >= 1");
    if (death_threshold < 0.0 || death_threshold > 1.0) {
        throw ConfigError("trainer: death threshold must be in [0, 1]");
    }
    if (!ablation.use_sum_loss && !ablation.use_max_loss) {
        throw ConfigError("trainer: at least one reconstruction loss must be enabled");
    }
    weights.validate();
}

TrainConfig parse_train_config(const KeyValueFile& kv, TrainConfig defaults) {
    kv.require_known({"branches", "eras", "era_iters", "batch", "lr", "beta1", "beta2", "epsilon",
                      "alpha", "beta", "gamma", "tau_dead", "ablation", "seed", "points",
                      "encoder_channels", "latent_dim", "deform_hidden", "deform_layers",
                      "template_hidden", "template_layers", "deform_scale", "activation",
                      "head_init_scale", "head_output_scale", "existence_logit_scale",
                      "template_output_bias", "template_output_gain", "threads"});
    TrainConfig c = defaults;
    c.branches = static_cast<int>(kv.get_int("branches", c.branches));
    c.eras = static_cast<int>(kv.get_int("eras", c.eras));
    c.era_iterations = static_cast<int>(kv.get_int("era_iters", c.era_iterations));
    c.batch_size = static_cast<int>(kv.get_int("batch", c.batch_size));
    c.adam.learning_rate = kv.get_double("lr", c.adam.learning_rate);
    c.adam.beta1 = kv.get_double("beta1", c.adam.beta1);
    c.adam.beta2 = kv.get_double("beta2", c.adam.beta2);
    c.adam.epsilon = kv.get_double("epsilon", c.adam.epsilon);
    c.weights.alpha = kv.get_double("alpha", c.weights.alpha);
    c.weights.beta = kv.get_double("beta", c.weights.beta);
    c.weights.gamma = kv.get_double("gamma", c.weights.gamma);
    c.death_threshold = kv.get_double("tau_dead", c.death_threshold);
    if (kv.has("ablation")) c.ablation = parse_ablation(kv.get_string("ablation", ""));
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
    c.points_per_shape = static_cast<int>(kv.get_int("points", c.points_per_shape));
    if (kv.has("encoder_channels")) {
        c.encoder_channels.clear();
        std::istringstream is(kv.get_string("encoder_channels", ""));
        std::string tok;
        while (std::getline(is, tok, ',')) c.encoder_channels.push_back(std::stoi(tok));
    }
    c.latent_dim = static_cast<int>(kv.get_int("latent_dim", c.latent_dim));
    c.deform_hidden = static_cast<int>(kv.get_int("deform_hidden", c.deform_hidden));
    c.deform_layers = static_cast<int>(kv.get_int("deform_layers", c.deform_layers));
    c.template_hidden = static_cast<int>(kv.get_int("template_hidden", c.template_hidden));
    c.template_layers = static_cast<int>(kv.get_int("template_layers", c.template_layers));
    c.deform_scale = static_cast<float>(kv.get_double("deform_scale", c.deform_scale));
    if (kv.has("activation")) {
        c.activation = activation_from_string(kv.get_string("activation", "silu"));
    }
    c.head_init_scale = static_cast<float>(kv.get_double("head_init_scale", c.head_init_scale));
    c.head_output_scale =
        static_cast<float>(kv.get_double("head_output_scale", c.head_output_scale));
    c.existence_logit_scale =
        static_cast<float>(kv.get_double("existence_logit_scale", c.existence_logit_scale));
    c.template_output_bias =
        static_cast<float>(kv.get_double("template_output_bias", c.template_output_bias));
    c.template_output_gain =
        static_cast<float>(kv.get_double("template_output_gain", c.template_output_gain));
    c.threads = static_cast<int>(kv.get_int("threads", c.threads));
    c.validate();
    return c;
}

double reconstruction_iou(const ModelParams<float>& params,
                          std::span<const ShapeRecord* const> shapes, double threshold,
                          ThreadPool* pool) {
    if (shapes.empty()) throw Error("reconstruction_iou: no shapes");
    std::vector<double> per_shape(shapes.size(), 0.0);
    parallel_for(pool, shapes.size(), [&](std::size_t s) {
        const ShapeRecord& rec = *shapes[s];
        std::vector<Vec3f> points(rec.samples.size());
        for (std::size_t i = 0; i < rec.samples.size(); ++i) points[i] = rec.samples[i].position;
        const auto result = forward(params, rec.grid, points);
        std::size_t inter = 0, uni = 0;
        for (std::size_t i = 0; i < rec.samples.size(); ++i) {
            const bool pred = static_cast<double>(result.occupancy_sum[i]) >= threshold;
            const bool gt = rec.samples[i].occupancy != 0;
            inter += (pred && gt) ? 1 : 0;
            uni += (pred || gt) ? 1 : 0;
        }
        per_shape[s] = uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
    });
    double acc = 0;
    for (double v : per_shape) acc += v;
    return acc / static_cast<double>(shapes.size());
}

namespace {

// Mean existence score per branch over the given shapes (eval mode).
std::vector<double> existence_fractions(const ModelParams<float>& params,
                                        std::span<const ShapeRecord* const> shapes,
                                        ThreadPool* pool) {
    std::vector<std::vector<float>> per_shape(shapes.size());
    parallel_for(pool, shapes.size(), [&](std::size_t s) {
        const auto enc = encode(params, shapes[s]->grid);
        per_shape[s].assign(enc.existence.begin(), enc.existence.end());
    });
    std::vector<double> f(static_cast<std::size_t>(params.config.branches), 0.0);
    for (const auto& e : per_shape) {
        for (std::size_t i = 0; i < f.size(); ++i) f[i] += static_cast<double>(e[i]);
    }
    for (auto& v : f) v /= static_cast<double>(shapes.size());
    return f;
}

void apply_revive(ModelParams<float>& params, AdamState<float>& optimizer, int branch,
                  std::uint64_t seed, int era) {
    Pcg32 rng(mix_seed(seed, kReviveStream,
                       (static_cast<std::uint64_t>(era) << 32) | static_cast<std::uint64_t>(branch)),
              kReviveStream);
    revive(params, branch, rng);
    // Fresh weights must not inherit stale moments.
    optimizer.zero_moments(params.layout.branch_param_indices(params.config, branch));
}

}  // namespace

EraRecord era_end_maintenance(ModelParams<float>& params, AdamState<float>& optimizer,
                              EraState& state, std::span<const ShapeRecord* const> train_shapes,
                              const TrainConfig& config, int era, bool final_era,
                              ThreadPool* pool) {
    EraRecord record;
    record.era = era;

    // (1) reconstruction IoU of the weights as trained this era
    record.iou_measured = reconstruction_iou(params, train_shapes, 0.5, pool);

    // (2) rollback decision
    if (state.prev_params.has_value() && record.iou_measured < state.prev_iou) {
        params = *state.prev_params;
        optimizer = *state.prev_optimizer;
        record.rollback = true;
        record.iou = state.prev_iou;
    } else {
        record.iou = record.iou_measured;
    }

    // Every branch ages by one era; revived branches reset to 0 below.
    for (auto& age : params.ages) ++age;

    // The rollback target of the next era is the standing model BEFORE the
    // revivals, so a failed era restores the best-known weights exactly and
    // retries as a pure continuation; a revival that did not pay off within
    // one era is undone rather than compounded.
    state.prev_params = params;
    state.prev_optimizer = optimizer;
    state.prev_iou = record.iou;
    state.completed_eras = era;

    if (!final_era) {
        std::vector<bool> revived(static_cast<std::size_t>(config.branches), false);
        // dead branches on the standing parameters
        const auto fractions = existence_fractions(params, train_shapes, pool);
        for (int i = 0; i < config.branches; ++i) {
            if (fractions[static_cast<std::size_t>(i)] < config.death_threshold) {
                apply_revive(params, optimizer, i, config.seed, era);
                revived[static_cast<std::size_t>(i)] = true;
                record.revived.push_back({era, i, "dead"});
            }
        }
        // oldest branch, ties to the lowest index. Skipped right after a
        // rollback so plateaus alternate between perturbing the best-known
        // model (after improvements) and training it further (after failed
        // eras) instead of perturbing it every era.
        if (!record.rollback) {
            int oldest = 0;
            for (int i = 1; i < config.branches; ++i) {
                if (params.ages[static_cast<std::size_t>(i)] >
                    params.ages[static_cast<std::size_t>(oldest)]) {
                    oldest = i;
                }
            }
            apply_revive(params, optimizer, oldest, config.seed, era);
            if (!revived[static_cast<std::size_t>(oldest)]) {
                record.revived.push_back({era, oldest, "oldest"});
            }
        }
    }
    return record;
}

TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks,
                  std::optional<EraState> resume, std::optional<ModelParams<float>> resume_params,
                  std::optional<AdamState<float>> resume_optimizer) {
    config.validate();

    std::vector<const ShapeRecord*> train_shapes;
    for (const auto& rec : dataset.records) {
        if (rec.split == Split::train) train_shapes.push_back(&rec);
    }
    if (train_shapes.empty()) throw Error("train: dataset train split is empty");
    const int resolution = train_shapes.front()->grid.resolution();
    for (const auto* rec : train_shapes) {
        if (rec->grid.resolution() != resolution) {
            throw Error(cat("train: mixed grid resolutions in dataset (", resolution, " vs ",
                            rec->grid.resolution(), ")"));
        }
        if (rec->samples.empty()) throw Error(cat("train: shape '", rec->id, "' has no samples"));
    }

    const ModelConfig model_cfg = config.model_config(resolution);
    ThreadPool pool(config.threads);

    ModelParams<float> params;
    AdamState<float> optimizer;
    EraState state;
    int first_era = 1;
    if (resume.has_value()) {
        state = std::move(*resume);
        params = std::move(*resume_params);
        optimizer = std::move(*resume_optimizer);
        if (params.config != model_cfg) {
            throw Error("resume: checkpoint architecture does not match the training config");
        }
        first_era = state.completed_eras + 1;
    } else {
        // Era 1: initialize the encoder and draw (revive) every branch.
        Pcg32 init_rng(mix_seed(config.seed, kInitStream), kInitStream);
        params = init_model<float>(model_cfg, init_rng);
        optimizer = AdamState<float>(params.values.size(), config.adam);
    }

    const LossSpec spec = config.loss_spec();
    const int eras = config.resolved_eras();
    const std::size_t n_train = train_shapes.size();
    const auto batch = static_cast<std::size_t>(config.batch_size);
    const auto points_per_shape = static_cast<std::size_t>(config.points_per_shape);

    std::vector<std::uint32_t> shape_order(n_train);
    std::vector<std::size_t> batch_ids(batch);
    std::vector<Vec3f> point_buf(batch * points_per_shape);
    std::vector<float> target_buf(batch * points_per_shape);
    std::vector<BatchItem<float>> items(batch);
    std::vector<float> grad;

    for (int era = first_era; era <= eras; ++era) {
        double loss_acc = 0;
        for (int it = 1; it <= config.era_iterations; ++it) {
            const std::int64_t global_iter =
                static_cast<std::int64_t>(era - 1) * config.era_iterations + it;
            Pcg32 rng(mix_seed(config.seed, kIterStream, static_cast<std::uint64_t>(global_iter)),
                      kIterStream);

            if (batch <= n_train) {
                std::iota(shape_order.begin(), shape_order.end(), 0u);
                for (std::size_t k = 0; k < batch; ++k) {
                    const std::size_t j =
                        k + rng.bounded(static_cast<std::uint32_t>(n_train - k));
                    std::swap(shape_order[k], shape_order[j]);
                    batch_ids[k] = shape_order[k];
                }
            } else {
                for (std::size_t k = 0; k < batch; ++k) {
                    batch_ids[k] = rng.bounded(static_cast<std::uint32_t>(n_train));
                }
            }
            for (std::size_t k = 0; k < batch; ++k) {
                const ShapeRecord& rec = *train_shapes[batch_ids[k]];
                const auto pool_size = static_cast<std::uint32_t>(rec.samples.size());
                Vec3f* pts = point_buf.data() + k * points_per_shape;
                float* tgt = target_buf.data() + k * points_per_shape;
                for (std::size_t p = 0; p < points_per_shape; ++p) {
                    const auto& sample = rec.samples[rng.bounded(pool_size)];
                    pts[p] = sample.position;
                    tgt[p] = static_cast<float>(sample.occupancy);
                }
                items[k] = BatchItem<float>{&rec.grid,
                                            std::span<const Vec3f>(pts, points_per_shape),
                                            std::span<const float>(tgt, points_per_shape)};
            }

            const LossBreakdown loss = batch_gradients<float>(
                params, std::span<const BatchItem<float>>(items.data(), batch), spec, grad, &pool);
            if (!std::isfinite(loss.total)) {
                throw NonFiniteLossError(cat("non-finite loss at era ", era, " iteration ", it,
                                             " (total=", loss.total, ")"));
            }
            optimizer.step(std::span<float>(params.values), std::span<const float>(grad));
            loss_acc += loss.total;
            if (hooks.on_iteration) hooks.on_iteration(global_iter, loss);
        }

        EraRecord record;
        if (config.ablation.use_revive_scheme) {
            record = era_end_maintenance(params, optimizer, state,
                                         std::span<const ShapeRecord* const>(train_shapes), config,
                                         era, era == eras, &pool);
        } else {
            record.era = era;
            record.iou_measured = reconstruction_iou(
                params, std::span<const ShapeRecord* const>(train_shapes), 0.5, &pool);
            record.iou = record.iou_measured;
            state.completed_eras = era;
        }
        record.mean_loss = loss_acc / config.era_iterations;
        state.history.push_back(record);
        if (hooks.on_era_end) hooks.on_era_end(record, params, optimizer);
        log_info(cat("era ", era, "/", eras, ": iou=", record.iou,
                     record.rollback ? " (rolled back)" : "", ", revived=", record.revived.size(),
                     ", mean_loss=", record.mean_loss));
    }

    return TrainResult{std::move(params), std::move(optimizer), std::move(state.history)};
}

}  // namespace partfit
