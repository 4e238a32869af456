// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "partfit/adam.hpp"
#include "partfit/config_file.hpp"
#include "partfit/dataset.hpp"
#include "partfit/gradients.hpp"
#include "partfit/model.hpp"
#include "partfit/parallel.hpp"

namespace partfit {

// Ablation letters: B latent-conditioned base / T shared templates with
// affine placement; S sum-loss only / M max-loss only (default both); D
// deformation networks; F deformation constraint; R revive scheme.
struct AblationFlags {
    bool use_sum_loss = true;
    bool use_max_loss = true;
    bool use_templates = true;
    bool use_deformation = true;
    bool use_deform_constraint = true;
    bool use_revive_scheme = true;
};

AblationFlags parse_ablation(const std::string& letters);
std::string ablation_string(const AblationFlags& flags);

struct TrainConfig {
    int branches = 16;
    int eras = 0;  // 0: defaults to 2N
    int era_iterations = 125000;
    int batch_size = 16;
    AdamConfig adam;  // lr 0.0002, betas 0.9/0.999, eps 1e-8
    LossWeights weights;
    double death_threshold = 0.10;
    AblationFlags ablation;
    std::uint64_t seed = 1;
    int points_per_shape = 4096;
    int threads = 0;  // 0: machine parallelism

    // architecture knobs (defaults per model_config)
    std::vector<int> encoder_channels;
    int latent_dim = 4;
    int deform_hidden = 32;
    int deform_layers = 3;
    int template_hidden = 64;
    int template_layers = 4;
    float deform_scale = 0.1f;
    Activation activation = Activation::silu;
    float head_init_scale = 0.1f;
    float head_output_scale = 0.05f;
    float existence_logit_scale = 0.01f;
    float template_output_bias = -3.0f;
    float template_output_gain = 1.0f;

    int resolved_eras() const { return eras > 0 ? eras : 2 * branches; }
    ModelConfig model_config(int resolution) const;
    LossSpec loss_spec() const;
    void validate() const;
};

/// Reads trainer keys from a key=value file over the given defaults.
TrainConfig parse_train_config(const KeyValueFile& kv, TrainConfig defaults = {});

struct ReviveEvent {
    int era = 0;
    int branch = 0;
    std::string reason;  // "dead" or "oldest"
};

struct EraRecord {
    int era = 0;
    double iou_measured = 0;  // IoU of the weights as trained this era
    double iou = 0;           // standing IoU after the rollback decision
    bool rollback = false;
    std::vector<ReviveEvent> revived;
    double mean_loss = 0;
};

// Rolling trainer state across eras: the previous era's checkpoint (the unit
// of rollback), its standing IoU, and the history so far.
struct EraState {
    int completed_eras = 0;
    std::optional<ModelParams<float>> prev_params;
    std::optional<AdamState<float>> prev_optimizer;
    double prev_iou = -1.0;
    std::vector<EraRecord> history;
};

struct TrainResult {
    ModelParams<float> params;
    AdamState<float> optimizer;
    std::vector<EraRecord> history;
};

struct TrainHooks {
    std::function<void(std::int64_t iteration, const LossBreakdown&)> on_iteration;
    std::function<void(const EraRecord&, const ModelParams<float>&, const AdamState<float>&)>
        on_era_end;
};

/// Mean over shapes of per-point-pool IoU: O_sum binarized at threshold
/// against the stored sample occupancies; an empty union counts as 1.
double reconstruction_iou(const ModelParams<float>& params,
                          std::span<const ShapeRecord* const> shapes, double threshold = 0.5,
                          ThreadPool* pool = nullptr);

/// Era-boundary maintenance: (1) measure training IoU, (2) roll back to the
/// previous era's checkpoint (the standing pre-revival weights) when the
/// measured IoU regressed, (3) age the branches and store the standing model
/// as the next rollback target, (4) revive dead branches (existence fraction
/// below the death threshold), (5) revive the oldest branch (ties to the
/// lowest index; skipped in eras that rolled back, so plateaus alternate
/// between perturbing the best-known model and training it further). Both
/// revival steps are skipped when final_era is set so the returned model
/// never ends on fresh branches.
EraRecord era_end_maintenance(ModelParams<float>& params, AdamState<float>& optimizer,
                              EraState& state, std::span<const ShapeRecord* const> train_shapes,
                              const TrainConfig& config, int era, bool final_era,
                              ThreadPool* pool = nullptr);

/// Runs the full era/iteration loop. Deterministic for a fixed (dataset,
/// config, seed): batches and point picks derive from per-iteration streams
/// and gradient reduction order is fixed. `resume` continues after its
/// completed eras using the checkpointed parameters and optimizer state.
TrainResult train(const Dataset& dataset, const TrainConfig& config, const TrainHooks& hooks = {},
                  std::optional<EraState> resume = std::nullopt,
                  std::optional<ModelParams<float>> resume_params = std::nullopt,
                  std::optional<AdamState<float>> resume_optimizer = std::nullopt);

}  // namespace partfit
