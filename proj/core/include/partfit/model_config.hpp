// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

#include "partfit/error.hpp"

namespace partfit {

enum class Activation { silu, leaky_relu, relu };

Activation activation_from_string(const std::string& s);
const char* to_string(Activation a);

// Architecture of the branched autoencoder. The encoder is a stack of
// stride-2 4x4x4 convolution blocks that reduces any power-of-two input to a
// 2^3 feature volume, followed by one linear head whose output is partitioned
// into per-branch slices of width 17 = 12 (affine residual) + 4 (latent) + 1
// (existence). Each branch owns a deformation MLP and a template MLP.
struct ModelConfig {
    static constexpr int kHeadSliceWidth = 17;
    static constexpr int kAffineSize = 12;

    int branches = 16;
    int resolution = 64;
    std::vector<int> encoder_channels;  // empty: min(256, 16 << b) per block
    int latent_dim = 4;
    int deform_hidden = 32;
    int deform_layers = 3;  // weight layers, i.e. hidden count + 1
    int template_hidden = 64;
    int template_layers = 4;
    float deform_scale = 0.1f;
    bool template_mode = true;    // shared templates fed local coords (vs latent-conditioned)
    bool use_deformation = true;
    Activation activation = Activation::silu;
    float head_init_scale = 0.1f;
    // Fixed scales on the head output. Encoder features are unnormalized,
    // so without them the head outputs move at lr * |features|_1 per
    // optimizer step. The existence logit gets a slower clock than the
    // affine/latent rows: a branch must not be able to saturate to dead
    // within one era, or it is culled faster than its template can localize.
    float head_output_scale = 0.05f;
    float existence_logit_scale = 0.01f;
    // Init value of each template's output bias: fresh templates start small
    // (sigmoid(-3) ~ 0.05) so a revived branch perturbs the standing model as
    // little as possible while it localizes.
    float template_output_bias = -3.0f;
    // Fixed pre-sigmoid gain on the template output. Occupancy boundaries
    // can only get as sharp as the template's logits are large; at short
    // training budgets the gain buys steep part boundaries without waiting
    // for the weights to grow.
    float template_output_gain = 1.0f;

    int conv_block_count() const;
    std::vector<int> resolved_channels() const;
    int head_input_dim() const { return 8 * resolved_channels().back(); }
    int head_slice_width() const { return kAffineSize + latent_dim + 1; }
    int head_output_dim() const { return branches * head_slice_width(); }
    int deform_input_dim() const { return 3 + latent_dim; }
    int template_input_dim() const { return template_mode ? 3 : 3 + latent_dim; }

    void validate() const;

    bool operator==(const ModelConfig&) const = default;
};

}  // namespace partfit
