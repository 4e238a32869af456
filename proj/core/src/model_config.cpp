// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/model_config.hpp"

#include "partfit/voxel_grid.hpp"

namespace partfit {

Activation activation_from_string(const std::string& s) {
    if (s == "silu") return Activation::silu;
    if (s == "leaky_relu") return Activation::leaky_relu;
    if (s == "relu") return Activation::relu;
    throw ConfigError(cat("unknown activation '", s, "' (silu|leaky_relu|relu)"));
}

const char* to_string(Activation a) {
    switch (a) {
        case Activation::silu: return "silu";
        case Activation::leaky_relu: return "leaky_relu";
        default: return "relu";
    }
}

int ModelConfig::conv_block_count() const {
    int blocks = 0;
    for (int r = resolution; r > 2; r /= 2) ++blocks;
    return blocks;
}

std::vector<int> ModelConfig::resolved_channels() const {
    if (!encoder_channels.empty()) return encoder_channels;
    std::vector<int> channels(static_cast<std::size_t>(conv_block_count()));
    for (std::size_t b = 0; b < channels.size(); ++b) {
        channels[b] = std::min(256, 16 << b);
    }
    return channels;
}

void ModelConfig::validate() const {
    if (branches < 1) throw ConfigError("model: branches must be >= 1");
    if (!VoxelGrid::valid_resolution(resolution)) {
        throw ConfigError(cat("model: invalid resolution ", resolution));
    }
    if (latent_dim < 1 || latent_dim > 12) {
        throw ConfigError("model: latent_dim must be in [1, 12]");
    }
    if (deform_hidden < 1 || template_hidden < 1) {
        throw ConfigError("model: hidden widths must be >= 1");
    }
    if (deform_layers < 2 || template_layers < 2) {
        throw ConfigError("model: MLPs need at least one hidden layer");
    }
    if (deform_layers > 8 || template_layers > 8) {
        throw ConfigError("model: MLPs support at most 8 layers");
    }
    if (deform_hidden > 256 || template_hidden > 256) {
        throw ConfigError("model: hidden widths support at most 256 units");
    }
    if (head_output_scale <= 0.0f || existence_logit_scale <= 0.0f) {
        throw ConfigError("model: head output scales must be positive");
    }
    if (template_output_gain <= 0.0f) {
        throw ConfigError("model: template_output_gain must be positive");
    }
    const auto channels = resolved_channels();
    if (static_cast<int>(channels.size()) != conv_block_count()) {
        throw ConfigError(cat("model: encoder_channels must list ", conv_block_count(),
                              " blocks for resolution ", resolution, ", got ", channels.size()));
    }
    for (int c : channels) {
        if (c < 1) throw ConfigError("model: encoder channel counts must be >= 1");
    }
}

}  // namespace partfit
