// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/checkpoint.hpp"

#include <fstream>

#include "io_util.hpp"
#include "partfit/error.hpp"

namespace partfit {

namespace {
constexpr char kMagic[4] = {'P', 'F', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params,
                     const AdamState<float>* optimizer) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(cat("cannot write checkpoint: ", path.string()));
    io::Writer w(os);

    w.bytes(kMagic, 4);
    w.u32(kVersion);

    const ModelConfig& cfg = params.config;
    w.u32(static_cast<std::uint32_t>(cfg.branches));
    w.u32(static_cast<std::uint32_t>(cfg.resolution));
    const auto channels = cfg.resolved_channels();
    w.u32(static_cast<std::uint32_t>(channels.size()));
    for (int c : channels) w.u32(static_cast<std::uint32_t>(c));
    w.u32(static_cast<std::uint32_t>(cfg.latent_dim));
    w.u32(static_cast<std::uint32_t>(cfg.deform_hidden));
    w.u32(static_cast<std::uint32_t>(cfg.deform_layers));
    w.u32(static_cast<std::uint32_t>(cfg.template_hidden));
    w.u32(static_cast<std::uint32_t>(cfg.template_layers));
    w.f32(cfg.deform_scale);
    w.u8(cfg.template_mode ? 1 : 0);
    w.u8(cfg.use_deformation ? 1 : 0);
    w.u8(static_cast<std::uint8_t>(cfg.activation));
    w.f32(cfg.head_init_scale);
    w.f32(cfg.head_output_scale);
    w.f32(cfg.existence_logit_scale);
    w.f32(cfg.template_output_bias);
    w.f32(cfg.template_output_gain);

    w.u64(static_cast<std::uint64_t>(params.values.size()));
    w.bytes(params.values.data(), params.values.size() * sizeof(float));
    for (std::uint32_t age : params.ages) w.u32(age);

    if (optimizer != nullptr) {
        w.u8(1);
        w.u64(optimizer->step_count);
        w.f32(static_cast<float>(optimizer->config.learning_rate));
        w.f32(static_cast<float>(optimizer->config.beta1));
        w.f32(static_cast<float>(optimizer->config.beta2));
        w.f32(static_cast<float>(optimizer->config.epsilon));
        w.bytes(optimizer->m.data(), optimizer->m.size() * sizeof(float));
        w.bytes(optimizer->v.data(), optimizer->v.size() * sizeof(float));
    } else {
        w.u8(0);
    }
    if (!os) throw Error(cat("write failed: ", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(cat("cannot open checkpoint: ", path.string()));
    io::Reader r(is, cat("checkpoint ", path.string()));

    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(cat("malformed header: bad magic bytes in ", path.string()));
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError(cat("unknown checkpoint version ", version, " in ", path.string()));
    }

    ModelConfig cfg;
    cfg.branches = static_cast<int>(r.u32());
    cfg.resolution = static_cast<int>(r.u32());
    const std::uint32_t n_blocks = r.u32();
    cfg.encoder_channels.resize(n_blocks);
    for (auto& c : cfg.encoder_channels) c = static_cast<int>(r.u32());
    cfg.latent_dim = static_cast<int>(r.u32());
    cfg.deform_hidden = static_cast<int>(r.u32());
    cfg.deform_layers = static_cast<int>(r.u32());
    cfg.template_hidden = static_cast<int>(r.u32());
    cfg.template_layers = static_cast<int>(r.u32());
    cfg.deform_scale = r.f32();
    cfg.template_mode = r.u8() != 0;
    cfg.use_deformation = r.u8() != 0;
    cfg.activation = static_cast<Activation>(r.u8());
    cfg.head_init_scale = r.f32();
    cfg.head_output_scale = r.f32();
    cfg.existence_logit_scale = r.f32();
    cfg.template_output_bias = r.f32();
    cfg.template_output_gain = r.f32();
    cfg.validate();

    Checkpoint ck;
    ck.params.config = cfg;
    ck.params.layout = ParamLayout::build(cfg);
    const std::uint64_t n_values = r.u64();
    if (n_values != ck.params.layout.total) {
        throw FormatError(cat("checkpoint parameter count ", n_values, " does not match layout ",
                              ck.params.layout.total));
    }
    ck.params.values.resize(n_values);
    r.bytes(ck.params.values.data(), n_values * sizeof(float));
    ck.params.ages.resize(static_cast<std::size_t>(cfg.branches));
    for (auto& age : ck.params.ages) age = r.u32();

    if (r.u8() != 0) {
        AdamState<float> opt(ck.params.values.size());
        opt.step_count = r.u64();
        opt.config.learning_rate = r.f32();
        opt.config.beta1 = r.f32();
        opt.config.beta2 = r.f32();
        opt.config.epsilon = r.f32();
        r.bytes(opt.m.data(), opt.m.size() * sizeof(float));
        r.bytes(opt.v.data(), opt.v.size() * sizeof(float));
        ck.optimizer = std::move(opt);
    }
    if (!r.at_eof()) throw FormatError(cat("trailing bytes in checkpoint ", path.string()));
    return ck;
}

}  // namespace partfit
