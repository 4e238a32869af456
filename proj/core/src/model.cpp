// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/model.hpp"

#include <algorithm>
#include <cmath>

#include "network_kernels.hpp"
#include "partfit/error.hpp"

namespace partfit {

namespace {

std::size_t add_tensor(std::size_t& cursor, std::size_t count, TensorRef& ref) {
    ref.offset = cursor;
    ref.count = count;
    cursor += count;
    return count;
}

std::vector<LinearDims> mlp_dims(int input, int hidden, int layers, int output) {
    std::vector<LinearDims> dims(static_cast<std::size_t>(layers));
    for (int l = 0; l < layers; ++l) {
        dims[l].in = l == 0 ? input : hidden;
        dims[l].out = l == layers - 1 ? output : hidden;
    }
    return dims;
}

}  // namespace

ParamLayout ParamLayout::build(const ModelConfig& config) {
    config.validate();
    ParamLayout layout;
    std::size_t cursor = 0;

    const auto channels = config.resolved_channels();
    int c_in = 1;
    for (int c_out : channels) {
        layout.conv_in_ch.push_back(c_in);
        layout.conv_out_ch.push_back(c_out);
        TensorRef w, b;
        add_tensor(cursor, static_cast<std::size_t>(c_in) * 64 * c_out, w);
        add_tensor(cursor, static_cast<std::size_t>(c_out), b);
        layout.conv_w.push_back(w);
        layout.conv_b.push_back(b);
        c_in = c_out;
    }

    add_tensor(cursor, static_cast<std::size_t>(config.head_input_dim()) * config.head_output_dim(),
               layout.head_w);
    add_tensor(cursor, static_cast<std::size_t>(config.head_output_dim()), layout.head_b);

    layout.deform_dims = mlp_dims(config.deform_input_dim(), config.deform_hidden,
                                  config.deform_layers, 3);
    layout.template_dims = mlp_dims(config.template_input_dim(), config.template_hidden,
                                    config.template_layers, 1);

    layout.deform_w.resize(static_cast<std::size_t>(config.branches));
    layout.deform_b.resize(static_cast<std::size_t>(config.branches));
    layout.template_w.resize(static_cast<std::size_t>(config.branches));
    layout.template_b.resize(static_cast<std::size_t>(config.branches));
    for (int i = 0; i < config.branches; ++i) {
        for (const auto& d : layout.deform_dims) {
            TensorRef w, b;
            add_tensor(cursor, static_cast<std::size_t>(d.in) * d.out, w);
            add_tensor(cursor, static_cast<std::size_t>(d.out), b);
            layout.deform_w[i].push_back(w);
            layout.deform_b[i].push_back(b);
        }
        for (const auto& d : layout.template_dims) {
            TensorRef w, b;
            add_tensor(cursor, static_cast<std::size_t>(d.in) * d.out, w);
            add_tensor(cursor, static_cast<std::size_t>(d.out), b);
            layout.template_w[i].push_back(w);
            layout.template_b[i].push_back(b);
        }
    }
    layout.total = cursor;
    return layout;
}

std::vector<std::size_t> ParamLayout::branch_param_indices(const ModelConfig& config,
                                                           int branch) const {
    std::vector<std::size_t> out;
    const int sw = config.head_slice_width();
    const int head_out = config.head_output_dim();
    const int head_in = config.head_input_dim();
    for (int f = 0; f < head_in; ++f) {
        for (int r = 0; r < sw; ++r) {
            out.push_back(head_w.offset + static_cast<std::size_t>(f) * head_out +
                          static_cast<std::size_t>(branch) * sw + r);
        }
    }
    for (int r = 0; r < sw; ++r) {
        out.push_back(head_b.offset + static_cast<std::size_t>(branch) * sw + r);
    }
    auto add_range = [&out](const TensorRef& ref) {
        for (std::size_t k = 0; k < ref.count; ++k) out.push_back(ref.offset + k);
    };
    for (const auto& ref : deform_w[branch]) add_range(ref);
    for (const auto& ref : deform_b[branch]) add_range(ref);
    for (const auto& ref : template_w[branch]) add_range(ref);
    for (const auto& ref : template_b[branch]) add_range(ref);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

// Fan-in-scaled uniform draw into one linear/conv weight tensor, storage
// order; biases are zero-initialized and consume no draws.
template <typename S>
void draw_uniform(std::span<S> dst, double scale, Pcg32& rng) {
    for (auto& v : dst) v = static_cast<S>(rng.uniform(-scale, scale));
}

template <typename S>
void draw_branch(ModelParams<S>& params, int branch, Pcg32& rng) {
    const ModelConfig& cfg = params.config;
    const ParamLayout& layout = params.layout;
    const int sw = cfg.head_slice_width();
    const int head_in = cfg.head_input_dim();
    const int head_out = cfg.head_output_dim();

    // Head slice: residual scale keeps A_i near [I|0]. The existence row is
    // zeroed entirely so P_i starts at exactly 0.5 on every shape; otherwise
    // a branch revived late in training inherits saturated scores from the
    // grown encoder features and is immediately declared dead again.
    const double head_scale = cfg.head_init_scale / std::sqrt(static_cast<double>(head_in));
    const int existence_row = 12 + cfg.latent_dim;
    S* head_w = params.values.data() + layout.head_w.offset;
    for (int f = 0; f < head_in; ++f) {
        for (int r = 0; r < sw; ++r) {
            const S value = static_cast<S>(rng.uniform(-head_scale, head_scale));
            head_w[static_cast<std::size_t>(f) * head_out + static_cast<std::size_t>(branch) * sw + r] =
                r == existence_row ? S(0) : value;
        }
    }
    for (int r = 0; r < sw; ++r) {
        params.values[layout.head_b.offset + static_cast<std::size_t>(branch) * sw + r] = S(0);
    }

    for (std::size_t l = 0; l < layout.deform_dims.size(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(layout.deform_dims[l].in));
        draw_uniform(params.tensor(layout.deform_w[branch][l]), scale, rng);
        std::fill_n(params.values.begin() + static_cast<std::ptrdiff_t>(layout.deform_b[branch][l].offset),
                    layout.deform_b[branch][l].count, S(0));
    }
    for (std::size_t l = 0; l < layout.template_dims.size(); ++l) {
        const double scale = 1.0 / std::sqrt(static_cast<double>(layout.template_dims[l].in));
        draw_uniform(params.tensor(layout.template_w[branch][l]), scale, rng);
        std::fill_n(params.values.begin() + static_cast<std::ptrdiff_t>(layout.template_b[branch][l].offset),
                    layout.template_b[branch][l].count, S(0));
    }
    const auto& g_out_b = layout.template_b[branch].back();
    params.values[g_out_b.offset] =
        static_cast<S>(cfg.template_output_bias / cfg.template_output_gain);
}

}  // namespace

template <typename S>
ModelParams<S> init_model(const ModelConfig& config, Pcg32& rng) {
    ModelParams<S> params;
    params.config = config;
    params.layout = ParamLayout::build(config);
    params.values.assign(params.layout.total, S(0));
    params.ages.assign(static_cast<std::size_t>(config.branches), 0);

    for (int i = 0; i < config.branches; ++i) draw_branch(params, i, rng);

    for (std::size_t b = 0; b < params.layout.conv_w.size(); ++b) {
        const double fan_in = static_cast<double>(params.layout.conv_in_ch[b]) * 64.0;
        draw_uniform(params.tensor(params.layout.conv_w[b]), 1.0 / std::sqrt(fan_in), rng);
    }
    return params;
}

template <typename S>
void revive(ModelParams<S>& params, int branch, Pcg32& rng) {
    if (branch < 0 || branch >= params.config.branches) {
        throw Error(cat("revive: branch index ", branch, " out of range [0, ",
                        params.config.branches, ")"));
    }
    draw_branch(params, branch, rng);
    params.ages[static_cast<std::size_t>(branch)] = 0;
}

template <typename S>
EncoderOutput<S> encode(const ModelParams<S>& params, const VoxelGrid& grid) {
    if (grid.resolution() != params.config.resolution) {
        throw Error(cat("encode: grid resolution ", grid.resolution(),
                        " does not match model resolution ", params.config.resolution));
    }
    kernels::EncoderTrace<S> trace;
    kernels::encoder_forward(params, grid, trace);
    return kernels::head_to_output(params.config, trace.head_out);
}

template <typename S>
void deform(const ModelParams<S>& params, int branch, const Vec3<S>& p_local,
            std::span<const S> latent, Vec3<S>& offset, Vec3<S>& deformed) {
    const auto mlp = kernels::make_mlp_view(params, params.layout.deform_w[branch],
                                            params.layout.deform_b[branch], params.layout.deform_dims);
    S input[16];
    input[0] = p_local.x;
    input[1] = p_local.y;
    input[2] = p_local.z;
    for (int l = 0; l < params.config.latent_dim; ++l) input[3 + l] = latent[l];
    std::vector<S> pre(static_cast<std::size_t>(mlp.hidden_total));
    std::vector<S> post(static_cast<std::size_t>(mlp.hidden_total));
    S raw[3];
    kernels::mlp_forward(mlp, params.config.activation, input, pre.data(), post.data(), raw);
    const S scale = static_cast<S>(params.config.deform_scale);
    offset = {scale * raw[0], scale * raw[1], scale * raw[2]};
    deformed = p_local + offset;
}

template <typename S>
S branch_occupancy(const ModelParams<S>& params, int branch, const Vec3<S>& p_hat,
                   std::span<const S> latent, S existence) {
    const auto mlp = kernels::make_mlp_view(params, params.layout.template_w[branch],
                                            params.layout.template_b[branch],
                                            params.layout.template_dims);
    S input[16];
    input[0] = p_hat.x;
    input[1] = p_hat.y;
    input[2] = p_hat.z;
    if (!params.config.template_mode) {
        for (int l = 0; l < params.config.latent_dim; ++l) input[3 + l] = latent[l];
    }
    std::vector<S> pre(static_cast<std::size_t>(mlp.hidden_total));
    std::vector<S> post(static_cast<std::size_t>(mlp.hidden_total));
    S raw;
    kernels::mlp_forward(mlp, params.config.activation, input, pre.data(), post.data(), &raw);
    return existence * detail::stable_sigmoid(static_cast<S>(params.config.template_output_gain) * raw);
}

template <typename S>
ForwardResult<S> forward(const ModelParams<S>& params, const VoxelGrid& grid,
                         std::span<const Vec3f> points) {
    const ModelConfig& cfg = params.config;
    ForwardResult<S> result;
    result.branches = cfg.branches;
    result.point_count = points.size();
    result.encoder = encode(params, grid);
    result.branch_occupancy.assign(static_cast<std::size_t>(cfg.branches) * points.size(), S(0));
    result.occupancy_sum.assign(points.size(), S(0));
    result.occupancy_max.assign(points.size(), S(0));
    result.argmax_branch.assign(points.size(), 0);
    result.offsets.assign(static_cast<std::size_t>(cfg.branches) * points.size(), Vec3<S>{});

    kernels::BranchScratch<S> scratch;
    scratch.init(params);
    const S scale = static_cast<S>(cfg.deform_scale);
    for (std::size_t p = 0; p < points.size(); ++p) {
        S sum, best;
        int best_branch;
        kernels::eval_point(params, result.encoder, points[p], scratch, sum, best, best_branch);
        for (int i = 0; i < cfg.branches; ++i) {
            const std::size_t bi = static_cast<std::size_t>(i);
            result.branch_occupancy[bi * points.size() + p] = scratch.occ[bi];
            if (cfg.use_deformation) {
                const S* raw = scratch.d_raw.data() + bi * 3;
                result.offsets[bi * points.size() + p] = {scale * raw[0], scale * raw[1],
                                                          scale * raw[2]};
            }
        }
        result.occupancy_sum[p] = sum;
        result.occupancy_max[p] = best;
        result.argmax_branch[p] = best_branch;
    }
    return result;
}

template ModelParams<float> init_model<float>(const ModelConfig&, Pcg32&);
template ModelParams<double> init_model<double>(const ModelConfig&, Pcg32&);
template void revive<float>(ModelParams<float>&, int, Pcg32&);
template void revive<double>(ModelParams<double>&, int, Pcg32&);
template EncoderOutput<float> encode<float>(const ModelParams<float>&, const VoxelGrid&);
template EncoderOutput<double> encode<double>(const ModelParams<double>&, const VoxelGrid&);
template void deform<float>(const ModelParams<float>&, int, const Vec3<float>&,
                            std::span<const float>, Vec3<float>&, Vec3<float>&);
template void deform<double>(const ModelParams<double>&, int, const Vec3<double>&,
                             std::span<const double>, Vec3<double>&, Vec3<double>&);
template float branch_occupancy<float>(const ModelParams<float>&, int, const Vec3<float>&,
                                       std::span<const float>, float);
template double branch_occupancy<double>(const ModelParams<double>&, int, const Vec3<double>&,
                                         std::span<const double>, double);
template ForwardResult<float> forward<float>(const ModelParams<float>&, const VoxelGrid&,
                                             std::span<const Vec3f>);
template ForwardResult<double> forward<double>(const ModelParams<double>&, const VoxelGrid&,
                                               std::span<const Vec3f>);

}  // namespace partfit
