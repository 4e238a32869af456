// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstring>
#include <cstdint>
#include <span>
#include <vector>

#include "partfit/model_config.hpp"
#include "partfit/rng.hpp"
#include "partfit/vec3.hpp"
#include "partfit/voxel_grid.hpp"

namespace partfit {

struct TensorRef {
    std::size_t offset = 0;
    std::size_t count = 0;
};

struct LinearDims {
    int in = 0;
    int out = 0;
};

// Flat parameter addressing. Storage order: conv blocks (weights then bias),
// head (weights then bias), then per branch: deformation layers (w, b), then
// template layers (w, b). Weights are stored with the output dimension
// contiguous: conv [Cin][4][4][4][Cout], linear [in][out]. Checkpoints write
// the flat vector in exactly this order.
struct ParamLayout {
    std::vector<TensorRef> conv_w, conv_b;
    std::vector<int> conv_in_ch, conv_out_ch;
    TensorRef head_w, head_b;
    std::vector<std::vector<TensorRef>> deform_w, deform_b;      // [branch][layer]
    std::vector<std::vector<TensorRef>> template_w, template_b;  // [branch][layer]
    std::vector<LinearDims> deform_dims, template_dims;          // per layer
    std::size_t total = 0;

    static ParamLayout build(const ModelConfig& config);

    /// Flat indices owned exclusively by one branch: its head slice columns
    /// plus its deformation and template layers. Ascending order.
    std::vector<std::size_t> branch_param_indices(const ModelConfig& config, int branch) const;
};

template <typename S>
struct ModelParams {
    ModelConfig config;
    ParamLayout layout;
    std::vector<S> values;
    std::vector<std::uint32_t> ages;  // eras since last revival, per branch

    std::span<S> tensor(const TensorRef& ref) {
        return std::span<S>(values.data() + ref.offset, ref.count);
    }
    std::span<const S> tensor(const TensorRef& ref) const {
        return std::span<const S>(values.data() + ref.offset, ref.count);
    }

    template <typename T>
    ModelParams<T> cast() const {
        ModelParams<T> out;
        out.config = config;
        out.layout = layout;
        out.ages = ages;
        out.values.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = static_cast<T>(values[i]);
        return out;
    }
};

namespace detail {

// Branch-free polynomial exp for the float path; pure IEEE arithmetic, so
// results are bit-identical across platforms and it auto-vectorizes inside
// the activation loops. Relative error ~2e-7 over the clamped range. The
// double path keeps std::exp: the finite-difference gradient checks run in
// double and want library-accurate transcendentals.
inline float fast_exp(float x) {
    x = x < -87.0f ? -87.0f : (x > 88.0f ? 88.0f : x);
    const float t = x * 1.44269504088896341f;  // x * log2(e)
    const float fi = std::floor(t);
    const float f = t - fi;
    // 2^f on [0, 1), degree-5 polynomial
    float p = 1.3333558146428443e-3f;
    p = p * f + 9.6181294091623446e-3f;
    p = p * f + 5.5504108664821580e-2f;
    p = p * f + 2.4022650695910071e-1f;
    p = p * f + 6.9314718055994531e-1f;
    p = p * f + 1.0f;
    const auto exponent = static_cast<std::int32_t>(fi);
    std::uint32_t bits = static_cast<std::uint32_t>(exponent + 127) << 23;
    float scale;
    std::memcpy(&scale, &bits, sizeof(scale));
    return p * scale;
}

// Branch-free: lowers to abs/blend and vectorizes alongside fast_exp.
inline float stable_sigmoid(float x) {
    const float ax = x >= 0.0f ? -x : x;
    const float e = fast_exp(ax);
    const float pos = 1.0f / (1.0f + e);
    return x >= 0.0f ? pos : 1.0f - pos;
}

template <typename S>
S stable_sigmoid(S x) {
    if (x >= S(0)) {
        return S(1) / (S(1) + std::exp(-x));
    }
    const S e = std::exp(x);
    return e / (S(1) + e);
}

template <typename S>
S activate(Activation a, S x) {
    switch (a) {
        case Activation::silu: return x * stable_sigmoid(x);
        case Activation::leaky_relu: return x >= S(0) ? x : S(0.02) * x;
        default: return x >= S(0) ? x : S(0);
    }
}

template <typename S>
S activate_grad(Activation a, S x) {
    switch (a) {
        case Activation::silu: {
            const S s = stable_sigmoid(x);
            return s * (S(1) + x * (S(1) - s));
        }
        case Activation::leaky_relu: return x >= S(0) ? S(1) : S(0.02);
        default: return x >= S(0) ? S(1) : S(0);
    }
}

// Array forms with the activation switch hoisted out of the loop so the
// element loops vectorize.
template <typename S>
void activate_array(Activation a, const S* pre, S* post, int n) {
    switch (a) {
        case Activation::silu:
            for (int i = 0; i < n; ++i) {
                const S s = stable_sigmoid(pre[i]);
                post[i] = pre[i] * s;
            }
            break;
        case Activation::leaky_relu:
            for (int i = 0; i < n; ++i) post[i] = pre[i] >= S(0) ? pre[i] : S(0.02) * pre[i];
            break;
        default:
            for (int i = 0; i < n; ++i) post[i] = pre[i] >= S(0) ? pre[i] : S(0);
            break;
    }
}

/// d_out[i] *= act'(pre[i])
template <typename S>
void activate_grad_array(Activation a, const S* pre, S* d_out, int n) {
    switch (a) {
        case Activation::silu:
            for (int i = 0; i < n; ++i) {
                const S s = stable_sigmoid(pre[i]);
                d_out[i] *= s * (S(1) + pre[i] * (S(1) - s));
            }
            break;
        case Activation::leaky_relu:
            for (int i = 0; i < n; ++i) d_out[i] *= pre[i] >= S(0) ? S(1) : S(0.02);
            break;
        default:
            for (int i = 0; i < n; ++i) d_out[i] *= pre[i] >= S(0) ? S(1) : S(0);
            break;
    }
}

// y[o] = b[o] + sum_i x[i] * W[i*out + o]. Four input rows per pass so the
// accumulator traffic on y is amortized.
template <typename S>
void linear_forward(const S* __restrict w, const S* __restrict b, const S* __restrict x,
                    S* __restrict y, int in, int out) {
    if (out == 1) {  // dot-product reduction over the input
        S acc = b[0];
        for (int i = 0; i < in; ++i) acc += x[i] * w[i];
        y[0] = acc;
        return;
    }
    for (int o = 0; o < out; ++o) y[o] = b[o];
    int i = 0;
    for (; i + 4 <= in; i += 4) {
        const S x0 = x[i], x1 = x[i + 1], x2 = x[i + 2], x3 = x[i + 3];
        const S* r0 = w + static_cast<std::size_t>(i) * out;
        const S* r1 = r0 + out;
        const S* r2 = r1 + out;
        const S* r3 = r2 + out;
        for (int o = 0; o < out; ++o) {
            y[o] += x0 * r0[o] + x1 * r1[o] + x2 * r2[o] + x3 * r3[o];
        }
    }
    for (; i < in; ++i) {
        const S xi = x[i];
        const S* row = w + static_cast<std::size_t>(i) * out;
        for (int o = 0; o < out; ++o) y[o] += xi * row[o];
    }
}

// dx[i] = sum_o W[i*out+o] * dy[o]; dW += x^T dy; db += dy. dx may be null.
template <typename S>
void linear_backward(const S* __restrict w, const S* __restrict x, const S* __restrict dy,
                     S* __restrict dw, S* __restrict db, S* __restrict dx, int in, int out) {
    if (out == 1) {  // axpy over the input
        const S g = dy[0];
        db[0] += g;
        if (dx != nullptr) {
            for (int i = 0; i < in; ++i) {
                dw[i] += x[i] * g;
                dx[i] = w[i] * g;
            }
        } else {
            for (int i = 0; i < in; ++i) dw[i] += x[i] * g;
        }
        return;
    }
    for (int o = 0; o < out; ++o) db[o] += dy[o];
    int i = 0;
    for (; i + 2 <= in; i += 2) {
        const S x0 = x[i], x1 = x[i + 1];
        const S* r0 = w + static_cast<std::size_t>(i) * out;
        const S* r1 = r0 + out;
        S* d0 = dw + static_cast<std::size_t>(i) * out;
        S* d1 = d0 + out;
        S acc0 = S(0), acc1 = S(0);
        for (int o = 0; o < out; ++o) {
            const S g = dy[o];
            d0[o] += x0 * g;
            d1[o] += x1 * g;
            acc0 += r0[o] * g;
            acc1 += r1[o] * g;
        }
        if (dx != nullptr) {
            dx[i] = acc0;
            dx[i + 1] = acc1;
        }
    }
    for (; i < in; ++i) {
        const S xi = x[i];
        const S* row = w + static_cast<std::size_t>(i) * out;
        S* drow = dw + static_cast<std::size_t>(i) * out;
        S acc = S(0);
        for (int o = 0; o < out; ++o) {
            drow[o] += xi * dy[o];
            acc += row[o] * dy[o];
        }
        if (dx != nullptr) dx[i] = acc;
    }
}

}  // namespace detail

/// p_local = A * [p; 1] with A a row-major 3x4 matrix.
template <typename S>
Vec3<S> transform_point(std::span<const S> affine, const Vec3<S>& p) {
    Vec3<S> out;
    for (int r = 0; r < 3; ++r) {
        out[r] = affine[4 * r + 0] * p.x + affine[4 * r + 1] * p.y + affine[4 * r + 2] * p.z +
                 affine[4 * r + 3];
    }
    return out;
}

template <typename S>
struct EncoderOutput {
    int branches = 0;
    int latent_dim = 0;
    std::vector<S> affine;         // branches x 12, identity already applied
    std::vector<S> latent;         // branches x latent_dim
    std::vector<S> existence;      // branches, sigmoid of raw head output
    std::vector<S> existence_raw;  // branches

    std::span<const S> affine_of(int i) const {
        return std::span<const S>(affine.data() + static_cast<std::size_t>(i) * 12, 12);
    }
    std::span<const S> latent_of(int i) const {
        return std::span<const S>(latent.data() + static_cast<std::size_t>(i) * latent_dim,
                                  latent_dim);
    }
};

template <typename S>
struct ForwardResult {
    int branches = 0;
    std::size_t point_count = 0;
    EncoderOutput<S> encoder;
    std::vector<S> branch_occupancy;  // branches x points
    std::vector<S> occupancy_sum;     // points
    std::vector<S> occupancy_max;     // points
    std::vector<int> argmax_branch;   // points, ties -> lowest index
    std::vector<Vec3<S>> offsets;     // branches x points, zero without deformation

    S occupancy_of(int branch, std::size_t point) const {
        return branch_occupancy[static_cast<std::size_t>(branch) * point_count + point];
    }
    const Vec3<S>& offset_of(int branch, std::size_t point) const {
        return offsets[static_cast<std::size_t>(branch) * point_count + point];
    }
};

/// Draws a fresh model. Parameter draw order is fixed: per branch in index
/// order (head slice, deformation layers, template layers), then the encoder
/// body; revive(i) consumes the per-branch section of the same stream, so
/// reviving every branch of any model with the init stream reproduces a fresh
/// model's branch parameters exactly.
template <typename S>
ModelParams<S> init_model(const ModelConfig& config, Pcg32& rng);

/// Re-draws D_i, G_i and head slice i from the init distribution; resets
/// age_i. Every other parameter is left bit-identical.
template <typename S>
void revive(ModelParams<S>& params, int branch, Pcg32& rng);

/// Encoder pass: conv stack, head, per-branch slices. A_i is [I|0] plus the
/// raw head residual; P_i is a sigmoid.
template <typename S>
EncoderOutput<S> encode(const ModelParams<S>& params, const VoxelGrid& grid);

/// Deformation MLP of one branch: offset = scale * D_i(p_local, z), deformed
/// point = p_local + offset.
template <typename S>
void deform(const ModelParams<S>& params, int branch, const Vec3<S>& p_local,
            std::span<const S> latent, Vec3<S>& offset, Vec3<S>& deformed);

/// Template occupancy of one branch gated by the existence score:
/// O_i = P_i * sigmoid(G_i(input)). In template mode the input is the
/// deformed local point; otherwise the point is concatenated with the latent.
template <typename S>
S branch_occupancy(const ModelParams<S>& params, int branch, const Vec3<S>& p_hat,
                   std::span<const S> latent, S existence);

/// Full forward pass over a point list.
template <typename S>
ForwardResult<S> forward(const ModelParams<S>& params, const VoxelGrid& grid,
                         std::span<const Vec3f> points);

extern template ModelParams<float> init_model<float>(const ModelConfig&, Pcg32&);
extern template ModelParams<double> init_model<double>(const ModelConfig&, Pcg32&);
extern template void revive<float>(ModelParams<float>&, int, Pcg32&);
extern template void revive<double>(ModelParams<double>&, int, Pcg32&);
extern template EncoderOutput<float> encode<float>(const ModelParams<float>&, const VoxelGrid&);
extern template EncoderOutput<double> encode<double>(const ModelParams<double>&, const VoxelGrid&);
extern template void deform<float>(const ModelParams<float>&, int, const Vec3<float>&,
                                   std::span<const float>, Vec3<float>&, Vec3<float>&);
extern template void deform<double>(const ModelParams<double>&, int, const Vec3<double>&,
                                    std::span<const double>, Vec3<double>&, Vec3<double>&);
extern template float branch_occupancy<float>(const ModelParams<float>&, int, const Vec3<float>&,
                                              std::span<const float>, float);
extern template double branch_occupancy<double>(const ModelParams<double>&, int,
                                                const Vec3<double>&, std::span<const double>,
                                                double);
extern template ForwardResult<float> forward<float>(const ModelParams<float>&, const VoxelGrid&,
                                                    std::span<const Vec3f>);
extern template ForwardResult<double> forward<double>(const ModelParams<double>&, const VoxelGrid&,
                                                      std::span<const Vec3f>);

}  // namespace partfit
