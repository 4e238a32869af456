// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Internal dense kernels for the branched autoencoder. Weight layouts keep
// the output dimension contiguous so the inner loops vectorize: conv weights
// are [Cin][4][4][4][Cout], linear weights [in][out].

#include <cstddef>
#include <vector>

#include "partfit/model.hpp"

namespace partfit::kernels {

// ---------------------------------------------------------------------------
// stride-2, pad-1, kernel-4 conv blocks

// in: [Cin][D][D][D], pre: [Cout][D/2][D/2][D/2]
template <typename S>
void conv_forward(const S* in, const S* w, const S* b, S* pre, int c_in, int c_out, int d_in) {
    const int d_out = d_in / 2;
    const std::size_t in_plane = static_cast<std::size_t>(d_in) * d_in;
    const std::size_t in_vol = in_plane * d_in;
    const std::size_t out_vol = static_cast<std::size_t>(d_out) * d_out * d_out;
    std::vector<S> acc(static_cast<std::size_t>(c_out));

    for (int oz = 0; oz < d_out; ++oz) {
        for (int oy = 0; oy < d_out; ++oy) {
            for (int ox = 0; ox < d_out; ++ox) {
                for (int oc = 0; oc < c_out; ++oc) acc[oc] = b[oc];
                const int ix0 = 2 * ox - 1;
                const bool x_interior = ix0 >= 0 && ix0 + 3 < d_in;
                for (int ic = 0; ic < c_in; ++ic) {
                    const S* in_c = in + static_cast<std::size_t>(ic) * in_vol;
                    for (int kz = 0; kz < 4; ++kz) {
                        const int iz = 2 * oz - 1 + kz;
                        if (iz < 0 || iz >= d_in) continue;
                        for (int ky = 0; ky < 4; ++ky) {
                            const int iy = 2 * oy - 1 + ky;
                            if (iy < 0 || iy >= d_in) continue;
                            const S* in_row = in_c + static_cast<std::size_t>(iz) * in_plane +
                                              static_cast<std::size_t>(iy) * d_in;
                            const S* w_row =
                                w + ((static_cast<std::size_t>(ic) * 4 + kz) * 4 + ky) * 4 * c_out;
                            if (x_interior) {
                                // the 4 kx taps read 4 consecutive inputs
                                const S v0 = in_row[ix0], v1 = in_row[ix0 + 1];
                                const S v2 = in_row[ix0 + 2], v3 = in_row[ix0 + 3];
                                const S* w0 = w_row;
                                const S* w1 = w0 + c_out;
                                const S* w2 = w1 + c_out;
                                const S* w3 = w2 + c_out;
                                for (int oc = 0; oc < c_out; ++oc) {
                                    acc[oc] += v0 * w0[oc] + v1 * w1[oc] + v2 * w2[oc] + v3 * w3[oc];
                                }
                            } else {
                                for (int kx = 0; kx < 4; ++kx) {
                                    const int ix = ix0 + kx;
                                    if (ix < 0 || ix >= d_in) continue;
                                    const S v = in_row[ix];
                                    const S* wk = w_row + static_cast<std::size_t>(kx) * c_out;
                                    for (int oc = 0; oc < c_out; ++oc) acc[oc] += v * wk[oc];
                                }
                            }
                        }
                    }
                }
                const std::size_t o = (static_cast<std::size_t>(oz) * d_out + oy) * d_out + ox;
                for (int oc = 0; oc < c_out; ++oc) pre[static_cast<std::size_t>(oc) * out_vol + o] = acc[oc];
            }
        }
    }
}

// d_pre: [Cout][D/2]^3 gradient at the pre-activation. Accumulates dw, db and
// (when d_in_grad is non-null) the input gradient.
template <typename S>
void conv_backward(const S* in, const S* w, const S* d_pre, S* dw, S* db, S* d_in_grad, int c_in,
                   int c_out, int d_in) {
    const int d_out = d_in / 2;
    const std::size_t in_plane = static_cast<std::size_t>(d_in) * d_in;
    const std::size_t in_vol = in_plane * d_in;
    const std::size_t out_vol = static_cast<std::size_t>(d_out) * d_out * d_out;
    std::vector<S> dvec(static_cast<std::size_t>(c_out));

    for (int oz = 0; oz < d_out; ++oz) {
        for (int oy = 0; oy < d_out; ++oy) {
            for (int ox = 0; ox < d_out; ++ox) {
                const std::size_t o = (static_cast<std::size_t>(oz) * d_out + oy) * d_out + ox;
                for (int oc = 0; oc < c_out; ++oc) {
                    dvec[oc] = d_pre[static_cast<std::size_t>(oc) * out_vol + o];
                    db[oc] += dvec[oc];
                }
                const int ix0 = 2 * ox - 1;
                const bool x_interior = ix0 >= 0 && ix0 + 3 < d_in;
                for (int ic = 0; ic < c_in; ++ic) {
                    const S* in_c = in + static_cast<std::size_t>(ic) * in_vol;
                    S* din_c = d_in_grad == nullptr
                                   ? nullptr
                                   : d_in_grad + static_cast<std::size_t>(ic) * in_vol;
                    for (int kz = 0; kz < 4; ++kz) {
                        const int iz = 2 * oz - 1 + kz;
                        if (iz < 0 || iz >= d_in) continue;
                        for (int ky = 0; ky < 4; ++ky) {
                            const int iy = 2 * oy - 1 + ky;
                            if (iy < 0 || iy >= d_in) continue;
                            const std::size_t row_off =
                                static_cast<std::size_t>(iz) * in_plane + static_cast<std::size_t>(iy) * d_in;
                            const std::size_t w_off =
                                ((static_cast<std::size_t>(ic) * 4 + kz) * 4 + ky) * 4 * c_out;
                            if (x_interior) {
                                const S v0 = in_c[row_off + ix0], v1 = in_c[row_off + ix0 + 1];
                                const S v2 = in_c[row_off + ix0 + 2], v3 = in_c[row_off + ix0 + 3];
                                const S* w0 = w + w_off;
                                const S* w1 = w0 + c_out;
                                const S* w2 = w1 + c_out;
                                const S* w3 = w2 + c_out;
                                S* dw0 = dw + w_off;
                                S* dw1 = dw0 + c_out;
                                S* dw2 = dw1 + c_out;
                                S* dw3 = dw2 + c_out;
                                S a0 = S(0), a1 = S(0), a2 = S(0), a3 = S(0);
                                for (int oc = 0; oc < c_out; ++oc) {
                                    const S g = dvec[oc];
                                    dw0[oc] += v0 * g;
                                    dw1[oc] += v1 * g;
                                    dw2[oc] += v2 * g;
                                    dw3[oc] += v3 * g;
                                    a0 += w0[oc] * g;
                                    a1 += w1[oc] * g;
                                    a2 += w2[oc] * g;
                                    a3 += w3[oc] * g;
                                }
                                if (din_c != nullptr) {
                                    din_c[row_off + ix0] += a0;
                                    din_c[row_off + ix0 + 1] += a1;
                                    din_c[row_off + ix0 + 2] += a2;
                                    din_c[row_off + ix0 + 3] += a3;
                                }
                            } else {
                                for (int kx = 0; kx < 4; ++kx) {
                                    const int ix = ix0 + kx;
                                    if (ix < 0 || ix >= d_in) continue;
                                    const S v = in_c[row_off + ix];
                                    const S* wk = w + w_off + static_cast<std::size_t>(kx) * c_out;
                                    S* dwk = dw + w_off + static_cast<std::size_t>(kx) * c_out;
                                    S acc = S(0);
                                    for (int oc = 0; oc < c_out; ++oc) {
                                        dwk[oc] += v * dvec[oc];
                                        acc += wk[oc] * dvec[oc];
                                    }
                                    if (din_c != nullptr) din_c[row_off + ix] += acc;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// encoder

template <typename S>
struct EncoderTrace {
    std::vector<S> grid_values;        // [1][R][R][R]
    std::vector<std::vector<S>> pre;   // per block, [C][D][D][D]
    std::vector<std::vector<S>> post;  // act(pre)
    std::vector<S> head_in;            // RMS-normalized flat features
    S head_in_rms = S(1);
    std::vector<S> head_out;
};

template <typename S>
void encoder_forward(const ModelParams<S>& params, const VoxelGrid& grid, EncoderTrace<S>& trace) {
    const ModelConfig& cfg = params.config;
    const ParamLayout& layout = params.layout;
    const int blocks = static_cast<int>(layout.conv_w.size());
    const Activation act = cfg.activation;

    const auto& cells = grid.cells();
    trace.grid_values.resize(cells.size());
    for (std::size_t i = 0; i < cells.size(); ++i) trace.grid_values[i] = static_cast<S>(cells[i]);

    trace.pre.resize(blocks);
    trace.post.resize(blocks);
    int dim = cfg.resolution;
    const S* input = trace.grid_values.data();
    for (int b = 0; b < blocks; ++b) {
        const int c_in = layout.conv_in_ch[b];
        const int c_out = layout.conv_out_ch[b];
        const int d_out = dim / 2;
        const std::size_t n = static_cast<std::size_t>(c_out) * d_out * d_out * d_out;
        trace.pre[b].resize(n);
        trace.post[b].resize(n);
        conv_forward(input, params.tensor(layout.conv_w[b]).data(),
                     params.tensor(layout.conv_b[b]).data(), trace.pre[b].data(), c_in, c_out, dim);
        detail::activate_array(act, trace.pre[b].data(), trace.post[b].data(), static_cast<int>(n));
        input = trace.post[b].data();
        dim = d_out;
    }

    // RMS-normalize the flat features so the head sees an input of stable
    // scale no matter how large the conv activations grow during training.
    const int head_in = cfg.head_input_dim();
    const int head_out = cfg.head_output_dim();
    const auto& flat = trace.post.back();
    S mean_sq = S(0);
    for (int i = 0; i < head_in; ++i) mean_sq += flat[i] * flat[i];
    mean_sq /= static_cast<S>(head_in);
    trace.head_in_rms = std::sqrt(mean_sq + S(1e-6));
    trace.head_in.resize(static_cast<std::size_t>(head_in));
    const S inv = S(1) / trace.head_in_rms;
    for (int i = 0; i < head_in; ++i) trace.head_in[i] = flat[i] * inv;

    trace.head_out.resize(static_cast<std::size_t>(head_out));
    detail::linear_forward(params.tensor(layout.head_w).data(), params.tensor(layout.head_b).data(),
                           trace.head_in.data(), trace.head_out.data(), head_in, head_out);
}

template <typename S>
EncoderOutput<S> head_to_output(const ModelConfig& cfg, const std::vector<S>& head_out) {
    EncoderOutput<S> out;
    out.branches = cfg.branches;
    out.latent_dim = cfg.latent_dim;
    out.affine.resize(static_cast<std::size_t>(cfg.branches) * 12);
    out.latent.resize(static_cast<std::size_t>(cfg.branches) * cfg.latent_dim);
    out.existence.resize(static_cast<std::size_t>(cfg.branches));
    out.existence_raw.resize(static_cast<std::size_t>(cfg.branches));
    const int sw = 12 + cfg.latent_dim + 1;
    const S scale = static_cast<S>(cfg.head_output_scale);
    for (int i = 0; i < cfg.branches; ++i) {
        const S* slice = head_out.data() + static_cast<std::size_t>(i) * sw;
        S* a = out.affine.data() + static_cast<std::size_t>(i) * 12;
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 4; ++c) {
                a[4 * r + c] = scale * slice[4 * r + c] + (r == c ? S(1) : S(0));
            }
        }
        for (int l = 0; l < cfg.latent_dim; ++l) {
            out.latent[static_cast<std::size_t>(i) * cfg.latent_dim + l] = scale * slice[12 + l];
        }
        out.existence_raw[i] =
            static_cast<S>(cfg.existence_logit_scale) * slice[12 + cfg.latent_dim];
        out.existence[i] = detail::stable_sigmoid(out.existence_raw[i]);
    }
    return out;
}

// Backward from the gradient at the head output through head and conv stack.
// scratch vectors are resized as needed; grad is the flat parameter gradient.
template <typename S>
void encoder_backward(const ModelParams<S>& params, const EncoderTrace<S>& trace,
                      const std::vector<S>& d_head_out, std::vector<S>& grad,
                      std::vector<std::vector<S>>& d_post_scratch) {
    const ModelConfig& cfg = params.config;
    const ParamLayout& layout = params.layout;
    const int blocks = static_cast<int>(layout.conv_w.size());
    const Activation act = cfg.activation;

    d_post_scratch.resize(blocks);
    for (int b = 0; b < blocks; ++b) {
        d_post_scratch[b].assign(trace.post[b].size(), S(0));
    }

    // head, then back through the RMS normalization:
    // f_hat = f / r with r = sqrt(mean(f^2) + eps), so
    // df = (1/r) * (g - f_hat * <g, f_hat> / F)
    const int head_in = cfg.head_input_dim();
    std::vector<S> d_head_in(static_cast<std::size_t>(head_in), S(0));
    detail::linear_backward(params.tensor(layout.head_w).data(), trace.head_in.data(),
                            d_head_out.data(), grad.data() + layout.head_w.offset,
                            grad.data() + layout.head_b.offset, d_head_in.data(),
                            head_in, cfg.head_output_dim());
    S dot = S(0);
    for (int i = 0; i < head_in; ++i) dot += d_head_in[i] * trace.head_in[i];
    dot /= static_cast<S>(head_in);
    const S inv_rms = S(1) / trace.head_in_rms;
    S* d_flat = d_post_scratch[blocks - 1].data();
    for (int i = 0; i < head_in; ++i) {
        d_flat[i] = inv_rms * (d_head_in[i] - trace.head_in[i] * dot);
    }

    // conv chain
    int dim = cfg.resolution;
    std::vector<int> dims(blocks);
    for (int b = 0; b < blocks; ++b) {
        dims[b] = dim;
        dim /= 2;
    }
    std::vector<S> d_pre;
    for (int b = blocks - 1; b >= 0; --b) {
        const auto& pre = trace.pre[b];
        d_pre = d_post_scratch[b];
        detail::activate_grad_array(act, pre.data(), d_pre.data(), static_cast<int>(pre.size()));
        const S* input = b == 0 ? trace.grid_values.data() : trace.post[b - 1].data();
        S* d_input = b == 0 ? nullptr : d_post_scratch[b - 1].data();
        conv_backward(input, params.tensor(layout.conv_w[b]).data(), d_pre.data(),
                      grad.data() + layout.conv_w[b].offset, grad.data() + layout.conv_b[b].offset,
                      d_input, layout.conv_in_ch[b], layout.conv_out_ch[b], dims[b]);
    }
}

// ---------------------------------------------------------------------------
// branch MLPs

inline constexpr int kMaxMlpLayers = 8;

template <typename S>
struct MlpView {
    const S* w[kMaxMlpLayers];
    const S* b[kMaxMlpLayers];
    LinearDims dims[kMaxMlpLayers];
    int layers = 0;
    int hidden_total = 0;  // sum of hidden widths (layers 0..layers-2 outputs)
};

template <typename S>
MlpView<S> make_mlp_view(const ModelParams<S>& params,
                         const std::vector<TensorRef>& w_refs,
                         const std::vector<TensorRef>& b_refs,
                         const std::vector<LinearDims>& dims) {
    MlpView<S> v;
    v.layers = static_cast<int>(dims.size());
    for (int l = 0; l < v.layers; ++l) {
        v.w[l] = params.tensor(w_refs[l]).data();
        v.b[l] = params.tensor(b_refs[l]).data();
        v.dims[l] = dims[l];
        if (l + 1 < v.layers) v.hidden_total += dims[l].out;
    }
    return v;
}

// pre/post must hold hidden_total values each; out holds dims[last].out.
template <typename S>
void mlp_forward(const MlpView<S>& mlp, Activation act, const S* x_in, S* pre, S* post, S* out) {
    const S* x = x_in;
    int off = 0;
    for (int l = 0; l + 1 < mlp.layers; ++l) {
        const int width = mlp.dims[l].out;
        detail::linear_forward(mlp.w[l], mlp.b[l], x, pre + off, mlp.dims[l].in, width);
        detail::activate_array(act, pre + off, post + off, width);
        x = post + off;
        off += width;
    }
    const int last = mlp.layers - 1;
    detail::linear_forward(mlp.w[last], mlp.b[last], x, out, mlp.dims[last].in, mlp.dims[last].out);
}

// d_out is the gradient at the (linear) output. dw/db point at the gradient
// tensors per layer; dx_in (size dims[0].in) receives the input gradient.
template <typename S>
void mlp_backward(const MlpView<S>& mlp, Activation act, const S* x_in, const S* pre, const S* post,
                  const S* d_out, S* const* dw, S* const* db, S* dx_in) {
    S d_buf_a[256];
    S d_buf_b[256];

    // offsets of each hidden layer inside pre/post
    int offsets[kMaxMlpLayers];
    int off = 0;
    for (int l = 0; l + 1 < mlp.layers; ++l) {
        offsets[l] = off;
        off += mlp.dims[l].out;
    }

    const int last = mlp.layers - 1;
    const S* x_last = last == 0 ? x_in : post + offsets[last - 1];
    S* d_hidden = d_buf_a;
    detail::linear_backward(mlp.w[last], x_last, d_out, dw[last], db[last],
                            last == 0 ? dx_in : d_hidden, mlp.dims[last].in, mlp.dims[last].out);
    if (last == 0) return;

    for (int l = last - 1; l >= 0; --l) {
        const int width = mlp.dims[l].out;
        detail::activate_grad_array(act, pre + offsets[l], d_hidden, width);
        const S* x = l == 0 ? x_in : post + offsets[l - 1];
        S* d_next = d_hidden == d_buf_a ? d_buf_b : d_buf_a;
        detail::linear_backward(mlp.w[l], x, d_hidden, dw[l], db[l], l == 0 ? dx_in : d_next,
                                mlp.dims[l].in, width);
        d_hidden = d_next;
    }
}

// ---------------------------------------------------------------------------
// fused per-point evaluation over all branches

// Per-point forward records for every branch, reused across points. Laid out
// [branch][...] so a branch's backward reads contiguous slices.
template <typename S>
class BranchScratch {
public:
    void init(const ModelParams<S>& params) {
        const ModelConfig& cfg = params.config;
        branches = cfg.branches;
        latent_dim = cfg.latent_dim;
        d_in_dim = cfg.deform_input_dim();
        g_in_dim = cfg.template_input_dim();
        d_view.clear();
        g_view.clear();
        for (int i = 0; i < branches; ++i) {
            d_view.push_back(make_mlp_view(params, params.layout.deform_w[i],
                                           params.layout.deform_b[i], params.layout.deform_dims));
            g_view.push_back(make_mlp_view(params, params.layout.template_w[i],
                                           params.layout.template_b[i], params.layout.template_dims));
        }
        d_hidden = d_view[0].hidden_total;
        g_hidden = g_view[0].hidden_total;
        const auto n = static_cast<std::size_t>(branches);
        p_in.resize(n * 3);
        d_in.resize(n * d_in_dim);
        d_pre.resize(n * d_hidden);
        d_post.resize(n * d_hidden);
        d_raw.resize(n * 3);
        g_in.resize(n * g_in_dim);
        g_pre.resize(n * g_hidden);
        g_post.resize(n * g_hidden);
        pre_g.resize(n);
        gate.resize(n);
        occ.resize(n);
    }

    int branches = 0, latent_dim = 0, d_in_dim = 0, g_in_dim = 0, d_hidden = 0, g_hidden = 0;
    std::vector<MlpView<S>> d_view, g_view;
    std::vector<S> p_in, d_in, d_pre, d_post, d_raw, g_in, g_pre, g_post, pre_g, gate, occ;
};

/// Forward one world point through every branch, recording intermediates.
template <typename S>
void eval_point(const ModelParams<S>& params, const EncoderOutput<S>& enc, const Vec3f& point,
                BranchScratch<S>& s, S& out_sum, S& out_max, int& out_argmax) {
    const ModelConfig& cfg = params.config;
    const Vec3<S> world = point.template cast<S>();
    const S scale = static_cast<S>(cfg.deform_scale);
    S sum = S(0);
    S best = S(0);
    int best_branch = 0;

    for (int i = 0; i < cfg.branches; ++i) {
        const std::size_t bi = static_cast<std::size_t>(i);
        const S* latent = enc.latent.data() + bi * cfg.latent_dim;
        S* p_in = s.p_in.data() + bi * 3;
        if (cfg.template_mode) {
            const Vec3<S> local = transform_point(enc.affine_of(i), world);
            p_in[0] = local.x;
            p_in[1] = local.y;
            p_in[2] = local.z;
        } else {
            p_in[0] = world.x;
            p_in[1] = world.y;
            p_in[2] = world.z;
        }

        S p_hat[3] = {p_in[0], p_in[1], p_in[2]};
        if (cfg.use_deformation) {
            S* d_in = s.d_in.data() + bi * s.d_in_dim;
            d_in[0] = p_in[0];
            d_in[1] = p_in[1];
            d_in[2] = p_in[2];
            for (int l = 0; l < cfg.latent_dim; ++l) d_in[3 + l] = latent[l];
            S* raw = s.d_raw.data() + bi * 3;
            mlp_forward(s.d_view[i], cfg.activation, d_in, s.d_pre.data() + bi * s.d_hidden,
                        s.d_post.data() + bi * s.d_hidden, raw);
            p_hat[0] += scale * raw[0];
            p_hat[1] += scale * raw[1];
            p_hat[2] += scale * raw[2];
        }

        S* g_in = s.g_in.data() + bi * s.g_in_dim;
        g_in[0] = p_hat[0];
        g_in[1] = p_hat[1];
        g_in[2] = p_hat[2];
        if (!cfg.template_mode) {
            for (int l = 0; l < cfg.latent_dim; ++l) g_in[3 + l] = latent[l];
        }
        S raw_g;
        mlp_forward(s.g_view[i], cfg.activation, g_in, s.g_pre.data() + bi * s.g_hidden,
                    s.g_post.data() + bi * s.g_hidden, &raw_g);
        s.pre_g[bi] = raw_g;
        s.gate[bi] = detail::stable_sigmoid(static_cast<S>(cfg.template_output_gain) * raw_g);
        const S o = enc.existence[i] * s.gate[bi];
        s.occ[bi] = o;
        sum += o;
        if (i == 0 || o > best) {
            best = o;
            best_branch = i;
        }
    }
    out_sum = sum;
    out_max = best;
    out_argmax = best_branch;
}

// Per-branch gradient tensor pointers into the flat gradient vector.
template <typename S>
struct BranchGradPtrs {
    S* d_w[kMaxMlpLayers];
    S* d_b[kMaxMlpLayers];
    S* g_w[kMaxMlpLayers];
    S* g_b[kMaxMlpLayers];
};

template <typename S>
std::vector<BranchGradPtrs<S>> make_branch_grad_ptrs(const ParamLayout& layout, std::vector<S>& grad) {
    std::vector<BranchGradPtrs<S>> out(layout.deform_w.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        for (std::size_t l = 0; l < layout.deform_dims.size(); ++l) {
            out[i].d_w[l] = grad.data() + layout.deform_w[i][l].offset;
            out[i].d_b[l] = grad.data() + layout.deform_b[i][l].offset;
        }
        for (std::size_t l = 0; l < layout.template_dims.size(); ++l) {
            out[i].g_w[l] = grad.data() + layout.template_w[i][l].offset;
            out[i].g_b[l] = grad.data() + layout.template_b[i][l].offset;
        }
    }
    return out;
}

/// Backward through one branch for the point currently held in the scratch.
/// d_occ is dL/dO_i; d_delta_scale adds d_delta_scale * offset to the offset
/// gradient (deformation constraint). Accumulates MLP gradients through ptrs
/// and the head-output gradients into d_affine / d_latent / d_existence.
template <typename S>
void backward_point_branch(const ModelParams<S>& params, const EncoderOutput<S>& enc,
                           const Vec3f& point, BranchScratch<S>& s, int i, S d_occ,
                           S d_delta_scale, const BranchGradPtrs<S>& ptrs, S* d_affine,
                           S* d_latent, S& d_existence) {
    const ModelConfig& cfg = params.config;
    const std::size_t bi = static_cast<std::size_t>(i);
    const S gate = s.gate[bi];
    const S existence = enc.existence[i];

    const bool need_g = d_occ != S(0);
    const bool need_d = cfg.use_deformation && (need_g || d_delta_scale != S(0));
    if (!need_g && !need_d) return;

    S d_g_in[32] = {};
    if (need_g) {
        d_existence += d_occ * gate;
        const S d_raw_g = static_cast<S>(cfg.template_output_gain) * d_occ * existence * gate *
                          (S(1) - gate);
        mlp_backward(s.g_view[i], cfg.activation, s.g_in.data() + bi * s.g_in_dim,
                     s.g_pre.data() + bi * s.g_hidden, s.g_post.data() + bi * s.g_hidden, &d_raw_g,
                     ptrs.g_w, ptrs.g_b, d_g_in);
        if (!cfg.template_mode) {
            for (int l = 0; l < cfg.latent_dim; ++l) d_latent[l] += d_g_in[3 + l];
        }
    }

    // d_g_in[0..3) is d p_hat
    S d_p_in[3] = {d_g_in[0], d_g_in[1], d_g_in[2]};
    if (need_d) {
        const S scale = static_cast<S>(cfg.deform_scale);
        const S* raw = s.d_raw.data() + bi * 3;
        S d_raw[3];
        for (int a = 0; a < 3; ++a) {
            // offset = scale * raw; d_offset = d_p_hat + deform-loss term
            const S d_offset = d_g_in[a] + d_delta_scale * (scale * raw[a]);
            d_raw[a] = scale * d_offset;
        }
        S d_d_in[32];
        mlp_backward(s.d_view[i], cfg.activation, s.d_in.data() + bi * s.d_in_dim,
                     s.d_pre.data() + bi * s.d_hidden, s.d_post.data() + bi * s.d_hidden, d_raw,
                     ptrs.d_w, ptrs.d_b, d_d_in);
        for (int a = 0; a < 3; ++a) d_p_in[a] += d_d_in[a];
        for (int l = 0; l < cfg.latent_dim; ++l) d_latent[l] += d_d_in[3 + l];
    }

    if (cfg.template_mode) {
        const Vec3<S> world = point.template cast<S>();
        for (int r = 0; r < 3; ++r) {
            d_affine[4 * r + 0] += d_p_in[r] * world.x;
            d_affine[4 * r + 1] += d_p_in[r] * world.y;
            d_affine[4 * r + 2] += d_p_in[r] * world.z;
            d_affine[4 * r + 3] += d_p_in[r];
        }
    }
}

/// Scatter per-branch head-output gradients (affine residual, latent, raw
/// existence) into the head-output gradient vector.
template <typename S>
void assemble_head_grad(const ModelConfig& cfg, const EncoderOutput<S>& enc, const S* d_affine,
                        const S* d_latent, const S* d_existence, std::vector<S>& d_head_out) {
    const int sw = cfg.head_slice_width();
    const S scale = static_cast<S>(cfg.head_output_scale);
    d_head_out.assign(static_cast<std::size_t>(cfg.head_output_dim()), S(0));
    for (int i = 0; i < cfg.branches; ++i) {
        S* slice = d_head_out.data() + static_cast<std::size_t>(i) * sw;
        const S* da = d_affine + static_cast<std::size_t>(i) * 12;
        for (int k = 0; k < 12; ++k) slice[k] = scale * da[k];
        const S* dz = d_latent + static_cast<std::size_t>(i) * cfg.latent_dim;
        for (int l = 0; l < cfg.latent_dim; ++l) slice[12 + l] = scale * dz[l];
        const S p = enc.existence[i];
        slice[12 + cfg.latent_dim] =
            static_cast<S>(cfg.existence_logit_scale) * d_existence[i] * p * (S(1) - p);
    }
}

}  // namespace partfit::kernels
