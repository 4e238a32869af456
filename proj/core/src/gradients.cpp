// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/gradients.hpp"

#include <cmath>

#include "network_kernels.hpp"
#include "partfit/error.hpp"

namespace partfit {

namespace {

template <typename S>
struct ShapePartials {
    double recon_sum = 0;
    double recon_max = 0;
    double deform = 0;
};

template <typename S>
void validate_batch(const ModelParams<S>& params, std::span<const BatchItem<S>> batch) {
    if (batch.empty()) throw Error("batch is empty");
    for (const auto& item : batch) {
        if (item.grid == nullptr) throw Error("batch item without a grid");
        if (item.grid->resolution() != params.config.resolution) {
            throw Error(cat("batch grid resolution ", item.grid->resolution(),
                            " does not match model resolution ", params.config.resolution));
        }
        if (item.points.empty()) throw Error("batch item with no query points");
        if (item.points.size() != item.targets.size()) {
            throw Error("batch item points/targets length mismatch");
        }
    }
}

// Shared implementation; backward runs only when grad != nullptr.
template <typename S>
LossBreakdown run_batch(const ModelParams<S>& params, std::span<const BatchItem<S>> batch,
                        const LossSpec& spec, std::vector<S>* grad, ThreadPool* pool) {
    validate_batch(params, batch);
    spec.weights.validate();
    if (!spec.flags.use_sum && !spec.flags.use_max) {
        throw Error("at least one reconstruction term must be enabled");
    }
    const ModelConfig& cfg = params.config;
    const std::size_t n_shapes = batch.size();
    const int branches = cfg.branches;

    std::size_t total_points = 0;
    for (const auto& item : batch) total_points += item.points.size();

    // Phase 1: encoder forward per shape.
    std::vector<kernels::EncoderTrace<S>> traces(n_shapes);
    std::vector<EncoderOutput<S>> encs(n_shapes);
    parallel_for(pool, n_shapes, [&](std::size_t v) {
        kernels::encoder_forward(params, *batch[v].grid, traces[v]);
        encs[v] = kernels::head_to_output(cfg, traces[v].head_out);
    });

    // Batch means of the existence scores (shape order, fixed).
    std::vector<double> means(static_cast<std::size_t>(branches), 0.0);
    for (std::size_t v = 0; v < n_shapes; ++v) {
        for (int i = 0; i < branches; ++i) means[i] += static_cast<double>(encs[v].existence[i]);
    }
    for (auto& m : means) m /= static_cast<double>(n_shapes);

    // Phase 2: per-shape point sweep (loss partials, optional backward).
    std::vector<ShapePartials<S>> partials(n_shapes);
    std::vector<std::vector<S>> slots;
    if (grad != nullptr) {
        slots.resize(n_shapes);
    }

    const double d_sum_scale =
        spec.flags.use_sum ? 2.0 / static_cast<double>(total_points) : 0.0;
    const double d_max_scale =
        spec.flags.use_max ? spec.weights.alpha * 2.0 / static_cast<double>(total_points) : 0.0;
    const double d_delta_scale_d =
        (spec.flags.use_deform_constraint && cfg.use_deformation)
            ? spec.weights.beta * 2.0 / (static_cast<double>(total_points) * branches)
            : 0.0;

    parallel_for(pool, n_shapes, [&](std::size_t v) {
        const auto& item = batch[v];
        const auto& enc = encs[v];
        kernels::BranchScratch<S> scratch;
        scratch.init(params);

        std::vector<S> d_affine, d_latent, d_existence;
        std::vector<kernels::BranchGradPtrs<S>> ptrs;
        if (grad != nullptr) {
            slots[v].assign(params.layout.total, S(0));
            ptrs = kernels::make_branch_grad_ptrs(params.layout, slots[v]);
            d_affine.assign(static_cast<std::size_t>(branches) * 12, S(0));
            d_latent.assign(static_cast<std::size_t>(branches) * cfg.latent_dim, S(0));
            d_existence.assign(static_cast<std::size_t>(branches), S(0));
        }

        auto& part = partials[v];
        const S scale = static_cast<S>(cfg.deform_scale);
        for (std::size_t p = 0; p < item.points.size(); ++p) {
            S o_sum, o_max;
            int argmax;
            kernels::eval_point(params, enc, item.points[p], scratch, o_sum, o_max, argmax);
            const double target = static_cast<double>(item.targets[p]);
            const double ds = static_cast<double>(o_sum) - target;
            const double dm = static_cast<double>(o_max) - target;
            part.recon_sum += ds * ds;
            part.recon_max += dm * dm;
            if (cfg.use_deformation) {
                for (int i = 0; i < branches; ++i) {
                    const S* raw = scratch.d_raw.data() + static_cast<std::size_t>(i) * 3;
                    const double dx = static_cast<double>(scale) * raw[0];
                    const double dy = static_cast<double>(scale) * raw[1];
                    const double dz = static_cast<double>(scale) * raw[2];
                    part.deform += dx * dx + dy * dy + dz * dz;
                }
            }
            if (grad != nullptr) {
                const S d_sum = static_cast<S>(d_sum_scale * ds);
                const S d_max = static_cast<S>(d_max_scale * dm);
                const S d_delta = static_cast<S>(d_delta_scale_d);
                for (int i = 0; i < branches; ++i) {
                    const S d_occ = d_sum + (i == argmax ? d_max : S(0));
                    kernels::backward_point_branch(
                        params, enc, item.points[p], scratch, i, d_occ, d_delta, ptrs[i],
                        d_affine.data() + static_cast<std::size_t>(i) * 12,
                        d_latent.data() + static_cast<std::size_t>(i) * cfg.latent_dim,
                        d_existence[static_cast<std::size_t>(i)]);
                }
            }
        }

        if (grad != nullptr) {
            // Sparsity term: dL/dP_i^V = gamma * 2 (1 - m_i) / (N * |S|).
            for (int i = 0; i < branches; ++i) {
                d_existence[static_cast<std::size_t>(i)] += static_cast<S>(
                    spec.weights.gamma * 2.0 * (1.0 - means[i]) /
                    (static_cast<double>(branches) * static_cast<double>(n_shapes)));
            }
            std::vector<S> d_head_out;
            kernels::assemble_head_grad(cfg, enc, d_affine.data(), d_latent.data(),
                                        d_existence.data(), d_head_out);
            std::vector<std::vector<S>> d_post_scratch;
            kernels::encoder_backward(params, traces[v], d_head_out, slots[v], d_post_scratch);
        }
    });

    if (grad != nullptr) {
        grad->assign(params.layout.total, S(0));
        for (std::size_t v = 0; v < n_shapes; ++v) {
            const auto& slot = slots[v];
            for (std::size_t k = 0; k < slot.size(); ++k) (*grad)[k] += slot[k];
        }
    }

    double recon_sum = 0, recon_max = 0, deform_acc = 0;
    for (const auto& part : partials) {
        recon_sum += part.recon_sum;
        recon_max += part.recon_max;
        deform_acc += part.deform;
    }
    recon_sum /= static_cast<double>(total_points);
    recon_max /= static_cast<double>(total_points);
    deform_acc /= static_cast<double>(total_points) * branches;
    double sparse = 0;
    for (double m : means) sparse += (1.0 - m) * (1.0 - m);
    sparse = -sparse / static_cast<double>(branches);

    return total_loss(recon_sum, recon_max, deform_acc, sparse, spec.weights, spec.flags);
}

}  // namespace

template <typename S>
LossBreakdown batch_loss(const ModelParams<S>& params, std::span<const BatchItem<S>> batch,
                         const LossSpec& spec, ThreadPool* pool) {
    return run_batch<S>(params, batch, spec, nullptr, pool);
}

template <typename S>
LossBreakdown batch_gradients(const ModelParams<S>& params, std::span<const BatchItem<S>> batch,
                              const LossSpec& spec, std::vector<S>& grad, ThreadPool* pool) {
    return run_batch<S>(params, batch, spec, &grad, pool);
}

template LossBreakdown batch_loss<float>(const ModelParams<float>&,
                                         std::span<const BatchItem<float>>, const LossSpec&,
                                         ThreadPool*);
template LossBreakdown batch_loss<double>(const ModelParams<double>&,
                                          std::span<const BatchItem<double>>, const LossSpec&,
                                          ThreadPool*);
template LossBreakdown batch_gradients<float>(const ModelParams<float>&,
                                              std::span<const BatchItem<float>>, const LossSpec&,
                                              std::vector<float>&, ThreadPool*);
template LossBreakdown batch_gradients<double>(const ModelParams<double>&,
                                               std::span<const BatchItem<double>>, const LossSpec&,
                                               std::vector<double>&, ThreadPool*);

}  // namespace partfit
