// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "partfit/error.hpp"
#include "partfit/vec3.hpp"

namespace partfit {

struct LossWeights {
    double alpha = 0.1;   // weight of the max-aggregated reconstruction term
    double beta = 100.0;  // weight of the deformation constraint
    double gamma = 0.01;  // weight of the existence sparsity term

    void validate() const {
        if (alpha < 0 || beta < 0 || gamma < 0) {
            throw ConfigError("loss weights must be non-negative");
        }
    }
};

// Which terms participate (ablation variants toggle these).
struct LossFlags {
    bool use_sum = true;
    bool use_max = true;
    bool use_deform_constraint = true;
};

struct LossBreakdown {
    double recon_sum = 0;
    double recon_max = 0;
    double deform = 0;
    double sparse = 0;
    double total = 0;
};

/// Mean squared error between aggregated occupancies and binary targets.
/// Serves both the sum- and max-aggregated reconstruction terms.
template <typename S>
double recon_loss(std::span<const S> values, std::span<const S> targets) {
    if (values.size() != targets.size()) throw Error("recon loss: length mismatch");
    if (values.empty()) throw Error("recon loss: empty point list");
    double acc = 0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double d = static_cast<double>(values[i]) - static_cast<double>(targets[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(values.size());
}

/// Mean over points and branches of the squared offset norm.
template <typename S>
double deform_loss(std::span<const Vec3<S>> offsets) {
    if (offsets.empty()) return 0.0;
    double acc = 0;
    for (const auto& o : offsets) {
        acc += static_cast<double>(o.x) * o.x + static_cast<double>(o.y) * o.y +
               static_cast<double>(o.z) * o.z;
    }
    return acc / static_cast<double>(offsets.size());
}

/// Per-branch means of the existence scores over a mini-batch.
/// existence is shape-major: existence[v * branches + i].
template <typename S>
std::vector<double> existence_batch_means(std::span<const S> existence, int branches,
                                          int batch) {
    if (batch < 1) throw Error("sparsity loss: empty mini-batch");
    std::vector<double> means(static_cast<std::size_t>(branches), 0.0);
    for (int v = 0; v < batch; ++v) {
        for (int i = 0; i < branches; ++i) {
            means[i] += static_cast<double>(existence[static_cast<std::size_t>(v) * branches + i]);
        }
    }
    for (auto& m : means) m /= static_cast<double>(batch);
    return means;
}

/// -mean_i (1 - mean_V P_i^V)^2, in [-1, 0].
template <typename S>
double sparsity_loss(std::span<const S> existence, int branches, int batch) {
    const auto means = existence_batch_means(existence, branches, batch);
    double acc = 0;
    for (double m : means) acc += (1.0 - m) * (1.0 - m);
    return -acc / static_cast<double>(branches);
}

/// Weighted combination; disabled terms contribute zero regardless of weight.
LossBreakdown total_loss(double recon_sum, double recon_max, double deform, double sparse,
                         const LossWeights& weights, const LossFlags& flags = {});

}  // namespace partfit
