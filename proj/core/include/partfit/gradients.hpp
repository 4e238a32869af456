// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "partfit/losses.hpp"
#include "partfit/model.hpp"
#include "partfit/parallel.hpp"

namespace partfit {

template <typename S>
struct BatchItem {
    const VoxelGrid* grid = nullptr;
    std::span<const Vec3f> points;
    std::span<const S> targets;  // binary occupancies, aligned with points
};

struct LossSpec {
    LossWeights weights;
    LossFlags flags;
};

/// Loss over a mini-batch without gradients. The sparsity term uses the
/// batch itself as the shape set S.
template <typename S>
LossBreakdown batch_loss(const ModelParams<S>& params, std::span<const BatchItem<S>> batch,
                         const LossSpec& spec, ThreadPool* pool = nullptr);

/// Loss plus exact dL/dtheta for every parameter. Work is sharded per shape
/// into private slots and reduced in shape order, so results are bitwise
/// independent of the thread count; a different reduction order would only
/// differ by floating-point commutativity.
template <typename S>
LossBreakdown batch_gradients(const ModelParams<S>& params, std::span<const BatchItem<S>> batch,
                              const LossSpec& spec, std::vector<S>& grad,
                              ThreadPool* pool = nullptr);

/// Single-shape convenience wrapper (a mini-batch of one).
template <typename S>
LossBreakdown gradients(const ModelParams<S>& params, const VoxelGrid& grid,
                        std::span<const Vec3f> points, std::span<const S> targets,
                        const LossSpec& spec, std::vector<S>& grad) {
    const BatchItem<S> item{&grid, points, targets};
    return batch_gradients(params, std::span<const BatchItem<S>>(&item, 1), spec, grad);
}

extern template LossBreakdown batch_loss<float>(const ModelParams<float>&,
                                                std::span<const BatchItem<float>>, const LossSpec&,
                                                ThreadPool*);
extern template LossBreakdown batch_loss<double>(const ModelParams<double>&,
                                                 std::span<const BatchItem<double>>,
                                                 const LossSpec&, ThreadPool*);
extern template LossBreakdown batch_gradients<float>(const ModelParams<float>&,
                                                     std::span<const BatchItem<float>>,
                                                     const LossSpec&, std::vector<float>&,
                                                     ThreadPool*);
extern template LossBreakdown batch_gradients<double>(const ModelParams<double>&,
                                                      std::span<const BatchItem<double>>,
                                                      const LossSpec&, std::vector<double>&,
                                                      ThreadPool*);

}  // namespace partfit
