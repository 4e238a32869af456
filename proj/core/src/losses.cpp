// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/losses.hpp"

namespace partfit {

LossBreakdown total_loss(double recon_sum, double recon_max, double deform, double sparse,
                         const LossWeights& weights, const LossFlags& flags) {
    weights.validate();
    LossBreakdown b;
    b.recon_sum = recon_sum;
    b.recon_max = recon_max;
    b.deform = deform;
    b.sparse = sparse;
    b.total = (flags.use_sum ? recon_sum : 0.0) + (flags.use_max ? weights.alpha * recon_max : 0.0) +
              (flags.use_deform_constraint ? weights.beta * deform : 0.0) + weights.gamma * sparse;
    return b;
}

}  // namespace partfit
