// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "partfit/error.hpp"

namespace partfit {

struct AdamConfig {
    double learning_rate = 0.0002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Adaptive moment estimation with bias correction:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
template <typename S>
struct AdamState {
    AdamConfig config;
    std::vector<S> m;
    std::vector<S> v;
    std::uint64_t step_count = 0;

    explicit AdamState(std::size_t n = 0, AdamConfig cfg = {}) : config(cfg) {
        m.assign(n, S(0));
        v.assign(n, S(0));
    }

    void step(std::span<S> params, std::span<const S> grad) {
        if (params.size() != m.size() || grad.size() != m.size()) {
            throw Error("adam: parameter/gradient size mismatch");
        }
        ++step_count;
        const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step_count));
        const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step_count));
        const S b1 = static_cast<S>(config.beta1);
        const S b2 = static_cast<S>(config.beta2);
        const S one_minus_b1 = static_cast<S>(1.0 - config.beta1);
        const S one_minus_b2 = static_cast<S>(1.0 - config.beta2);
        const S lr = static_cast<S>(config.learning_rate);
        const S eps = static_cast<S>(config.epsilon);
        const S inv_bc1 = static_cast<S>(1.0 / bc1);
        const S inv_bc2 = static_cast<S>(1.0 / bc2);
        for (std::size_t i = 0; i < m.size(); ++i) {
            const S g = grad[i];
            m[i] = b1 * m[i] + one_minus_b1 * g;
            v[i] = b2 * v[i] + one_minus_b2 * g * g;
            const S m_hat = m[i] * inv_bc1;
            const S v_hat = v[i] * inv_bc2;
            params[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
        }
    }

    /// Clears the moments of re-initialized parameters (used after revive).
    void zero_moments(const std::vector<std::size_t>& indices) {
        for (std::size_t i : indices) {
            m[i] = S(0);
            v[i] = S(0);
        }
    }
};

}  // namespace partfit
