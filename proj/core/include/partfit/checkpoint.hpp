// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>

#include "partfit/adam.hpp"
#include "partfit/model.hpp"

namespace partfit {

// PFCK checkpoint: header (magic, version), model config block, flat f32
// parameter array in layout order, branch ages, optional optimizer state
// (step count plus first/second moments in the same order). The unit of era
// rollback and of training resume.
struct Checkpoint {
    ModelParams<float> params;
    std::optional<AdamState<float>> optimizer;
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams<float>& params,
                     const AdamState<float>* optimizer = nullptr);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace partfit
