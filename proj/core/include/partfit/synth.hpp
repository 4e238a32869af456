// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "partfit/dataset.hpp"
#include "partfit/rng.hpp"
#include "partfit/vec3.hpp"

namespace partfit {

enum class PrimitiveKind { box, ellipsoid };

struct Primitive {
    PrimitiveKind kind = PrimitiveKind::box;
    Vec3d center;
    Vec3d half;  // half-extents (box) or semi-axes (ellipsoid)
};

// A named part of a structure family. All primitives in a group share the
// group's semantic label; presence is drawn once per shape per group.
struct PartGroup {
    std::string label_name;
    double presence = 1.0;
    std::vector<Primitive> primitives;
};

struct StructureFamily {
    std::string name;
    std::vector<PartGroup> groups;  // listed order resolves voxel ownership
};

/// Built-in families: single_box, two_box, chair, table.
const StructureFamily& family_by_name(const std::string& name);

struct SynthConfig {
    int resolution = 32;
    int count = 16;
    std::string family = "chair";
    double jitter = 0.15;  // per-part scale/translation jitter, fraction of half-extent
    std::size_t samples_uniform = 16384;
    std::size_t samples_surface = 16384;
    std::uint64_t seed = 7;
    int retry_limit = 32;

    void validate() const;
};

SynthConfig parse_synth_config(const std::filesystem::path& path);

/// Generates a labeled dataset: every occupied voxel and occupied query
/// sample carries the label of the group that claimed its voxel (groups claim
/// in listed order). Optional groups that are present append "_<name>" to the
/// shape id. Pure function of (config, rng state); shapes whose jittered
/// parts end up fully contained in another part are resampled up to
/// config.retry_limit times, then an Error is thrown.
Dataset synth_generate(const SynthConfig& config, Pcg32& rng);

/// True when the shape id carries the presence marker of an optional group.
bool id_has_part(const std::string& shape_id, const std::string& group_name);

}  // namespace partfit
