// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/synth.hpp"

#include <algorithm>
#include <bit>
#include <map>

#include "partfit/config_file.hpp"
#include "partfit/error.hpp"
#include "partfit/sampling.hpp"

namespace partfit {

namespace {

StructureFamily make_single_box() {
    StructureFamily f;
    f.name = "single_box";
    f.groups.push_back({"box", 1.0, {{PrimitiveKind::box, {0, 0, 0}, {0.25, 0.25, 0.25}}}});
    return f;
}

StructureFamily make_two_box() {
    StructureFamily f;
    f.name = "two_box";
    f.groups.push_back({"top", 1.0, {{PrimitiveKind::box, {0, 0.15, 0}, {0.30, 0.10, 0.30}}}});
    f.groups.push_back({"base", 1.0, {{PrimitiveKind::box, {0, -0.20, 0}, {0.15, 0.25, 0.15}}}});
    return f;
}

StructureFamily make_chair() {
    StructureFamily f;
    f.name = "chair";
    f.groups.push_back({"seat", 1.0, {{PrimitiveKind::box, {0, 0, 0}, {0.30, 0.035, 0.30}}}});
    f.groups.push_back({"back", 0.8, {{PrimitiveKind::box, {0, 0.22, -0.27}, {0.30, 0.185, 0.03}}}});
    f.groups.push_back({"leg",
                        1.0,
                        {{PrimitiveKind::box, {0.24, -0.235, 0.24}, {0.045, 0.20, 0.045}},
                         {PrimitiveKind::box, {-0.24, -0.235, 0.24}, {0.045, 0.20, 0.045}},
                         {PrimitiveKind::box, {0.24, -0.235, -0.24}, {0.045, 0.20, 0.045}},
                         {PrimitiveKind::box, {-0.24, -0.235, -0.24}, {0.045, 0.20, 0.045}}}});
    f.groups.push_back({"arm",
                        0.5,
                        {{PrimitiveKind::box, {0.27, 0.125, -0.03}, {0.03, 0.09, 0.24}},
                         {PrimitiveKind::box, {-0.27, 0.125, -0.03}, {0.03, 0.09, 0.24}}}});
    return f;
}

StructureFamily make_table() {
    StructureFamily f;
    f.name = "table";
    f.groups.push_back({"top", 1.0, {{PrimitiveKind::box, {0, 0.05, 0}, {0.42, 0.035, 0.30}}}});
    f.groups.push_back({"leg",
                        1.0,
                        {{PrimitiveKind::box, {0.36, -0.20, 0.24}, {0.04, 0.215, 0.04}},
                         {PrimitiveKind::box, {-0.36, -0.20, 0.24}, {0.04, 0.215, 0.04}},
                         {PrimitiveKind::box, {0.36, -0.20, -0.24}, {0.04, 0.215, 0.04}},
                         {PrimitiveKind::box, {-0.36, -0.20, -0.24}, {0.04, 0.215, 0.04}}}});
    f.groups.push_back({"shelf", 0.5, {{PrimitiveKind::box, {0, -0.15, 0}, {0.30, 0.02, 0.20}}}});
    return f;
}

bool primitive_contains(const Primitive& prim, const Vec3d& c) {
    const Vec3d d{c.x - prim.center.x, c.y - prim.center.y, c.z - prim.center.z};
    if (prim.kind == PrimitiveKind::box) {
        return std::abs(d.x) <= prim.half.x && std::abs(d.y) <= prim.half.y &&
               std::abs(d.z) <= prim.half.z;
    }
    const double nx = d.x / prim.half.x;
    const double ny = d.y / prim.half.y;
    const double nz = d.z / prim.half.z;
    return nx * nx + ny * ny + nz * nz <= 1.0;
}

struct ShapeDraw {
    std::vector<bool> group_present;
    std::vector<Primitive> prims;      // jittered, present groups only
    std::vector<std::size_t> prim_group;  // group index per primitive
};

ShapeDraw draw_shape(const StructureFamily& family, double jitter, Pcg32& rng) {
    ShapeDraw d;
    d.group_present.resize(family.groups.size());
    for (std::size_t g = 0; g < family.groups.size(); ++g) {
        const auto& group = family.groups[g];
        d.group_present[g] = rng.uniform() < group.presence;
        if (!d.group_present[g]) continue;
        for (const auto& prim : group.primitives) {
            Primitive p = prim;
            for (int a = 0; a < 3; ++a) {
                const double su = rng.uniform(-1.0, 1.0);
                const double tu = rng.uniform(-1.0, 1.0);
                p.half[a] = prim.half[a] * (1.0 + jitter * su);
                p.center[a] = prim.center[a] + jitter * prim.half[a] * tu;
            }
            d.prims.push_back(p);
            d.prim_group.push_back(g);
        }
    }
    return d;
}

}  // namespace

const StructureFamily& family_by_name(const std::string& name) {
    static const std::map<std::string, StructureFamily> families = {
        {"single_box", make_single_box()},
        {"two_box", make_two_box()},
        {"chair", make_chair()},
        {"table", make_table()},
    };
    const auto it = families.find(name);
    if (it == families.end()) {
        std::string known;
        for (const auto& [k, v] : families) known += known.empty() ? k : ", " + k;
        throw ConfigError(cat("unknown structure family '", name, "' (known: ", known, ")"));
    }
    return it->second;
}

void SynthConfig::validate() const {
    if (!VoxelGrid::valid_resolution(resolution)) {
        throw ConfigError(cat("synth resolution invalid: ", resolution));
    }
    if (count < 0) throw ConfigError("synth count must be >= 0");
    if (jitter < 0.0 || jitter >= 1.0) throw ConfigError("synth jitter must be in [0, 1)");
    if (retry_limit < 1) throw ConfigError("synth retry_limit must be >= 1");
    family_by_name(family);
}

SynthConfig parse_synth_config(const std::filesystem::path& path) {
    const KeyValueFile kv = KeyValueFile::load(path);
    kv.require_known({"resolution", "count", "family", "jitter", "samples_uniform",
                      "samples_surface", "seed", "retry_limit"});
    SynthConfig c;
    c.resolution = static_cast<int>(kv.get_int("resolution", c.resolution));
    c.count = static_cast<int>(kv.get_int("count", c.count));
    c.family = kv.get_string("family", c.family);
    c.jitter = kv.get_double("jitter", c.jitter);
    c.samples_uniform = static_cast<std::size_t>(kv.get_int("samples_uniform",
                                                            static_cast<std::int64_t>(c.samples_uniform)));
    c.samples_surface = static_cast<std::size_t>(kv.get_int("samples_surface",
                                                            static_cast<std::int64_t>(c.samples_surface)));
    c.seed = static_cast<std::uint64_t>(kv.get_int("seed", static_cast<std::int64_t>(c.seed)));
    c.retry_limit = static_cast<int>(kv.get_int("retry_limit", c.retry_limit));
    c.validate();
    return c;
}

Dataset synth_generate(const SynthConfig& config, Pcg32& rng) {
    config.validate();
    const StructureFamily& family = family_by_name(config.family);

    // Label ids follow the first appearance of each label name in group order.
    std::vector<std::string> label_names;
    std::vector<std::uint16_t> group_label(family.groups.size());
    for (std::size_t g = 0; g < family.groups.size(); ++g) {
        const auto& name = family.groups[g].label_name;
        const auto it = std::find(label_names.begin(), label_names.end(), name);
        if (it == label_names.end()) {
            group_label[g] = static_cast<std::uint16_t>(label_names.size());
            label_names.push_back(name);
        } else {
            group_label[g] = static_cast<std::uint16_t>(it - label_names.begin());
        }
    }

    Dataset ds;
    ds.category = family.name;
    for (std::size_t l = 0; l < label_names.size(); ++l) {
        ds.labels.push_back({static_cast<std::uint16_t>(l), label_names[l]});
    }

    // Per-shape streams derive from one base value so the generator is a pure
    // function of (config, rng state) and retries do not shift later shapes.
    const std::uint64_t base =
        (static_cast<std::uint64_t>(rng.next_u32()) << 32) | rng.next_u32();

    const int r = config.resolution;
    for (int idx = 0; idx < config.count; ++idx) {
        Pcg32 shape_rng(mix_seed(base, static_cast<std::uint64_t>(idx)),
                        static_cast<std::uint64_t>(idx));

        ShapeDraw draw;
        VoxelGrid grid(r);
        std::vector<std::uint16_t> voxel_label;
        bool accepted = false;
        for (int attempt = 0; attempt < config.retry_limit && !accepted; ++attempt) {
            draw = draw_shape(family, config.jitter, shape_rng);
            grid = VoxelGrid(r);
            voxel_label.assign(grid.cell_count(), kUnlabeled);

            const std::size_t n_prims = draw.prims.size();
            if (n_prims > 16) throw ConfigError("structure family has more than 16 primitives");
            std::vector<std::uint32_t> contained_in(n_prims, ~0u);
            std::vector<std::size_t> prim_voxels(n_prims, 0);
            std::vector<std::size_t> group_owned(family.groups.size(), 0);

            for (int z = 0; z < r; ++z) {
                for (int y = 0; y < r; ++y) {
                    for (int x = 0; x < r; ++x) {
                        const Vec3f cf = voxel_center(r, x, y, z);
                        const Vec3d c{cf.x, cf.y, cf.z};
                        std::uint32_t mask = 0;
                        for (std::size_t p = 0; p < n_prims; ++p) {
                            if (primitive_contains(draw.prims[p], c)) mask |= 1u << p;
                        }
                        if (mask == 0) continue;
                        for (std::size_t p = 0; p < n_prims; ++p) {
                            if (mask & (1u << p)) {
                                contained_in[p] &= mask;
                                ++prim_voxels[p];
                            }
                        }
                        // First-listed primitive claims the voxel.
                        const std::size_t owner = static_cast<std::size_t>(std::countr_zero(mask));
                        const std::size_t l = grid.linear_index(x, y, z);
                        grid.cells()[l] = 1;
                        voxel_label[l] = group_label[draw.prim_group[owner]];
                        ++group_owned[draw.prim_group[owner]];
                    }
                }
            }

            accepted = true;
            for (std::size_t p = 0; p < n_prims && accepted; ++p) {
                if (prim_voxels[p] == 0) accepted = false;
                // Contained in some other primitive: reject and resample.
                if ((contained_in[p] & ~(1u << p)) != 0) accepted = false;
            }
            for (std::size_t g = 0; g < family.groups.size() && accepted; ++g) {
                if (draw.group_present[g] && group_owned[g] == 0) accepted = false;
            }
        }
        if (!accepted) {
            throw Error(cat("synth shape ", idx, ": no valid placement within ",
                            config.retry_limit, " retries (parts fully contained)"));
        }

        ShapeRecord rec;
        rec.id = cat(family.name, "_", idx);
        for (std::size_t g = 0; g < family.groups.size(); ++g) {
            if (family.groups[g].presence < 1.0 && draw.group_present[g]) {
                rec.id += "_" + family.groups[g].label_name;
            }
        }
        rec.grid = grid;
        rec.samples = sample_points(grid, config.samples_uniform, config.samples_surface, shape_rng);
        for (auto& s : rec.samples) {
            if (s.occupancy) {
                const int x = voxel_axis_index(r, s.position.x);
                const int y = voxel_axis_index(r, s.position.y);
                const int z = voxel_axis_index(r, s.position.z);
                s.label = voxel_label[grid.linear_index(x, y, z)];
            }
        }
        rec.split = record_split(static_cast<std::size_t>(idx));
        ds.records.push_back(std::move(rec));
    }
    return ds;
}

bool id_has_part(const std::string& shape_id, const std::string& group_name) {
    return shape_id.find("_" + group_name) != std::string::npos;
}

}  // namespace partfit
