// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/dataset.hpp"

#include <fstream>
#include <unordered_set>

#include "io_util.hpp"
#include "partfit/error.hpp"

namespace partfit {

namespace {
constexpr char kMagic[4] = {'P', 'F', 'D', 'S'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    if (s == "all") return Split::all;
    throw ConfigError(cat("unknown split '", s, "' (expected train|test|all)"));
}

const char* to_string(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test: return "test";
        default: return "all";
    }
}

std::vector<std::size_t> Dataset::split_indices(Split split) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (split == Split::all || records[i].split == split) out.push_back(i);
    }
    return out;
}

const LabelInfo* Dataset::find_label(std::uint16_t id) const {
    for (const auto& l : labels) {
        if (l.id == id) return &l;
    }
    return nullptr;
}

std::vector<std::uint8_t> pack_occupancy(const VoxelGrid& grid) {
    const auto& cells = grid.cells();
    std::vector<std::uint8_t> bytes((cells.size() + 7) / 8, 0);
    for (std::size_t l = 0; l < cells.size(); ++l) {
        if (cells[l]) bytes[l >> 3] |= static_cast<std::uint8_t>(1u << (l & 7));
    }
    return bytes;
}

void unpack_occupancy(const std::vector<std::uint8_t>& bytes, VoxelGrid& grid) {
    auto& cells = grid.cells();
    for (std::size_t l = 0; l < cells.size(); ++l) {
        cells[l] = (bytes[l >> 3] >> (l & 7)) & 1u;
    }
}

Dataset load_dataset(const std::filesystem::path& path, Split split) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error(cat("cannot open dataset container: ", path.string()));
    io::Reader r(is, "header");

    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, kMagic, 4) != 0) {
        throw FormatError(cat("malformed header: bad magic bytes in ", path.string()));
    }
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError(cat("unknown container version ", version, " in ", path.string()));
    }
    const std::uint32_t record_count = r.u32();

    Dataset ds;
    ds.category = path.stem().string();
    ds.records.reserve(record_count);
    std::unordered_set<std::string> seen_ids;

    for (std::uint32_t i = 0; i < record_count; ++i) {
        r.set_context(cat("record ", i));
        ShapeRecord rec;
        const std::uint16_t id_len = r.u16();
        rec.id = r.str(id_len);
        if (!seen_ids.insert(rec.id).second) {
            throw FormatError(cat("duplicate shape id '", rec.id, "' at record ", i));
        }
        const std::uint32_t resolution = r.u32();
        if (!VoxelGrid::valid_resolution(static_cast<int>(resolution))) {
            throw FormatError(cat("resolution out of range (", resolution, ") at record ", i));
        }
        rec.grid = VoxelGrid(static_cast<int>(resolution));
        std::vector<std::uint8_t> packed((rec.grid.cell_count() + 7) / 8);
        r.bytes(packed.data(), packed.size());
        unpack_occupancy(packed, rec.grid);

        const std::uint32_t sample_count = r.u32();
        rec.samples.resize(sample_count);
        for (auto& s : rec.samples) {
            s.position.x = r.f32();
            s.position.y = r.f32();
            s.position.z = r.f32();
            s.occupancy = r.u8();
            s.label = r.u16();
        }
        rec.split = record_split(i);
        ds.records.push_back(std::move(rec));
    }

    r.set_context("label table");
    const std::uint16_t label_count = r.u16();
    ds.labels.resize(label_count);
    for (auto& l : ds.labels) {
        l.id = r.u16();
        const std::uint16_t name_len = r.u16();
        l.name = r.str(name_len);
    }
    if (!r.at_eof()) {
        throw FormatError(cat("trailing bytes after label table in ", path.string()));
    }

    if (split != Split::all) {
        std::vector<ShapeRecord> kept;
        for (auto& rec : ds.records) {
            if (rec.split == split) kept.push_back(std::move(rec));
        }
        ds.records = std::move(kept);
    }
    return ds;
}

void save_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(cat("cannot write dataset container: ", path.string()));
    io::Writer w(os);

    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(dataset.records.size()));
    for (const auto& rec : dataset.records) {
        w.u16(static_cast<std::uint16_t>(rec.id.size()));
        w.str(rec.id);
        w.u32(static_cast<std::uint32_t>(rec.grid.resolution()));
        const auto packed = pack_occupancy(rec.grid);
        w.bytes(packed.data(), packed.size());
        w.u32(static_cast<std::uint32_t>(rec.samples.size()));
        for (const auto& s : rec.samples) {
            w.f32(s.position.x);
            w.f32(s.position.y);
            w.f32(s.position.z);
            w.u8(s.occupancy);
            w.u16(s.label);
        }
    }
    w.u16(static_cast<std::uint16_t>(dataset.labels.size()));
    for (const auto& l : dataset.labels) {
        w.u16(l.id);
        w.u16(static_cast<std::uint16_t>(l.name.size()));
        w.str(l.name);
    }
    if (!os) throw Error(cat("write failed: ", path.string()));
}

}  // namespace partfit
