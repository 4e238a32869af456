// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/structure.hpp"

#include <algorithm>

#include "partfit/error.hpp"

namespace partfit {

ExistenceVector existence_vector(const ModelParams<float>& params, const VoxelGrid& grid,
                                 double threshold) {
    const auto enc = encode(params, grid);
    ExistenceVector v(static_cast<std::size_t>(params.config.branches));
    for (int i = 0; i < params.config.branches; ++i) {
        v[static_cast<std::size_t>(i)] =
            static_cast<double>(enc.existence[i]) >= threshold ? 1 : 0;
    }
    return v;
}

std::string existence_key(const ExistenceVector& v) {
    std::string s(v.size(), '0');
    for (std::size_t i = 0; i < v.size(); ++i) s[i] = v[i] ? '1' : '0';
    return s;
}

std::vector<ShapeGroup> cluster_shapes(std::span<const Dataset* const> datasets,
                                       const ModelParams<float>& params, double threshold) {
    std::map<std::string, ShapeGroup> by_key;
    for (const Dataset* ds : datasets) {
        for (const auto& rec : ds->records) {
            const auto v = existence_vector(params, rec.grid, threshold);
            const std::string key = existence_key(v);
            auto& group = by_key[key];
            group.vector = v;
            group.shape_ids.push_back(rec.id);
            group.categories.push_back(ds->category);
        }
    }
    std::vector<ShapeGroup> groups;
    groups.reserve(by_key.size());
    for (auto& [key, group] : by_key) groups.push_back(std::move(group));
    std::stable_sort(groups.begin(), groups.end(), [](const ShapeGroup& a, const ShapeGroup& b) {
        if (a.shape_ids.size() != b.shape_ids.size()) {
            return a.shape_ids.size() > b.shape_ids.size();
        }
        return existence_key(a.vector) < existence_key(b.vector);
    });
    return groups;
}

std::vector<ShapeGroup> cluster_shapes(const Dataset& dataset, const ModelParams<float>& params,
                                       double threshold) {
    const Dataset* ptr = &dataset;
    return cluster_shapes(std::span<const Dataset* const>(&ptr, 1), params, threshold);
}

ClassificationResult classify_groups(const std::vector<ShapeGroup>& groups, std::size_t min_size) {
    ClassificationResult result;
    result.group_category.resize(groups.size());

    // actual / predicted / correct counts per category
    std::map<std::string, std::size_t> actual, predicted, correct;
    for (const auto& g : groups) {
        for (const auto& c : g.categories) ++actual[c];
    }

    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
        const auto& g = groups[gi];
        if (g.shape_ids.size() < min_size) continue;
        std::map<std::string, std::size_t> votes;
        for (const auto& c : g.categories) ++votes[c];
        // majority category; ties resolved to the lexicographically smallest
        std::string major;
        std::size_t major_count = 0;
        for (const auto& [c, n] : votes) {
            if (n > major_count) {
                major = c;
                major_count = n;
            }
        }
        result.group_category[gi] = major;
        for (const auto& c : g.categories) {
            ++predicted[major];
            if (c == major) ++correct[major];
        }
    }

    for (const auto& [c, n_actual] : actual) {
        const auto pred_it = predicted.find(c);
        if (pred_it == predicted.end() || pred_it->second == 0) {
            result.precision[c] = std::nullopt;  // category never predicted
        } else {
            result.precision[c] =
                static_cast<double>(correct[c]) / static_cast<double>(pred_it->second);
        }
        result.recall[c] = static_cast<double>(correct[c]) / static_cast<double>(n_actual);
    }
    return result;
}

}  // namespace partfit
