// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

#include "partfit/skeleton.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "partfit/error.hpp"
#include "partfit/rng.hpp"

namespace partfit {

const char* to_string(NodeKind k) {
    switch (k) {
        case NodeKind::part: return "part";
        case NodeKind::joint: return "joint";
        default: return "heuristic";
    }
}

int SkeletonGraph::degree(int node_id) const {
    int d = 0;
    for (const auto& e : edges) {
        if (e.a == node_id || e.b == node_id) ++d;
    }
    return d;
}

namespace {

struct Component {
    std::uint16_t label = 0;
    std::vector<std::size_t> voxels;  // linear indices, ascending
    Vec3d centroid;
};

Vec3d center_of(int resolution, std::size_t linear) {
    const auto r = static_cast<std::size_t>(resolution);
    const int x = static_cast<int>(linear % r);
    const int y = static_cast<int>((linear / r) % r);
    const int z = static_cast<int>(linear / (r * r));
    const Vec3f c = voxel_center(resolution, x, y, z);
    return {c.x, c.y, c.z};
}

std::vector<Component> find_components(const LabeledGrid& grid, std::vector<int>& comp_of) {
    const int r = grid.resolution;
    const auto n = static_cast<std::size_t>(r) * r * r;
    comp_of.assign(n, -1);
    std::vector<Component> comps;
    std::vector<std::size_t> stack;

    for (std::size_t start = 0; start < n; ++start) {
        if (grid.labels[start] == kUnlabeled || comp_of[start] != -1) continue;
        const std::uint16_t label = grid.labels[start];
        const int id = static_cast<int>(comps.size());
        Component comp;
        comp.label = label;
        stack.push_back(start);
        comp_of[start] = id;
        while (!stack.empty()) {
            const std::size_t v = stack.back();
            stack.pop_back();
            comp.voxels.push_back(v);
            const auto rr = static_cast<std::size_t>(r);
            const int x = static_cast<int>(v % rr);
            const int y = static_cast<int>((v / rr) % rr);
            const int z = static_cast<int>(v / (rr * rr));
            const int nx[6] = {x - 1, x + 1, x, x, x, x};
            const int ny[6] = {y, y, y - 1, y + 1, y, y};
            const int nz[6] = {z, z, z, z, z - 1, z + 1};
            for (int k = 0; k < 6; ++k) {
                if (nx[k] < 0 || nx[k] >= r || ny[k] < 0 || ny[k] >= r || nz[k] < 0 || nz[k] >= r) {
                    continue;
                }
                const std::size_t u = grid.linear_index(nx[k], ny[k], nz[k]);
                if (comp_of[u] == -1 && grid.labels[u] == label) {
                    comp_of[u] = id;
                    stack.push_back(u);
                }
            }
        }
        std::sort(comp.voxels.begin(), comp.voxels.end());
        Vec3d acc{};
        for (std::size_t v : comp.voxels) acc += center_of(r, v);
        comp.centroid = acc * (1.0 / static_cast<double>(comp.voxels.size()));
        comps.push_back(std::move(comp));
    }
    return comps;
}

}  // namespace

SkeletonGraph build_skeleton(const LabeledGrid& grid, const HeuristicConfig& config) {
    std::vector<int> comp_of;
    const auto comps = find_components(grid, comp_of);
    if (comps.empty()) throw Error("build_skeleton: labeled grid is empty");

    SkeletonGraph g;
    for (std::size_t c = 0; c < comps.size(); ++c) {
        g.nodes.push_back({static_cast<int>(c), NodeKind::part, comps[c].centroid, true});
    }

    // Contact voxel sets per 6-adjacent component pair.
    const int r = grid.resolution;
    std::map<std::pair<int, int>, std::set<std::size_t>> contacts;
    for (std::size_t v = 0; v < comp_of.size(); ++v) {
        if (comp_of[v] == -1) continue;
        const auto rr = static_cast<std::size_t>(r);
        const int x = static_cast<int>(v % rr);
        const int y = static_cast<int>((v / rr) % rr);
        const int z = static_cast<int>(v / (rr * rr));
        const int nx[3] = {x + 1, x, x};
        const int ny[3] = {y, y + 1, y};
        const int nz[3] = {z, z, z + 1};
        for (int k = 0; k < 3; ++k) {  // forward neighbors; each pair seen once
            if (nx[k] >= r || ny[k] >= r || nz[k] >= r) continue;
            const std::size_t u = grid.linear_index(nx[k], ny[k], nz[k]);
            if (comp_of[u] == -1 || comp_of[u] == comp_of[v]) continue;
            const auto key = std::minmax(comp_of[v], comp_of[u]);
            auto& set = contacts[{key.first, key.second}];
            set.insert(v);
            set.insert(u);
        }
    }

    std::map<int, std::vector<int>> part_joints;  // part node -> joint node ids
    for (const auto& [pair, voxels] : contacts) {
        Vec3d acc{};
        for (std::size_t v : voxels) acc += center_of(r, v);
        const Vec3d pos = acc * (1.0 / static_cast<double>(voxels.size()));
        const int id = static_cast<int>(g.nodes.size());
        g.nodes.push_back({id, NodeKind::joint, pos, false});
        g.edges.push_back({id, pair.first});
        g.edges.push_back({id, pair.second});
        part_joints[pair.first].push_back(id);
        part_joints[pair.second].push_back(id);
    }

    for (const auto& rule : config.rules) {
        auto label_listed = [&rule](std::uint16_t label) {
            return std::find(rule.labels.begin(), rule.labels.end(), label) != rule.labels.end();
        };
        if (rule.kind == HeuristicKind::join) {
            std::vector<int> members;
            Vec3d acc{};
            for (std::size_t c = 0; c < comps.size(); ++c) {
                if (label_listed(comps[c].label)) {
                    members.push_back(static_cast<int>(c));
                    acc += comps[c].centroid;
                }
            }
            if (members.empty()) continue;
            const int id = static_cast<int>(g.nodes.size());
            g.nodes.push_back({id, NodeKind::heuristic,
                               acc * (1.0 / static_cast<double>(members.size())), true});
            for (int m : members) g.edges.push_back({id, m});
        } else {  // tip
            for (std::size_t c = 0; c < comps.size(); ++c) {
                if (!label_listed(comps[c].label)) continue;
                const auto joints_it = part_joints.find(static_cast<int>(c));
                if (joints_it == part_joints.end()) continue;  // no joint to point away from
                // nearest joint of this part
                Vec3d joint_pos{};
                double best_d = -1;
                for (int j : joints_it->second) {
                    const double d = squared_distance(g.nodes[static_cast<std::size_t>(j)].position,
                                                      comps[c].centroid);
                    if (best_d < 0 || d < best_d) {
                        best_d = d;
                        joint_pos = g.nodes[static_cast<std::size_t>(j)].position;
                    }
                }
                // farthest voxel of the component from that joint
                double far_d = -1;
                Vec3d far_pos{};
                for (std::size_t v : comps[c].voxels) {
                    const Vec3d p = center_of(r, v);
                    const double d = squared_distance(p, joint_pos);
                    if (d > far_d) {
                        far_d = d;
                        far_pos = p;
                    }
                }
                const int id = static_cast<int>(g.nodes.size());
                g.nodes.push_back({id, NodeKind::heuristic, far_pos, true});
                g.edges.push_back({id, static_cast<int>(c)});
            }
        }
    }
    return g;
}

double chamfer_distance(std::span<const Vec3d> x, std::span<const Vec3d> y) {
    if (x.empty() || y.empty()) throw Error("chamfer_distance: empty point set");
    double acc = 0;
    for (const auto& p : x) {
        double best = squared_distance(p, y[0]);
        for (std::size_t j = 1; j < y.size(); ++j) best = std::min(best, squared_distance(p, y[j]));
        acc += best;
    }
    double total = acc / static_cast<double>(x.size());
    acc = 0;
    for (const auto& q : y) {
        double best = squared_distance(q, x[0]);
        for (std::size_t i = 1; i < x.size(); ++i) best = std::min(best, squared_distance(q, x[i]));
        acc += best;
    }
    return total + acc / static_cast<double>(y.size());
}

namespace {

// Skeleton sample points are affine in the node positions: every node
// contributes itself, every edge contributes interior points at fixed t.
struct SampleMap {
    std::vector<Vec3d> points;
    std::vector<std::pair<int, double>> w0;  // (node, weight)
    std::vector<std::pair<int, double>> w1;  // second node of edge samples
};

SampleMap skeleton_samples(const SkeletonGraph& g, int per_edge) {
    SampleMap m;
    for (const auto& n : g.nodes) {
        m.points.push_back(n.position);
        m.w0.push_back({n.id, 1.0});
        m.w1.push_back({-1, 0.0});
    }
    for (const auto& e : g.edges) {
        const Vec3d a = g.nodes[static_cast<std::size_t>(e.a)].position;
        const Vec3d b = g.nodes[static_cast<std::size_t>(e.b)].position;
        for (int k = 0; k < per_edge; ++k) {
            const double t = static_cast<double>(k + 1) / static_cast<double>(per_edge + 1);
            m.points.push_back(a * (1.0 - t) + b * t);
            m.w0.push_back({e.a, 1.0 - t});
            m.w1.push_back({e.b, t});
        }
    }
    return m;
}

// Chamfer objective and gradient w.r.t. the X points. Exact distance ties are
// averaged so symmetric configurations get the symmetric (zero) gradient.
double chamfer_with_grad(const std::vector<Vec3d>& x, const std::vector<Vec3d>& y,
                         std::vector<Vec3d>& grad_x) {
    grad_x.assign(x.size(), Vec3d{});
    std::vector<std::size_t> ties;

    double acc = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double best = squared_distance(x[i], y[0]);
        for (std::size_t j = 1; j < y.size(); ++j) best = std::min(best, squared_distance(x[i], y[j]));
        ties.clear();
        for (std::size_t j = 0; j < y.size(); ++j) {
            if (squared_distance(x[i], y[j]) == best) ties.push_back(j);
        }
        Vec3d mean{};
        for (std::size_t j : ties) mean += y[j];
        mean = mean * (1.0 / static_cast<double>(ties.size()));
        grad_x[i] += (x[i] - mean) * (2.0 / static_cast<double>(x.size()));
        acc += best;
    }
    double total = acc / static_cast<double>(x.size());

    acc = 0;
    for (const auto& q : y) {
        double best = squared_distance(q, x[0]);
        for (std::size_t i = 1; i < x.size(); ++i) best = std::min(best, squared_distance(q, x[i]));
        ties.clear();
        for (std::size_t i = 0; i < x.size(); ++i) {
            if (squared_distance(q, x[i]) == best) ties.push_back(i);
        }
        const double w = 2.0 / (static_cast<double>(y.size()) * static_cast<double>(ties.size()));
        for (std::size_t i : ties) grad_x[i] += (x[i] - q) * w;
        acc += best;
    }
    return total + acc / static_cast<double>(y.size());
}

}  // namespace

SkeletonGraph optimize_skeleton(const SkeletonGraph& graph, const VoxelGrid& gt,
                                const SkeletonOptimizeConfig& config) {
    std::vector<std::size_t> occupied;
    for (std::size_t v = 0; v < gt.cells().size(); ++v) {
        if (gt.cells()[v]) occupied.push_back(v);
    }
    if (occupied.empty()) throw Error("optimize_skeleton: ground-truth grid has no occupied voxels");

    // Fixed interior target set.
    Pcg32 rng(mix_seed(config.seed, 0x736b656cull), config.seed);
    const int r = gt.resolution();
    std::vector<Vec3d> targets(static_cast<std::size_t>(config.interior_samples));
    for (auto& t : targets) {
        const std::size_t v = occupied[rng.bounded(static_cast<std::uint32_t>(occupied.size()))];
        const auto rr = static_cast<std::size_t>(r);
        const auto x = static_cast<double>(v % rr);
        const auto y = static_cast<double>((v / rr) % rr);
        const auto z = static_cast<double>(v / (rr * rr));
        t = {(x + rng.uniform()) / r - 0.5, (y + rng.uniform()) / r - 0.5,
             (z + rng.uniform()) / r - 0.5};
    }
    return optimize_skeleton_points(graph, targets, config);
}

SkeletonGraph optimize_skeleton_points(const SkeletonGraph& graph, std::span<const Vec3d> targets_in,
                                       const SkeletonOptimizeConfig& config) {
    if (graph.nodes.empty()) throw Error("optimize_skeleton: empty graph");
    if (targets_in.empty()) throw Error("optimize_skeleton: no target points");
    const std::vector<Vec3d> targets(targets_in.begin(), targets_in.end());

    SkeletonGraph out = graph;
    std::vector<Vec3d> grad_x;
    std::vector<Vec3d> node_grad(out.nodes.size());
    double step = config.step;

    SampleMap samples = skeleton_samples(out, config.samples_per_edge);
    double current = chamfer_with_grad(samples.points, targets, grad_x);
    if (!std::isfinite(current)) throw Error("optimize_skeleton: non-finite chamfer objective");

    for (int it = 0; it < config.iterations; ++it) {
        // pull sample gradients back onto the nodes
        std::fill(node_grad.begin(), node_grad.end(), Vec3d{});
        for (std::size_t i = 0; i < samples.points.size(); ++i) {
            const auto [n0, w0] = samples.w0[i];
            if (w0 != 0.0) node_grad[static_cast<std::size_t>(n0)] += grad_x[i] * w0;
            const auto [n1, w1] = samples.w1[i];
            if (n1 >= 0 && w1 != 0.0) node_grad[static_cast<std::size_t>(n1)] += grad_x[i] * w1;
        }

        double grad_norm2 = 0;
        for (std::size_t n = 0; n < out.nodes.size(); ++n) {
            if (out.nodes[n].optimizable) grad_norm2 += node_grad[n].squared_norm();
        }
        if (grad_norm2 < 1e-24) break;

        bool accepted = false;
        for (int retry = 0; retry < 24 && !accepted; ++retry) {
            SkeletonGraph trial = out;
            for (std::size_t n = 0; n < trial.nodes.size(); ++n) {
                if (trial.nodes[n].optimizable) {
                    trial.nodes[n].position = trial.nodes[n].position + node_grad[n] * (-step);
                }
            }
            SampleMap trial_samples = skeleton_samples(trial, config.samples_per_edge);
            std::vector<Vec3d> trial_grad;
            const double trial_obj = chamfer_with_grad(trial_samples.points, targets, trial_grad);
            if (!std::isfinite(trial_obj)) {
                throw Error(cat("optimize_skeleton: non-finite objective at iteration ", it));
            }
            if (trial_obj <= current) {
                out = std::move(trial);
                samples = std::move(trial_samples);
                grad_x = std::move(trial_grad);
                current = trial_obj;
                accepted = true;
            } else {
                step *= 0.5;
            }
        }
        if (!accepted || step < 1e-14) break;
    }
    return out;
}

}  // namespace partfit
