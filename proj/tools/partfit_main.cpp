// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

// Command-line front end: synthesize datasets, train, evaluate, export
// segmentations, cluster shapes by part existence, and build skeletons.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <regex>
#include <set>

#include <CLI11.hpp>

#include "partfit/assignment.hpp"
#include "partfit/checkpoint.hpp"
#include "partfit/config_file.hpp"
#include "partfit/dataset.hpp"
#include "partfit/error.hpp"
#include "partfit/export.hpp"
#include "partfit/log.hpp"
#include "partfit/manifest.hpp"
#include "partfit/segmentation.hpp"
#include "partfit/skeleton.hpp"
#include "partfit/structure.hpp"
#include "partfit/synth.hpp"
#include "partfit/trainer.hpp"

namespace fs = std::filesystem;
using namespace partfit;

namespace {

struct ManifestScope {
    RunManifest manifest;
    fs::path out_dir;

    ManifestScope(std::string command, fs::path dir) : out_dir(std::move(dir)) {
        manifest.command = std::move(command);
        manifest.started_utc = utc_timestamp(std::chrono::system_clock::now());
        fs::create_directories(out_dir);
    }
    void finish() {
        manifest.finished_utc = utc_timestamp(std::chrono::system_clock::now());
        write_manifest(out_dir, manifest);
    }
};

std::string describe_train_config(const TrainConfig& c, RunManifest& m) {
    m.config["branches"] = std::to_string(c.branches);
    m.config["eras"] = std::to_string(c.resolved_eras());
    m.config["era_iters"] = std::to_string(c.era_iterations);
    m.config["batch"] = std::to_string(c.batch_size);
    m.config["lr"] = cat(c.adam.learning_rate);
    m.config["alpha"] = cat(c.weights.alpha);
    m.config["beta"] = cat(c.weights.beta);
    m.config["gamma"] = cat(c.weights.gamma);
    m.config["tau_dead"] = cat(c.death_threshold);
    m.config["ablation"] = ablation_string(c.ablation);
    m.config["points"] = std::to_string(c.points_per_shape);
    m.config["threads"] = std::to_string(c.threads);
    m.config["activation"] = to_string(c.activation);
    m.config["deform_hidden"] = std::to_string(c.deform_hidden);
    m.config["template_hidden"] = std::to_string(c.template_hidden);
    std::string channels;
    for (int ch : c.encoder_channels) channels += (channels.empty() ? "" : ",") + std::to_string(ch);
    m.config["encoder_channels"] = channels.empty() ? "(default)" : channels;
    return ablation_string(c.ablation);
}

int run_synth(const fs::path& config_path, const fs::path& out_dir, std::optional<std::uint64_t> seed,
              std::optional<int> resolution) {
    SynthConfig config = config_path.empty() ? SynthConfig{} : parse_synth_config(config_path);
    if (seed.has_value()) config.seed = *seed;
    if (resolution.has_value()) config.resolution = *resolution;
    config.validate();

    ManifestScope scope("synth", out_dir);
    if (!config_path.empty()) scope.manifest.inputs.push_back(config_path.string());
    scope.manifest.seed = config.seed;
    scope.manifest.config["family"] = config.family;
    scope.manifest.config["resolution"] = std::to_string(config.resolution);
    scope.manifest.config["count"] = std::to_string(config.count);
    scope.manifest.config["jitter"] = cat(config.jitter);
    scope.manifest.config["samples_uniform"] = std::to_string(config.samples_uniform);
    scope.manifest.config["samples_surface"] = std::to_string(config.samples_surface);

    Pcg32 rng(config.seed, 0x73796e74);
    Dataset ds = synth_generate(config, rng);
    const fs::path out_path = out_dir / "dataset.pfds";
    save_dataset(out_path, ds);
    scope.manifest.outputs.push_back(out_path.string());
    scope.finish();
    std::printf("wrote %zu records (%s family, R=%d) to %s\n", ds.records.size(),
                config.family.c_str(), config.resolution, out_path.string().c_str());
    return 0;
}

struct TrainOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<int> threads, branches, eras, era_iters;
    std::optional<double> gamma;
    std::optional<std::string> ablation;
};

int run_train(const fs::path& data_path, const fs::path& config_path, const fs::path& out_dir,
              const TrainOverrides& ov, bool resume) {
    TrainConfig config;
    if (!config_path.empty()) config = parse_train_config(KeyValueFile::load(config_path));
    if (ov.seed) config.seed = *ov.seed;
    if (ov.threads) config.threads = *ov.threads;
    if (ov.branches) config.branches = *ov.branches;
    if (ov.eras) config.eras = *ov.eras;
    if (ov.era_iters) config.era_iterations = *ov.era_iters;
    if (ov.gamma) config.weights.gamma = *ov.gamma;
    if (ov.ablation) config.ablation = parse_ablation(*ov.ablation);
    config.validate();

    const Dataset dataset = load_dataset(data_path, Split::all);

    ManifestScope scope("train", out_dir);
    scope.manifest.inputs.push_back(data_path.string());
    if (!config_path.empty()) scope.manifest.inputs.push_back(config_path.string());
    scope.manifest.seed = config.seed;
    describe_train_config(config, scope.manifest);

    const fs::path csv_path = out_dir / "loss.csv";
    const fs::path history_path = out_dir / "history.jsonl";

    std::optional<EraState> resume_state;
    std::optional<ModelParams<float>> resume_params;
    std::optional<AdamState<float>> resume_optimizer;
    if (resume) {
        // Continue from the newest era checkpoint plus the recorded history.
        int last_era = 0;
        std::ifstream hist(history_path);
        std::string line;
        EraState state;
        const std::regex era_re("\"era\":([0-9]+)");
        const std::regex iou_re("\"iou\":([0-9.eE+-]+)");
        while (std::getline(hist, line)) {
            std::smatch m;
            if (std::regex_search(line, m, era_re)) last_era = std::stoi(m[1]);
            if (std::regex_search(line, m, iou_re)) state.prev_iou = std::stod(m[1]);
        }
        if (last_era == 0) throw Error("resume: no completed eras found in history.jsonl");
        char name[32];
        std::snprintf(name, sizeof(name), "era_%04d.pfck", last_era);
        Checkpoint ck = load_checkpoint(out_dir / name);
        if (!ck.optimizer.has_value()) throw Error("resume: checkpoint lacks optimizer state");
        state.completed_eras = last_era;
        state.prev_params = ck.params;
        state.prev_optimizer = *ck.optimizer;
        resume_state = std::move(state);
        resume_params = std::move(ck.params);
        resume_optimizer = std::move(*ck.optimizer);
        log_info(cat("resuming after era ", last_era));
    }

    std::ofstream csv(csv_path, resume ? std::ios::app : std::ios::trunc);
    if (!csv) throw Error(cat("cannot write ", csv_path.string()));
    if (!resume) csv << loss_csv_header();
    std::ofstream history(history_path, resume ? std::ios::app : std::ios::trunc);
    if (!history) throw Error(cat("cannot write ", history_path.string()));

    TrainHooks hooks;
    hooks.on_iteration = [&csv](std::int64_t iter, const LossBreakdown& loss) {
        csv << loss_csv_row(iter, loss);
    };
    std::vector<std::string> checkpoint_files;
    hooks.on_era_end = [&](const EraRecord& record, const ModelParams<float>& params,
                           const AdamState<float>& optimizer) {
        char name[32];
        std::snprintf(name, sizeof(name), "era_%04d.pfck", record.era);
        const fs::path path = out_dir / name;
        save_checkpoint(path, params, &optimizer);
        checkpoint_files.push_back(path.string());
        history << era_record_jsonl(record);
        history.flush();
        csv.flush();
    };

    const TrainResult result = train(dataset, config, hooks, std::move(resume_state),
                                     std::move(resume_params), std::move(resume_optimizer));

    scope.manifest.outputs.push_back(csv_path.string());
    scope.manifest.outputs.push_back(history_path.string());
    for (const auto& f : checkpoint_files) scope.manifest.outputs.push_back(f);
    scope.finish();
    std::printf("trained %s for %zu eras; final standing IoU %.4f; last checkpoint %s\n",
                ablation_string(config.ablation).c_str(), result.history.size(),
                result.history.empty() ? 0.0 : result.history.back().iou,
                checkpoint_files.empty() ? "(none)" : checkpoint_files.back().c_str());
    return 0;
}

int run_eval(const fs::path& checkpoint_path, const fs::path& data_path, const std::string& mode,
             const std::string& split, const fs::path& out_dir, double budget) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Dataset dataset = load_dataset(data_path, Split::all);
    if (dataset.labels.empty()) {
        throw Error("eval: dataset carries no semantic labels; cannot score segmentation");
    }

    ManifestScope scope("eval", out_dir);
    scope.manifest.inputs = {checkpoint_path.string(), data_path.string()};
    scope.manifest.config["mode"] = mode;
    scope.manifest.config["split"] = split;

    const EvalReport report = evaluate_segmentation(ck.params, dataset, split_from_string(split),
                                                    assign_mode_from_string(mode), budget);
    const fs::path report_path = out_dir / "report.json";
    write_text_atomic(report_path, eval_report_json(report, dataset.labels));
    scope.manifest.outputs.push_back(report_path.string());
    scope.finish();
    std::printf("mean per-part IOU (%s, %s): %.4f over %zu shapes [%s search]\n", split.c_str(),
                dataset.category.c_str(), report.mean_iou, report.shape_count,
                to_string(report.assignment.mode_used));
    return 0;
}

int run_segment(const fs::path& checkpoint_path, const fs::path& data_path, const std::string& split,
                const fs::path& out_dir) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Dataset dataset = load_dataset(data_path, split_from_string(split));

    ManifestScope scope("segment", out_dir);
    scope.manifest.inputs = {checkpoint_path.string(), data_path.string()};
    scope.manifest.config["split"] = split;

    Dataset labeled;
    labeled.category = dataset.category;
    for (int i = 0; i < ck.params.config.branches; ++i) {
        labeled.labels.push_back({static_cast<std::uint16_t>(i), cat("branch_", i)});
    }
    for (const auto& rec : dataset.records) {
        const LabeledGrid seg = segment_voxels(ck.params, rec.grid);
        ShapeRecord out_rec;
        out_rec.id = rec.id;
        out_rec.grid = rec.grid;
        const int r = seg.resolution;
        for (int z = 0; z < r; ++z) {
            for (int y = 0; y < r; ++y) {
                for (int x = 0; x < r; ++x) {
                    const std::uint16_t label = seg.at(x, y, z);
                    if (label == kUnlabeled) continue;
                    QuerySample s;
                    s.position = voxel_center(r, x, y, z);
                    s.occupancy = 1;
                    s.label = label;
                    out_rec.samples.push_back(s);
                }
            }
        }
        labeled.records.push_back(std::move(out_rec));

        const fs::path ply_path = out_dir / (rec.id + ".ply");
        write_text_atomic(ply_path, labeled_points_ply(seg));
        scope.manifest.outputs.push_back(ply_path.string());
    }
    const fs::path container_path = out_dir / "segmented.pfds";
    save_dataset(container_path, labeled);
    scope.manifest.outputs.push_back(container_path.string());
    scope.finish();
    std::printf("segmented %zu shapes into %s\n", labeled.records.size(),
                container_path.string().c_str());
    return 0;
}

int run_cluster(const fs::path& checkpoint_path, const std::vector<fs::path>& data_paths,
                double threshold, std::size_t min_size, const fs::path& out_dir) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    std::vector<Dataset> datasets;
    for (const auto& p : data_paths) datasets.push_back(load_dataset(p, Split::all));
    std::vector<const Dataset*> ptrs;
    for (const auto& ds : datasets) ptrs.push_back(&ds);

    ManifestScope scope("cluster", out_dir);
    scope.manifest.inputs.push_back(checkpoint_path.string());
    for (const auto& p : data_paths) scope.manifest.inputs.push_back(p.string());
    scope.manifest.config["threshold"] = cat(threshold);
    scope.manifest.config["min_size"] = std::to_string(min_size);

    const auto groups =
        cluster_shapes(std::span<const Dataset* const>(ptrs.data(), ptrs.size()), ck.params, threshold);
    const auto classification = classify_groups(groups, min_size);
    const fs::path groups_path = out_dir / "groups.json";
    write_text_atomic(groups_path, clustering_json(groups, classification, min_size));
    scope.manifest.outputs.push_back(groups_path.string());
    scope.finish();
    std::printf("clustered %zu datasets into %zu existence groups\n", datasets.size(),
                groups.size());
    return 0;
}

HeuristicConfig load_heuristics(const fs::path& path) {
    HeuristicConfig config;
    if (path.empty()) return config;
    std::ifstream is(path);
    if (!is) throw ConfigError(cat("cannot open heuristics file: ", path.string()));
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string kind, name, labels;
        ls >> kind >> name >> labels;
        HeuristicRule rule;
        if (kind == "join") {
            rule.kind = HeuristicKind::join;
        } else if (kind == "tip") {
            rule.kind = HeuristicKind::tip;
        } else {
            throw ConfigError(cat("heuristics: unknown rule kind '", kind, "'"));
        }
        rule.name = name;
        std::istringstream lls(labels);
        std::string tok;
        while (std::getline(lls, tok, ',')) {
            rule.labels.push_back(static_cast<std::uint16_t>(std::stoi(tok)));
        }
        config.rules.push_back(std::move(rule));
    }
    return config;
}

int run_skeleton(const fs::path& checkpoint_path, const fs::path& data_path,
                 const std::string& split, const fs::path& heuristics_path,
                 const fs::path& out_dir) {
    const Checkpoint ck = load_checkpoint(checkpoint_path);
    const Dataset dataset = load_dataset(data_path, split_from_string(split));
    const HeuristicConfig heuristics = load_heuristics(heuristics_path);

    ManifestScope scope("skeleton", out_dir);
    scope.manifest.inputs = {checkpoint_path.string(), data_path.string()};
    if (!heuristics_path.empty()) scope.manifest.inputs.push_back(heuristics_path.string());
    scope.manifest.config["split"] = split;

    for (const auto& rec : dataset.records) {
        if (rec.grid.occupied_count() == 0) {
            log_warn(cat("skipping empty shape ", rec.id));
            continue;
        }
        const LabeledGrid seg = segment_voxels(ck.params, rec.grid);
        SkeletonGraph graph = build_skeleton(seg, heuristics);
        graph = optimize_skeleton(graph, rec.grid);
        const fs::path json_path = out_dir / (rec.id + "_skeleton.json");
        const fs::path obj_path = out_dir / (rec.id + "_skeleton.obj");
        write_text_atomic(json_path, skeleton_json(graph));
        write_text_atomic(obj_path, skeleton_obj(graph));
        scope.manifest.outputs.push_back(json_path.string());
        scope.manifest.outputs.push_back(obj_path.string());
    }
    scope.finish();
    std::printf("skeletonized %zu shapes into %s\n", dataset.records.size(),
                out_dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"unsupervised co-segmentation of voxel shape collections"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 0;
    app.add_option("--config", config_path, "key=value configuration file")->capture_default_str();
    auto* seed_opt = app.add_option("--seed", seed, "seed override");
    app.add_option("--threads", threads, "worker threads (0 = machine parallelism)");
    app.add_option("--out", out_dir, "output directory")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "generate a synthetic labeled dataset");
    int resolution = 0;
    synth->add_option("--resolution", resolution, "grid resolution override");

    auto* train_cmd = app.add_subcommand("train", "train a co-segmentation model");
    std::string data_path;
    train_cmd->add_option("--data", data_path, "dataset container")->required();
    int branches = 0, eras = 0, era_iters = 0;
    double gamma = -1;
    std::string ablation;
    bool resume = false;
    train_cmd->add_option("--branches", branches, "branch count N");
    train_cmd->add_option("--eras", eras, "era count K");
    train_cmd->add_option("--era-iters", era_iters, "iterations per era M");
    train_cmd->add_option("--gamma", gamma, "sparsity weight");
    train_cmd->add_option("--ablation", ablation, "variant letters from {B,T,S,M,D,F,R}");
    train_cmd->add_flag("--resume", resume, "continue from the newest era checkpoint in --out");

    auto* eval_cmd = app.add_subcommand("eval", "score a trained model on labeled data");
    std::string checkpoint_path, mode = "exhaustive", split = "test";
    double budget = 1e8;
    eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    eval_cmd->add_option("--data", data_path, "dataset container")->required();
    eval_cmd->add_option("--mode", mode, "exhaustive|greedy")->capture_default_str();
    eval_cmd->add_option("--split", split, "train|test|all")->capture_default_str();
    eval_cmd->add_option("--budget", budget, "exhaustive mapping budget")->capture_default_str();

    auto* segment_cmd = app.add_subcommand("segment", "export per-voxel segmentations");
    std::string seg_split = "all";
    segment_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    segment_cmd->add_option("--data", data_path, "dataset container")->required();
    segment_cmd->add_option("--split", seg_split, "train|test|all")->capture_default_str();

    auto* cluster_cmd = app.add_subcommand("cluster", "group shapes by part existence vectors");
    std::vector<std::string> cluster_data;
    double threshold = 0.5;
    std::size_t min_size = 10;
    cluster_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    cluster_cmd->add_option("--data", cluster_data, "dataset container(s)")->required();
    cluster_cmd->add_option("--threshold", threshold, "existence threshold")->capture_default_str();
    cluster_cmd->add_option("--min-size", min_size, "minimum group size for a category label")
        ->capture_default_str();

    auto* skeleton_cmd = app.add_subcommand("skeleton", "build and refine shape skeletons");
    std::string skel_split = "all", heuristics_path;
    skeleton_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
    skeleton_cmd->add_option("--data", data_path, "dataset container")->required();
    skeleton_cmd->add_option("--split", skel_split, "train|test|all")->capture_default_str();
    skeleton_cmd->add_option("--heuristics", heuristics_path,
                             "extra-node rules: '<join|tip> <name> <label,...>' per line");

    CLI11_PARSE(app, argc, argv);
    seed_set = seed_opt->count() > 0;

    try {
        if (synth->parsed()) {
            return run_synth(config_path, out_dir,
                             seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt,
                             resolution > 0 ? std::optional<int>(resolution) : std::nullopt);
        }
        if (train_cmd->parsed()) {
            TrainOverrides ov;
            if (seed_set) ov.seed = seed;
            if (threads > 0) ov.threads = threads;
            if (branches > 0) ov.branches = branches;
            if (eras > 0) ov.eras = eras;
            if (era_iters > 0) ov.era_iters = era_iters;
            if (gamma >= 0) ov.gamma = gamma;
            if (!ablation.empty()) ov.ablation = ablation;
            return run_train(data_path, config_path, out_dir, ov, resume);
        }
        if (eval_cmd->parsed()) {
            return run_eval(checkpoint_path, data_path, mode, split, out_dir, budget);
        }
        if (segment_cmd->parsed()) {
            return run_segment(checkpoint_path, data_path, seg_split, out_dir);
        }
        if (cluster_cmd->parsed()) {
            std::vector<fs::path> paths(cluster_data.begin(), cluster_data.end());
            return run_cluster(checkpoint_path, paths, threshold, min_size, out_dir);
        }
        if (skeleton_cmd->parsed()) {
            return run_skeleton(checkpoint_path, data_path, skel_split, heuristics_path, out_dir);
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
