// SPDX-FileCopyrightText: 2026 partfit Authors
// SPDX-License-Identifier: Apache-2.0

// End-to-end checks of the command-line surface: every subcommand runs
// against a real temp workspace through the installed binary.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "partfit/checkpoint.hpp"
#include "partfit/dataset.hpp"

using namespace partfit;
namespace fs = std::filesystem;

namespace {

const fs::path kCli = PARTFIT_CLI_PATH;

fs::path workspace() {
    static const fs::path dir = [] {
        const fs::path d = fs::temp_directory_path() / "partfit_cli_tests";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args) {
    const std::string cmd = kCli.string() + " " + args + " >/dev/null 2>&1";
    return std::system(cmd.c_str());
}

std::string read_file(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

std::size_t count_lines(const fs::path& p) {
    std::ifstream is(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(is, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("synth then train then eval/segment/cluster/skeleton round trip") {
    const fs::path ws = workspace();
    const fs::path synth_cfg = ws / "synth.cfg";
    {
        std::ofstream os(synth_cfg);
        os << "family=two_box\ncount=10\nresolution=16\nsamples_uniform=256\n"
              "samples_surface=256\nseed=5\n";
    }

    // synth: same seed twice gives identical containers
    REQUIRE(run("--config " + synth_cfg.string() + " --out " + (ws / "data").string() + " synth") == 0);
    REQUIRE(run("--config " + synth_cfg.string() + " --out " + (ws / "data2").string() + " synth") == 0);
    const fs::path container = ws / "data" / "dataset.pfds";
    REQUIRE(fs::exists(container));
    CHECK(read_file(container) == read_file(ws / "data2" / "dataset.pfds"));
    CHECK(fs::exists(ws / "data" / "manifest.json"));

    const Dataset ds = load_dataset(container, Split::all);
    CHECK(ds.records.size() == 10);
    CHECK(ds.labels.size() == 2);

    // train: smoke schedule, 1 era x 10 iterations -> 1 checkpoint, 10 CSV rows
    const fs::path train_cfg = ws / "train.cfg";
    {
        std::ofstream os(train_cfg);
        os << "branches=2\neras=1\nera_iters=10\nbatch=2\npoints=64\n"
              "encoder_channels=2,4,8\ndeform_hidden=4\ntemplate_hidden=4\n"
              "template_layers=3\nseed=9\nthreads=1\n";
    }
    const fs::path run1 = ws / "run1";
    REQUIRE(run("--config " + train_cfg.string() + " --out " + run1.string() + " train --data " +
                container.string()) == 0);
    CHECK(fs::exists(run1 / "era_0001.pfck"));
    CHECK_FALSE(fs::exists(run1 / "era_0002.pfck"));
    CHECK(count_lines(run1 / "loss.csv") == 11);  // header + 10 rows
    CHECK(count_lines(run1 / "history.jsonl") == 1);
    CHECK(fs::exists(run1 / "manifest.json"));

    // resume: era 2 continues the history
    REQUIRE(run("--config " + train_cfg.string() + " --out " + run1.string() +
                " train --resume --eras 2 --data " + container.string()) == 0);
    CHECK(fs::exists(run1 / "era_0002.pfck"));
    CHECK(count_lines(run1 / "history.jsonl") == 2);
    {
        std::ifstream is(run1 / "history.jsonl");
        std::string line1, line2;
        std::getline(is, line1);
        std::getline(is, line2);
        CHECK(line2.find("\"era\":2") != std::string::npos);
    }

    const fs::path ck = run1 / "era_0002.pfck";

    // eval writes a report with a mean IOU
    const fs::path eval_dir = ws / "eval";
    REQUIRE(run("--out " + eval_dir.string() + " eval --checkpoint " + ck.string() + " --data " +
                container.string() + " --split all") == 0);
    const std::string report = read_file(eval_dir / "report.json");
    CHECK(report.find("mean_iou") != std::string::npos);
    CHECK(report.find("exhaustive") != std::string::npos);

    // eval refuses an exhausted mapping budget with a nonzero exit
    CHECK(run("--out " + (ws / "eval_refuse").string() + " eval --checkpoint " + ck.string() +
              " --data " + container.string() + " --split all --budget 1") != 0);

    // segment exports a labeled container and one PLY per shape
    const fs::path seg_dir = ws / "seg";
    REQUIRE(run("--out " + seg_dir.string() + " segment --checkpoint " + ck.string() + " --data " +
                container.string()) == 0);
    REQUIRE(fs::exists(seg_dir / "segmented.pfds"));
    const Dataset seg = load_dataset(seg_dir / "segmented.pfds", Split::all);
    CHECK(seg.records.size() == 10);
    for (const auto& rec : seg.records) {
        for (const auto& s : rec.samples) {
            CHECK(s.occupancy == 1);
            CHECK(s.label != kUnlabeled);
        }
    }
    CHECK(fs::exists(seg_dir / (ds.records[0].id + ".ply")));

    // cluster twice gives identical group files
    REQUIRE(run("--out " + (ws / "cl1").string() + " cluster --checkpoint " + ck.string() +
                " --data " + container.string()) == 0);
    REQUIRE(run("--out " + (ws / "cl2").string() + " cluster --checkpoint " + ck.string() +
                " --data " + container.string()) == 0);
    CHECK(read_file(ws / "cl1" / "groups.json") == read_file(ws / "cl2" / "groups.json"));

    // multi-category clustering gets per-category precision/recall
    const fs::path synth2_cfg = ws / "synth2.cfg";
    {
        std::ofstream os(synth2_cfg);
        os << "family=single_box\ncount=12\nresolution=16\nsamples_uniform=128\n"
              "samples_surface=128\nseed=6\n";
    }
    REQUIRE(run("--config " + synth2_cfg.string() + " --out " + (ws / "data3").string() +
                " synth") == 0);
    REQUIRE(run("--out " + (ws / "cl3").string() + " cluster --min-size 3 --checkpoint " +
                ck.string() + " --data " + container.string() + " --data " +
                (ws / "data3" / "dataset.pfds").string()) == 0);
    const std::string groups_json = read_file(ws / "cl3" / "groups.json");
    CHECK(groups_json.find("\"recall\"") != std::string::npos);
    CHECK(groups_json.find("dataset") != std::string::npos);  // category from file stem

    // skeleton: JSON + OBJ per shape
    const fs::path skel_dir = ws / "skel";
    REQUIRE(run("--out " + skel_dir.string() + " skeleton --checkpoint " + ck.string() +
                " --data " + container.string() + " --split test") == 0);
    const Dataset test_split = load_dataset(container, Split::test);
    REQUIRE(!test_split.records.empty());
    for (const auto& rec : test_split.records) {
        CHECK(fs::exists(skel_dir / (rec.id + "_skeleton.json")));
        CHECK(fs::exists(skel_dir / (rec.id + "_skeleton.obj")));
    }
}

TEST_CASE("cli errors exit nonzero") {
    const fs::path ws = workspace();
    CHECK(run("--out " + (ws / "x").string() + " eval --checkpoint missing.pfck --data missing.pfds") != 0);
    CHECK(run("--out " + (ws / "x").string() + " train --data missing.pfds") != 0);
    CHECK(run("definitely-not-a-command") != 0);
}
