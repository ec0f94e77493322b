#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include "faood/data_io.hpp"

#include "doctest.h"

namespace {

namespace fs = std::filesystem;

const char* kCli = FAOOD_CLI_PATH;

struct CliWorkspace {
    fs::path root;
    CliWorkspace() {
        root = fs::temp_directory_path() / "faood_cli_test";
        fs::create_directories(root);
    }
    fs::path data() const { return root / "data"; }
};

int run(const std::string& args) {
    const std::string command = std::string(kCli) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(command.c_str());
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string common(const CliWorkspace& ws) {
    return " --data-root " + ws.data().string() + " --benchmark toy ";
}

}  // namespace

TEST_CASE("help exits 0 and documents the flags") {
    CHECK(run("--help") == 0);
    CHECK(run("train --help") == 0);
    CHECK(run("eval --help") == 0);
    CHECK(run("sweep-k --help") == 0);
    CHECK(run("ablate --help") == 0);
}

TEST_CASE("config errors exit 2") {
    CliWorkspace ws;
    CHECK(run("train" + common(ws) + "--k -1 --epochs 1") == 2);
    CHECK(run("train" + common(ws) + "--k 1.5 --epochs 1") == 2);
    CHECK(run("definitely-not-a-command") == 2);
    CHECK(run("ablate" + common(ws) + "--suite nonsense") == 2);
    CHECK(run("eval" + common(ws) + "--bank /nonexistent/bank.fab") == 2);
}

TEST_CASE("train/eval produce deterministic artifacts") {
    CliWorkspace ws;
    const std::string train_flags =
        common(ws) + "--shots 2 --epochs 3 --k 3 --lr 0.05 --seed 9 ";

    const fs::path run_a = ws.root / "run_a";
    const fs::path run_b = ws.root / "run_b";
    REQUIRE(run("train" + train_flags + "--out " + run_a.string()) == 0);
    REQUIRE(run("train" + train_flags + "--out " + run_b.string()) == 0);

    CHECK(fs::exists(run_a / "bank.fab"));
    CHECK(fs::exists(run_a / "run.json"));
    CHECK(fs::exists(run_a / "trainlog.csv"));
    CHECK(slurp(run_a / "bank.fab") == slurp(run_b / "bank.fab"));
    CHECK(slurp(run_a / "run.json") == slurp(run_b / "run.json"));

    const fs::path eval_a = ws.root / "eval_a";
    const fs::path eval_b = ws.root / "eval_b";
    const std::string eval_flags =
        common(ws) + "--bank " + (run_a / "bank.fab").string() + " --score glmcm --plots ";
    REQUIRE(run("eval" + eval_flags + "--out " + eval_a.string()) == 0);
    REQUIRE(run("eval" + eval_flags + "--out " + eval_b.string()) == 0);
    CHECK(slurp(eval_a / "report.csv") == slurp(eval_b / "report.csv"));
    CHECK(slurp(eval_a / "report.json") == slurp(eval_b / "report.json"));
    CHECK(fs::exists(eval_a / "plots" / "hist_near.svg"));
    CHECK(fs::file_size(eval_a / "plots" / "hist_near.svg") > 0);
    CHECK(fs::exists(eval_a / "plots" / "hist_far.svg"));
}

TEST_CASE("sweep-k emits one row per K and a plot") {
    CliWorkspace ws;
    const fs::path out = ws.root / "sweep";
    REQUIRE(run("sweep-k" + common(ws) +
                "--shots 2 --epochs 2 --lr 0.05 --seed 1 --k-list 0,1,3 --out " + out.string()) ==
            0);
    const std::string csv = slurp(out / "sweep_k.csv");
    CHECK(csv.find("k,label,fpr95,auroc\n") == 0);
    int lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 4);  // header + 3 rows
    CHECK(csv.find("CoOp") != std::string::npos);
    CHECK(fs::exists(out / "sweep_k.svg"));
    CHECK(fs::file_size(out / "sweep_k.svg") > 0);

    CHECK(run("sweep-k" + common(ws) + "--k-list 0,-2 --out " + out.string()) == 2);
}

TEST_CASE("eval of an untrained bank works; glmcm without locals exits 2") {
    CliWorkspace ws;
    // An untrained (0-epoch) manual bank still evaluates to a report.
    const fs::path run_dir = ws.root / "untrained";
    REQUIRE(run("train" + common(ws) + "--shots 2 --epochs 0 --k 3 --seed 4 --out " +
                run_dir.string()) == 0);
    const fs::path out = ws.root / "untrained_eval";
    REQUIRE(run("eval" + common(ws) + "--bank " + (run_dir / "bank.fab").string() + " --out " +
                out.string()) == 0);
    const std::string csv = slurp(out / "report.csv");
    CHECK(csv.find("Average,") != std::string::npos);

    // A benchmark without local features rejects --score glmcm with exit 2.
    const fs::path no_locals = ws.root / "no_locals_data";
    faood::ToyBenchmarkParams params;
    params.num_classes = 3;
    params.num_locals = 0;
    params.train_per_class = 3;
    params.test_per_class = 2;
    params.ood_per_set = 6;
    params.ood_clusters_per_set = 3;
    faood::write_toy_benchmark(no_locals, params);

    const std::string flags = " --data-root " + no_locals.string() + " --benchmark toy ";
    const fs::path run2 = ws.root / "no_locals_run";
    REQUIRE(run("train" + flags + "--shots 2 --epochs 1 --seed 1 --out " + run2.string()) == 0);
    CHECK(run("eval" + flags + "--bank " + (run2 / "bank.fab").string() + " --score glmcm --out " +
              (ws.root / "no_locals_eval").string()) == 2);
    CHECK(run("eval" + flags + "--bank " + (run2 / "bank.fab").string() + " --score mcm --out " +
              (ws.root / "no_locals_eval").string()) == 0);
}

TEST_CASE("make-benchmark and cache subcommands produce usable artifacts") {
    CliWorkspace ws;
    const fs::path bench_dir = ws.root / "made_benchmark";
    REQUIRE(run("make-benchmark --classes 4 --out " + bench_dir.string()) == 0);
    CHECK(fs::exists(bench_dir / "registry.json"));
    CHECK(fs::exists(bench_dir / "id_train.faemb"));

    // Encode raw vectors through the benchmark's toy encoder.
    const fs::path raw_dir = ws.root / "raws";
    fs::create_directories(raw_dir);
    std::vector<float> raw(64);
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<float>(i) / 64.0f;
    faood::write_raw_vector(raw, raw_dir / "one.f32");
    faood::DatasetManifest manifest;
    manifest.name = "raws";
    manifest.class_names = {"class00", "class01"};
    manifest.entries = {{-1, "one.f32", 1}};
    faood::save_manifest(manifest, raw_dir / "raws.json");

    const fs::path cache_out = ws.root / "raws.faemb";
    REQUIRE(run("cache --data-root " + bench_dir.string() + " --benchmark toy --manifest " +
                (raw_dir / "raws.json").string() + " --out " + cache_out.string()) == 0);
    CHECK(fs::exists(cache_out));
    CHECK(fs::exists(cache_out.string() + ".manifest.json"));
}

TEST_CASE("ablate emits a CSV per suite") {
    CliWorkspace ws;
    const fs::path out = ws.root / "ablate";
    REQUIRE(run("ablate" + common(ws) +
                "--suite init_modes --shots 2 --epochs 2 --lr 0.05 --seed 1 --out " +
                out.string()) == 0);
    const std::string csv = slurp(out / "init_modes.csv");
    int lines = 0;
    for (char ch : csv)
        if (ch == '\n') ++lines;
    CHECK(lines == 5);  // header + 4 arms
}
