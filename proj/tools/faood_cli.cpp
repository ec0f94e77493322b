// faood: forced prompt learning for few-shot OOD detection.
//
// Subcommands: make-benchmark, train, eval, sweep-k, ablate, cache.
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric abort.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "faood/ablation.hpp"
#include "faood/backend_factory.hpp"
#include "faood/data_io.hpp"
#include "faood/errors.hpp"
#include "faood/eval.hpp"
#include "faood/hash.hpp"
#include "faood/metrics.hpp"
#include "faood/svg_plot.hpp"
#include "faood/train.hpp"

#include "CLI11.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct CommonOptions {
    std::string benchmark = "toy";
    std::string data_root;
    std::string backend = "auto";  // auto | toy | cache | clip-adapter
    std::string out = "runs/latest";
};

fs::path data_root_path(const CommonOptions& opts) {
    if (!opts.data_root.empty()) return opts.data_root;
    if (const char* env = std::getenv("FA_OOD_DATA_ROOT")) return env;
    return "data";
}

faood::BenchmarkSpec resolve(const CommonOptions& opts) {
    const fs::path root = data_root_path(opts);
    const fs::path registry = root / "registry.json";
    if (!fs::exists(registry) && opts.benchmark == "toy") {
        // The synthetic benchmark is bundled: materialize it on first use.
        faood::write_toy_benchmark(root, faood::ToyBenchmarkParams{});
        std::cout << "generated synthetic benchmark under " << root.string() << "\n";
    }
    return faood::resolve_benchmark(opts.benchmark, registry);
}

std::unique_ptr<faood::EmbeddingBackend> make_backend_for(const CommonOptions& opts,
                                                          const faood::BenchmarkSpec& bench) {
    const std::string kind = bench.encoder_desc.value("kind", std::string());
    if (opts.backend == "auto") return faood::make_backend(bench.encoder_desc, bench.root);
    if (opts.backend == "toy") {
        if (kind != "toy")
            throw faood::ConfigError("--backend toy requested but benchmark '" + bench.name +
                                     "' declares a '" + kind + "' encoder");
        return faood::make_backend(bench.encoder_desc, bench.root);
    }
    if (opts.backend == "cache") {
        nlohmann::json desc = {{"kind", "cache"}, {"inner", bench.encoder_desc}};
        return faood::make_backend(desc, bench.root);
    }
    if (opts.backend == "clip-adapter") {
        if (kind != "clip")
            throw faood::ConfigError(
                "--backend clip-adapter needs a benchmark whose encoder descriptor has "
                "kind 'clip' (an export directory produced by tools/export_clip_features.py)");
        return faood::make_backend(bench.encoder_desc, bench.root);
    }
    throw faood::ConfigError("unknown backend: '" + opts.backend + "'");
}

void require_integral_k(double k, bool allow_fractional) {
    if (k < 0.0) throw faood::ConfigError("forced coefficient K must be >= 0");
    if (!allow_fractional && k != std::floor(k))
        throw faood::ConfigError("K must be a non-negative integer (pass "
                                 "--allow-fractional-k for sensitivity probes)");
}

int default_epochs(int shots, int num_classes) {
    // ImageNet-scale recipes use 30/50 epochs; smaller ID datasets use 200.
    if (num_classes >= 500) return shots <= 1 ? 30 : 50;
    return 200;
}

std::string fixed6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

ordered_json dataset_hashes(const faood::BenchmarkSpec& bench) {
    ordered_json hashes;
    auto add = [&](const faood::DatasetManifest& m) {
        ordered_json entry;
        if (!m.cache.empty() && fs::exists(m.cache_path()))
            entry["cache"] = faood::hex64(faood::hash_file(m.cache_path()));
        entry["entries"] = m.entries.size();
        hashes[m.name] = entry;
    };
    add(bench.id_train);
    add(bench.id_test);
    for (const auto& ood : bench.ood) add(ood.manifest);
    return hashes;
}

void write_train_log_csv(const faood::TrainLog& log, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    out << "epoch,mean_loss,lr,wall_seconds\n";
    for (size_t e = 0; e < log.epochs.size(); ++e) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "%zu,%.9f,%.9f,%.4f\n", e, log.epochs[e].mean_loss,
                      log.epochs[e].lr, log.epochs[e].wall_seconds);
        out << buf;
    }
}

// ---------------------------------------------------------------------------

struct TrainFlags {
    CommonOptions common;
    faood::TrainConfig cfg;
    int epochs_flag = -1;  // -1: pick the recipe default for the dataset
    double k = 3.0;
    bool allow_fractional_k = false;
    std::string loss = "fce_k";
    std::string init = "manual";
    bool independent_context = false;
};

int run_train(const TrainFlags& flags) {
    faood::TrainConfig cfg = flags.cfg;
    cfg.forced_coefficient = flags.k;
    cfg.loss = faood::loss_kind_from_string(flags.loss);
    require_integral_k(flags.k, flags.allow_fractional_k);

    const auto bench = resolve(flags.common);
    auto backend = make_backend_for(flags.common, bench);
    cfg.epochs = flags.epochs_flag >= 0
                     ? flags.epochs_flag
                     : default_epochs(cfg.shots, bench.id_train.num_classes());
    cfg.validate();

    auto bank = faood::build_dual_prompts(
        bench.id_train.class_names, backend->spec(), faood::init_mode_from_string(flags.init),
        !flags.independent_context, cfg.forced_coefficient, cfg.seed);

    const auto few_shot = faood::sample_few_shot(bench.id_train, cfg.shots, cfg.seed);
    const auto examples = faood::load_examples(bench.id_train, *backend, few_shot);
    const faood::TrainLog log = faood::train(cfg, bank, *backend, examples);

    const fs::path out_dir = flags.common.out;
    fs::create_directories(out_dir);
    const fs::path bank_path = out_dir / "bank.fab";
    faood::save_bank(bank, bench.encoder_desc, bank_path);
    write_train_log_csv(log, out_dir / "trainlog.csv");

    const std::string run_id = faood::hex64(
        faood::splitmix64(cfg.fingerprint() ^ faood::fnv1a64(bench.name) ^
                          faood::fnv1a64(bench.encoder_desc.dump())));
    ordered_json run;
    run["run_id"] = run_id;
    run["benchmark"] = bench.name;
    run["config"] = cfg.to_json();
    run["init"] = flags.init;
    run["shared_context"] = !flags.independent_context;
    run["encoder"] = bench.encoder_desc;
    run["dataset_hashes"] = dataset_hashes(bench);
    run["bank_fingerprint"] = faood::hex64(faood::bank_fingerprint(bank));
    run["final_similarity_gap"] = log.final_gap;
    run["files"] = {bank_path.filename().string(), "trainlog.csv", "run.json"};
    std::ofstream(out_dir / "run.json", std::ios::trunc) << run.dump(2) << "\n";

    std::cout << "run " << run_id << ": trained " << cfg.epochs << " epochs, K="
              << cfg.forced_coefficient << ", final gap " << fixed6(log.final_gap) << "\n"
              << "bank written to " << bank_path.string() << "\n";
    return 0;
}

struct EvalFlags {
    CommonOptions common;
    std::string bank = "runs/latest/bank.fab";
    std::string score = "mcm";
    double tau0 = 1.0;
    bool plots = false;
    bool no_numerator_k_weighting = false;
    bool forced_only_max = false;
};

int run_eval(const EvalFlags& flags) {
    if (!fs::exists(flags.bank))
        throw faood::ConfigError("bank file not found: " + flags.bank);
    auto loaded = faood::load_bank(flags.bank);
    const auto bench = resolve(flags.common);

    faood::ScoreConfig cfg;
    cfg.kind = faood::score_kind_from_string(flags.score);
    cfg.tau0 = flags.tau0;
    cfg.forced_coefficient = loaded.bank.forced_coefficient;  // K travels with the bank
    cfg.numerator_k_weighting = !flags.no_numerator_k_weighting;
    cfg.restrict_max_to_forced = flags.forced_only_max;
    if (cfg.tau0 <= 0.0) throw faood::ConfigError("--tau0 must be positive");

    const auto result = faood::evaluate_bank(loaded.bank, *loaded.backend, bench, cfg);

    const fs::path out_dir = flags.common.out;
    fs::create_directories(out_dir);
    faood::write_report_csv(result.report, out_dir / "report.csv");
    faood::write_report_json(result.report, out_dir / "report.json");
    std::vector<std::string> emitted = {"report.csv", "report.json", "run.json"};

    if (flags.plots) {
        fs::create_directories(out_dir / "plots");
        std::vector<double> id_scores;
        for (const auto& s : result.id_samples) id_scores.push_back(s.score);
        for (const auto& [name, samples] : result.ood_samples) {
            std::vector<double> ood_scores;
            for (const auto& s : samples) ood_scores.push_back(s.score);
            faood::write_score_histogram_svg(id_scores, ood_scores,
                                             flags.score + " scores: ID vs " + name,
                                             out_dir / "plots" / ("hist_" + name + ".svg"));
            emitted.push_back("plots/hist_" + name + ".svg");
        }
    }

    ordered_json run;
    run["run_id"] = faood::hex64(faood::splitmix64(
        faood::hash_file(flags.bank) ^ faood::fnv1a64(flags.score) ^
        faood::fnv1a64(bench.name) ^ static_cast<uint64_t>(cfg.numerator_k_weighting) ^
        faood::fnv1a64(fixed6(cfg.tau0))));
    run["benchmark"] = bench.name;
    run["bank"] = flags.bank;
    run["score"] = flags.score;
    run["tau0"] = cfg.tau0;
    run["forced_coefficient"] = cfg.forced_coefficient;
    run["numerator_k_weighting"] = cfg.numerator_k_weighting;
    run["restrict_max_to_forced"] = cfg.restrict_max_to_forced;
    run["dataset_hashes"] = dataset_hashes(bench);
    run["files"] = emitted;
    std::ofstream(out_dir / "run.json", std::ios::trunc) << run.dump(2) << "\n";

    std::cout << faood::report_to_csv(result.report) << "id_top1," << fixed6(result.report.id_top1)
              << "\nreports written to " << out_dir.string() << "\n";
    return 0;
}

struct SweepFlags {
    CommonOptions common;
    faood::TrainConfig cfg;
    int epochs_flag = -1;
    std::string k_list = "0,1,2,3,4,5,6";
    std::string score = "mcm";
    double tau0 = 1.0;
    bool allow_fractional_k = false;
    bool no_numerator_k_weighting = false;
};

std::vector<double> parse_k_list(const std::string& text, bool allow_fractional) {
    std::vector<double> values;
    std::string token;
    std::stringstream stream(text);
    while (std::getline(stream, token, ',')) {
        if (token.empty()) continue;
        try {
            size_t used = 0;
            const double v = std::stod(token, &used);
            if (used != token.size()) throw std::invalid_argument(token);
            require_integral_k(v, allow_fractional);
            values.push_back(v);
        } catch (const std::invalid_argument&) {
            throw faood::ConfigError("--k-list entry is not a number: '" + token + "'");
        } catch (const std::out_of_range&) {
            throw faood::ConfigError("--k-list entry out of range: '" + token + "'");
        }
    }
    if (values.empty()) throw faood::ConfigError("--k-list is empty");
    return values;
}

int run_sweep(const SweepFlags& flags) {
    const auto k_values = parse_k_list(flags.k_list, flags.allow_fractional_k);
    const auto wanted = faood::score_kind_from_string(flags.score);

    const auto bench = resolve(flags.common);
    auto backend = make_backend_for(flags.common, bench);
    faood::TrainConfig cfg = flags.cfg;
    cfg.epochs = flags.epochs_flag >= 0
                     ? flags.epochs_flag
                     : default_epochs(cfg.shots, bench.id_train.num_classes());
    cfg.validate();

    faood::ScoreConfig score_template;
    score_template.tau0 = flags.tau0;
    score_template.numerator_k_weighting = !flags.no_numerator_k_weighting;
    if (score_template.tau0 <= 0.0) throw faood::ConfigError("--tau0 must be positive");
    const auto rows = faood::run_ablation(faood::AblationSuite::k_sweep, cfg, bench, *backend,
                                          k_values, score_template);

    const fs::path out_dir = flags.common.out;
    fs::create_directories(out_dir);

    std::string csv = "k,label,fpr95,auroc\n";
    faood::PlotSeries fpr_series{"FPR95", {}, {}}, auroc_series{"AUROC", {}, {}};
    for (size_t i = 0; i < rows.size(); ++i) {
        const faood::MetricsReport* report = nullptr;
        for (const auto& cell : rows[i].cells)
            if (cell.kind == wanted) report = &cell.report;
        if (!report)
            throw faood::ConfigError("score kind " + flags.score +
                                     " unavailable for this benchmark (no local features)");
        csv += fixed6(k_values[i]) + "," + rows[i].arm + "," + fixed6(report->fpr95) + "," +
               fixed6(report->auroc) + "\n";
        fpr_series.x.push_back(k_values[i]);
        fpr_series.y.push_back(report->fpr95);
        auroc_series.x.push_back(k_values[i]);
        auroc_series.y.push_back(report->auroc);
    }
    std::ofstream(out_dir / "sweep_k.csv", std::ios::trunc) << csv;
    faood::write_line_plot_svg({fpr_series, auroc_series},
                               "K sensitivity (" + flags.score + ")", "K",
                               out_dir / "sweep_k.svg");
    std::cout << csv << "sweep written to " << out_dir.string() << "\n";
    return 0;
}

struct AblateFlags {
    CommonOptions common;
    faood::TrainConfig cfg;
    int epochs_flag = -1;
    double k = 3.0;
    double tau0 = 1.0;
    bool allow_fractional_k = false;
    bool no_numerator_k_weighting = false;
    std::string suite = "fce_vs_ce";
};

int run_ablate(const AblateFlags& flags) {
    require_integral_k(flags.k, flags.allow_fractional_k);
    const auto suite = faood::ablation_suite_from_string(flags.suite);
    const auto bench = resolve(flags.common);
    auto backend = make_backend_for(flags.common, bench);
    faood::TrainConfig cfg = flags.cfg;
    cfg.forced_coefficient = flags.k;
    cfg.epochs = flags.epochs_flag >= 0
                     ? flags.epochs_flag
                     : default_epochs(cfg.shots, bench.id_train.num_classes());
    cfg.validate();

    faood::ScoreConfig score_template;
    score_template.tau0 = flags.tau0;
    score_template.numerator_k_weighting = !flags.no_numerator_k_weighting;
    if (score_template.tau0 <= 0.0) throw faood::ConfigError("--tau0 must be positive");
    const auto rows = faood::run_ablation(suite, cfg, bench, *backend, {}, score_template);
    const std::string csv = faood::ablation_to_csv(rows);

    const fs::path out_dir = flags.common.out;
    fs::create_directories(out_dir);
    std::ofstream(out_dir / (flags.suite + ".csv"), std::ios::trunc) << csv;
    std::cout << csv << "ablation written to " << out_dir.string() << "\n";
    return 0;
}

struct CacheFlags {
    CommonOptions common;
    std::string manifest;
    std::string out = "embeddings.faemb";
};

int run_cache(const CacheFlags& flags) {
    const auto manifest = faood::load_manifest(flags.manifest);
    const auto bench = resolve(flags.common);
    auto backend = make_backend_for(flags.common, bench);
    faood::cache_embeddings(manifest, *backend, flags.out);
    std::cout << "cached " << manifest.entries.size() << " embeddings to " << flags.out << "\n";
    return 0;
}

struct MakeBenchmarkFlags {
    std::string out;
    faood::ToyBenchmarkParams params;
};

int run_make_benchmark(const MakeBenchmarkFlags& flags) {
    fs::path out = flags.out;
    if (out.empty()) {
        CommonOptions common;
        out = data_root_path(common);
    }
    faood::write_toy_benchmark(out, flags.params);
    std::cout << "synthetic benchmark written under " << out.string() << "\n";
    return 0;
}

void add_common(CLI::App* cmd, CommonOptions& common, bool with_out = true) {
    cmd->add_option("--benchmark", common.benchmark,
                    "Benchmark name in the registry (default: toy)");
    cmd->add_option("--data-root", common.data_root,
                    "Registry root (default: $FA_OOD_DATA_ROOT or ./data)");
    cmd->add_option("--backend", common.backend,
                    "Embedding backend: auto|toy|cache|clip-adapter (default: auto)")
        ->check(CLI::IsMember({"auto", "toy", "cache", "clip-adapter"}));
    if (with_out) cmd->add_option("--out", common.out, "Output directory (default: runs/latest)");
}

void add_train_config(CLI::App* cmd, faood::TrainConfig& cfg, int& epochs_flag) {
    cmd->add_option("--shots", cfg.shots, "Few-shot examples per class (paper: 1/4/16)");
    cmd->add_option("--epochs", epochs_flag,
                    "Training epochs (paper recipe: 30 for 1-shot / 50 for 16-shot on "
                    "ImageNet-scale, 200 otherwise)");
    cmd->add_option("--lr", cfg.lr, "SGD learning rate (paper: 2e-3)");
    cmd->add_option("--batch-size", cfg.batch_size, "Batch size (paper: 160)");
    cmd->add_option("--momentum", cfg.momentum, "SGD momentum (paper: 0.9)");
    cmd->add_option("--weight-decay", cfg.weight_decay, "Weight decay (paper: 5e-4)");
    cmd->add_option("--tau", cfg.tau, "Training temperature (paper: 1)");
    cmd->add_option("--seed", cfg.seed, "Run seed");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"faood: forced prompt learning for few-shot OOD detection"};
    app.require_subcommand(1);

    TrainFlags train_flags;
    auto* train_cmd = app.add_subcommand("train", "Train the forced prompt with FCE-K");
    add_common(train_cmd, train_flags.common);
    add_train_config(train_cmd, train_flags.cfg, train_flags.epochs_flag);
    train_cmd->add_option("--k", train_flags.k, "Forced coefficient K (paper: 3)");
    train_cmd->add_flag("--allow-fractional-k", train_flags.allow_fractional_k,
                        "Permit non-integer K probes");
    train_cmd->add_option("--loss", train_flags.loss, "Objective: fce_k|ce (default fce_k)")
        ->check(CLI::IsMember({"fce_k", "ce"}));
    train_cmd->add_option("--init", train_flags.init,
                          "Prompt initialization: manual|random (paper: manual)")
        ->check(CLI::IsMember({"manual", "random"}));
    train_cmd->add_flag("--independent-ctx", train_flags.independent_context,
                        "Per-class context vectors instead of the shared vector");

    EvalFlags eval_flags;
    auto* eval_cmd = app.add_subcommand("eval", "Score a benchmark with a trained bank");
    add_common(eval_cmd, eval_flags.common);
    eval_cmd->add_option("--bank", eval_flags.bank, "Trained bank file");
    eval_cmd->add_option("--score", eval_flags.score, "Score function: mcm|glmcm (default mcm)")
        ->check(CLI::IsMember({"mcm", "glmcm"}));
    eval_cmd->add_option("--tau0", eval_flags.tau0, "Inference temperature (paper: 1)");
    eval_cmd->add_flag("--plots", eval_flags.plots, "Emit ID-vs-OOD score histograms (SVG)");
    eval_cmd->add_flag("--no-numerator-k-weighting", eval_flags.no_numerator_k_weighting,
                       "Leave original-family candidates unweighted in the MCM numerator");
    eval_cmd->add_flag("--mcm-forced-only", eval_flags.forced_only_max,
                       "Restrict the MCM max to forced-family candidates");

    SweepFlags sweep_flags;
    auto* sweep_cmd = app.add_subcommand("sweep-k", "Train/evaluate across a list of K values");
    add_common(sweep_cmd, sweep_flags.common);
    add_train_config(sweep_cmd, sweep_flags.cfg, sweep_flags.epochs_flag);
    sweep_cmd->add_option("--k-list", sweep_flags.k_list,
                          "Comma-separated K values (default 0,1,2,3,4,5,6)");
    sweep_cmd->add_option("--score", sweep_flags.score, "Score function: mcm|glmcm")
        ->check(CLI::IsMember({"mcm", "glmcm"}));
    sweep_cmd->add_flag("--allow-fractional-k", sweep_flags.allow_fractional_k,
                        "Permit non-integer K probes");
    sweep_cmd->add_option("--tau0", sweep_flags.tau0, "Inference temperature (paper: 1)");
    sweep_cmd->add_flag("--no-numerator-k-weighting", sweep_flags.no_numerator_k_weighting,
                        "Leave original-family candidates unweighted in the MCM numerator");

    AblateFlags ablate_flags;
    auto* ablate_cmd = app.add_subcommand("ablate", "Run a paper ablation suite");
    add_common(ablate_cmd, ablate_flags.common);
    add_train_config(ablate_cmd, ablate_flags.cfg, ablate_flags.epochs_flag);
    ablate_cmd
        ->add_option("--suite", ablate_flags.suite,
                     "Suite: fce_vs_ce|init_modes|shared_vector|k_sweep")
        ->required();
    ablate_cmd->add_option("--k", ablate_flags.k, "Forced coefficient K (paper: 3)");
    ablate_cmd->add_flag("--allow-fractional-k", ablate_flags.allow_fractional_k,
                         "Permit non-integer K probes");
    ablate_cmd->add_option("--tau0", ablate_flags.tau0, "Inference temperature (paper: 1)");
    ablate_cmd->add_flag("--no-numerator-k-weighting", ablate_flags.no_numerator_k_weighting,
                         "Leave original-family candidates unweighted in the MCM numerator");

    CacheFlags cache_flags;
    auto* cache_cmd = app.add_subcommand("cache", "Encode a manifest into a FAEMB1 cache");
    add_common(cache_cmd, cache_flags.common, /*with_out=*/false);
    cache_cmd->add_option("--manifest", cache_flags.manifest, "Dataset manifest to encode")
        ->required();
    cache_cmd->add_option("--out", cache_flags.out, "Cache output path");

    MakeBenchmarkFlags make_flags;
    auto* make_cmd =
        app.add_subcommand("make-benchmark", "Write the bundled synthetic benchmark");
    make_cmd->add_option("--out", make_flags.out,
                         "Target directory (default: the data root)");
    make_cmd->add_option("--classes", make_flags.params.num_classes, "ID cluster count");
    make_cmd->add_option("--seed", make_flags.params.seed, "Generator seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*train_cmd) return run_train(train_flags);
        if (*eval_cmd) return run_eval(eval_flags);
        if (*sweep_cmd) return run_sweep(sweep_flags);
        if (*ablate_cmd) return run_ablate(ablate_flags);
        if (*cache_cmd) return run_cache(cache_flags);
        if (*make_cmd) return run_make_benchmark(make_flags);
    } catch (const faood::NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 4;
    } catch (const faood::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const faood::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
