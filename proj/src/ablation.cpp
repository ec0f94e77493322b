#include "faood/ablation.hpp"

#include <cstdio>

#include "faood/errors.hpp"

namespace faood {

AblationSuite ablation_suite_from_string(const std::string& s) {
    if (s == "fce_vs_ce") return AblationSuite::fce_vs_ce;
    if (s == "init_modes") return AblationSuite::init_modes;
    if (s == "shared_vector") return AblationSuite::shared_vector;
    if (s == "k_sweep") return AblationSuite::k_sweep;
    throw ConfigError("unknown ablation suite: '" + s +
                      "' (expected fce_vs_ce, init_modes, shared_vector or k_sweep)");
}

std::string to_string(AblationSuite suite) {
    switch (suite) {
        case AblationSuite::fce_vs_ce: return "fce_vs_ce";
        case AblationSuite::init_modes: return "init_modes";
        case AblationSuite::shared_vector: return "shared_vector";
        case AblationSuite::k_sweep: return "k_sweep";
    }
    return "unknown";
}

namespace {

struct Arm {
    std::string label;
    TrainConfig cfg;
    InitMode forced_init = InitMode::manual;
    InitMode original_init = InitMode::manual;
    bool shared = true;
};

std::string mode_mark(InitMode mode) { return mode == InitMode::manual ? "manual" : "random"; }

std::vector<Arm> suite_arms(AblationSuite suite, const TrainConfig& base,
                            std::vector<double> k_values) {
    std::vector<Arm> arms;
    switch (suite) {
        case AblationSuite::fce_vs_ce: {
            Arm ce{"ce", base, InitMode::manual, InitMode::manual, true};
            ce.cfg.loss = LossKind::cross_entropy;
            Arm fce{"fce_k", base, InitMode::manual, InitMode::manual, true};
            fce.cfg.loss = LossKind::fce_k;
            arms = {ce, fce};
            break;
        }
        case AblationSuite::init_modes: {
            // Rows follow the paper's table: (-,-), (check,-), (-,check), (check,check).
            const std::pair<InitMode, InitMode> grid[] = {
                {InitMode::random, InitMode::random},
                {InitMode::manual, InitMode::random},
                {InitMode::random, InitMode::manual},
                {InitMode::manual, InitMode::manual}};
            for (const auto& [forced, original] : grid)
                arms.push_back({"forced=" + mode_mark(forced) + ",original=" + mode_mark(original),
                                base, forced, original, true});
            break;
        }
        case AblationSuite::shared_vector: {
            const std::pair<bool, InitMode> grid[] = {{false, InitMode::random},
                                                      {true, InitMode::random},
                                                      {false, InitMode::manual},
                                                      {true, InitMode::manual}};
            for (const auto& [shared, forced] : grid)
                arms.push_back({std::string("shared=") + (shared ? "yes" : "no") +
                                    ",forced_init=" + mode_mark(forced),
                                base, forced, InitMode::manual, shared});
            break;
        }
        case AblationSuite::k_sweep: {
            if (k_values.empty()) k_values = {0, 1, 2, 3, 4, 5, 6};
            for (double k : k_values) {
                Arm arm;
                arm.cfg = base;
                arm.cfg.forced_coefficient = k;
                char buf[48];
                if (k == 0.0)
                    std::snprintf(buf, sizeof(buf), "K=0 (CoOp baseline)");
                else
                    std::snprintf(buf, sizeof(buf), "K=%g", k);
                arm.label = buf;
                arms.push_back(arm);
            }
            break;
        }
    }
    return arms;
}

}  // namespace

std::vector<AblationRow> run_ablation(AblationSuite suite, const TrainConfig& base_cfg,
                                      const BenchmarkSpec& benchmark,
                                      const EmbeddingBackend& backend,
                                      std::vector<double> k_values,
                                      const ScoreConfig& score_template) {
    base_cfg.validate();
    const auto arms = suite_arms(suite, base_cfg, std::move(k_values));

    // One few-shot draw shared by every arm.
    const auto few_shot = sample_few_shot(benchmark.id_train, base_cfg.shots, base_cfg.seed);
    const auto examples = load_examples(benchmark.id_train, backend, few_shot);

    std::vector<ScoreKind> kinds = {ScoreKind::mcm};
    if (backend.spec().num_locals > 0) kinds.push_back(ScoreKind::glmcm);

    std::vector<AblationRow> rows;
    for (const auto& arm : arms) {
        DualPromptBank bank = build_dual_prompts(
            benchmark.id_train.class_names, backend.spec(), arm.forced_init, arm.original_init,
            arm.shared, arm.cfg.forced_coefficient, arm.cfg.seed);
        train(arm.cfg, bank, backend, examples);

        AblationRow row;
        row.arm = arm.label;
        for (ScoreKind kind : kinds) {
            ScoreConfig score_cfg = score_template;
            score_cfg.kind = kind;
            score_cfg.forced_coefficient = bank.forced_coefficient;
            row.cells.push_back({kind, evaluate_bank(bank, backend, benchmark, score_cfg).report});
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string ablation_to_csv(const std::vector<AblationRow>& rows) {
    if (rows.empty()) throw ConfigError("ablation produced no rows");
    std::string csv = "arm";
    for (const auto& cell : rows.front().cells)
        csv += "," + to_string(cell.kind) + "_fpr95," + to_string(cell.kind) + "_auroc";
    csv += "\n";
    char buf[64];
    for (const auto& row : rows) {
        csv += row.arm;
        for (const auto& cell : row.cells) {
            std::snprintf(buf, sizeof(buf), ",%.6f,%.6f", cell.report.fpr95, cell.report.auroc);
            csv += buf;
        }
        csv += "\n";
    }
    return csv;
}

}  // namespace faood
