#pragma once

#include <string>
#include <vector>

#include "faood/data_io.hpp"
#include "faood/eval.hpp"
#include "faood/train.hpp"

namespace faood {

enum class AblationSuite { fce_vs_ce, init_modes, shared_vector, k_sweep };

AblationSuite ablation_suite_from_string(const std::string& s);
std::string to_string(AblationSuite suite);

struct AblationCell {
    ScoreKind kind = ScoreKind::mcm;
    MetricsReport report;
};

struct AblationRow {
    std::string arm;
    std::vector<AblationCell> cells;  // one per score kind (MCM, and GL-MCM when locals exist)
};

/// Trains one bank per arm of the suite and evaluates it under every score
/// kind the backend supports. Every arm shares the base config's seed and
/// few-shot sample. k_values only applies to the k_sweep suite and defaults
/// to 0..6. score_template carries tau0 and the numerator flags; its kind and
/// K are set per cell.
std::vector<AblationRow> run_ablation(AblationSuite suite, const TrainConfig& base_cfg,
                                      const BenchmarkSpec& benchmark,
                                      const EmbeddingBackend& backend,
                                      std::vector<double> k_values = {},
                                      const ScoreConfig& score_template = {});

/// arm,mcm_fpr95,mcm_auroc[,glmcm_fpr95,glmcm_auroc] with fixed formatting.
std::string ablation_to_csv(const std::vector<AblationRow>& rows);

}  // namespace faood
