#pragma once

#include <map>
#include <string>
#include <vector>

#include "faood/data_io.hpp"
#include "faood/metrics.hpp"
#include "faood/prompt.hpp"
#include "faood/scoring.hpp"

namespace faood {

struct EvalResult {
    MetricsReport report;
    std::vector<ScoredSample> id_samples;
    std::map<std::string, std::vector<ScoredSample>> ood_samples;
};

/// Scores the benchmark's ID test split and every OOD dataset with the
/// configured score function, classifying ID samples on the forced prompt.
EvalResult evaluate_bank(const DualPromptBank& bank, const EmbeddingBackend& backend,
                         const BenchmarkSpec& benchmark, const ScoreConfig& cfg);

}  // namespace faood
