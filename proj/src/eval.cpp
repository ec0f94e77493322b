#include "faood/eval.hpp"

#include "faood/errors.hpp"

namespace faood {

namespace {

std::vector<ScoredSample> score_dataset(const DatasetManifest& manifest,
                                        const EmbeddingBackend& backend,
                                        const TextFeatureSet& forced,
                                        const TextFeatureSet& original, const ScoreConfig& cfg,
                                        bool classify) {
    FeatureSource source(manifest, backend);
    std::vector<ScoredSample> out;
    out.reserve(manifest.entries.size());
    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        const ImageFeatures features = source.get(i);
        ScoredSample sample;
        sample.truth = manifest.entries[i].label;
        sample.score = cfg.kind == ScoreKind::glmcm
                           ? glmcm_score(features, forced, original, cfg)
                           : mcm_score(features.global, forced, original, cfg);
        if (classify) sample.predicted_class = predict_class(features.global, forced);
        out.push_back(sample);
    }
    return out;
}

}  // namespace

EvalResult evaluate_bank(const DualPromptBank& bank, const EmbeddingBackend& backend,
                         const BenchmarkSpec& benchmark, const ScoreConfig& cfg) {
    if (cfg.kind == ScoreKind::glmcm && backend.spec().num_locals == 0)
        throw ConfigError(
            "GL-MCM needs local features but this backend provides none; use --score mcm");
    if (bank.num_classes() != benchmark.id_train.num_classes())
        throw ConfigError("bank was built for " + std::to_string(bank.num_classes()) +
                          " classes, benchmark has " +
                          std::to_string(benchmark.id_train.num_classes()));

    const auto [forced, original] = text_features(bank, backend);

    EvalResult result;
    result.id_samples =
        score_dataset(benchmark.id_test, backend, forced, original, cfg, /*classify=*/true);
    for (const auto& ood : benchmark.ood)
        result.ood_samples[ood.name] =
            score_dataset(ood.manifest, backend, forced, original, cfg, /*classify=*/false);
    result.report = build_report(result.id_samples, result.ood_samples);
    return result;
}

}  // namespace faood
