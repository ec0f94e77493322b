#include "faood/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "faood/errors.hpp"

namespace faood {

namespace {

void check_inputs(const Eigen::VectorXd& vec, const TextFeatureSet& forced,
                  const TextFeatureSet& original, const ScoreConfig& cfg) {
    if (cfg.tau0 <= 0.0) throw ConfigError("tau0 must be positive");
    if (cfg.forced_coefficient < 0.0) throw ConfigError("forced coefficient K must be >= 0");
    if (forced.rows() == 0) throw ConfigError("empty forced text feature set");
    if (forced.rows() != original.rows() || forced.cols() != original.cols())
        throw ConfigError("forced/original text feature sets differ in shape");
    if (vec.size() != forced.cols())
        throw ConfigError("image feature dimension " + std::to_string(vec.size()) +
                          " does not match text feature dimension " +
                          std::to_string(forced.cols()));
}

}  // namespace

std::string to_string(ScoreKind kind) { return kind == ScoreKind::mcm ? "mcm" : "glmcm"; }

ScoreKind score_kind_from_string(const std::string& s) {
    if (s == "mcm") return ScoreKind::mcm;
    if (s == "glmcm") return ScoreKind::glmcm;
    throw ConfigError("unknown score kind: '" + s + "' (expected mcm or glmcm)");
}

double mcm_score(const Eigen::VectorXd& global, const TextFeatureSet& forced,
                 const TextFeatureSet& original, const ScoreConfig& cfg) {
    check_inputs(global, forced, original, cfg);
    return mcm_from_cosines(forced * global, original * global, cfg);
}

double mcm_from_cosines(const Eigen::VectorXd& forced_cosines,
                        const Eigen::VectorXd& original_cosines, const ScoreConfig& cfg) {
    if (cfg.tau0 <= 0.0) throw ConfigError("tau0 must be positive");
    if (cfg.forced_coefficient < 0.0) throw ConfigError("forced coefficient K must be >= 0");
    if (forced_cosines.size() == 0 || forced_cosines.size() != original_cosines.size())
        throw ConfigError("cosine vectors must be non-empty and of equal length");
    const int num_classes = static_cast<int>(forced_cosines.size());
    const double k = cfg.forced_coefficient;

    const Eigen::VectorXd forced_logits = forced_cosines / cfg.tau0;
    if (k == 0.0) {
        // No original prompt is used: plain max softmax probability over the
        // forced family.
        const double peak = forced_logits.maxCoeff();
        const Eigen::VectorXd mass = (forced_logits.array() - peak).exp().matrix();
        return mass.maxCoeff() / mass.sum();
    }

    const double log_k = std::log(k);
    const Eigen::VectorXd original_logits =
        (original_cosines / cfg.tau0).array() + log_k;  // K folded in as log K

    double peak = forced_logits.maxCoeff();
    peak = std::max(peak, original_logits.maxCoeff());

    double denom = 0.0;
    double best = 0.0;
    for (int c = 0; c < num_classes; ++c) {
        const double m = std::exp(forced_logits(c) - peak);
        denom += m;
        best = std::max(best, m);
    }
    for (int c = 0; c < num_classes; ++c) {
        const double weighted = std::exp(original_logits(c) - peak);
        denom += weighted;
        if (!cfg.restrict_max_to_forced) {
            const double candidate =
                cfg.numerator_k_weighting ? weighted : std::exp(original_logits(c) - log_k - peak);
            best = std::max(best, candidate);
        }
    }
    return best / denom;
}

double lmcm_score(const Eigen::MatrixXd& locals, const TextFeatureSet& forced,
                  const TextFeatureSet& original, const ScoreConfig& cfg) {
    if (locals.rows() == 0)
        throw ConfigError(
            "this embedding source provides no local features; use MCM-only scoring "
            "(--score mcm)");
    double best = 0.0;
    for (int i = 0; i < locals.rows(); ++i) {
        const double s = mcm_score(locals.row(i).transpose(), forced, original, cfg);
        best = (i == 0) ? s : std::max(best, s);
    }
    return best;
}

double glmcm_score(const ImageFeatures& image, const TextFeatureSet& forced,
                   const TextFeatureSet& original, const ScoreConfig& cfg) {
    return mcm_score(image.global, forced, original, cfg) +
           lmcm_score(image.locals, forced, original, cfg);
}

int predict_class(const Eigen::VectorXd& global, const TextFeatureSet& forced) {
    if (forced.rows() == 0) throw ConfigError("predict_class: empty text feature set");
    if (global.size() != forced.cols())
        throw ConfigError("predict_class: feature dimension mismatch");
    const Eigen::VectorXd sims = forced * global;
    int best = 0;
    for (int c = 1; c < sims.size(); ++c)
        if (sims(c) > sims(best)) best = c;  // strict >: ties keep the lowest index
    return best;
}

}  // namespace faood
