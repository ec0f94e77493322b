#pragma once

#include <Eigen/Core>
#include <string>

#include "faood/encoder.hpp"

namespace faood {

enum class ScoreKind { mcm, glmcm };

std::string to_string(ScoreKind kind);
ScoreKind score_kind_from_string(const std::string& s);

struct ScoreConfig {
    double tau0 = 1.0;                // inference temperature
    double forced_coefficient = 3.0;  // K, copied from the bank
    ScoreKind kind = ScoreKind::mcm;

    // Eq. 5 as printed leaves the weight of an original-family winner open;
    // weighting it by K is the reading under which K = 0 removes the original
    // prompt exactly. Off = unweighted numerator.
    bool numerator_k_weighting = true;

    // Restricts the max to the forced family while keeping the pooled
    // denominator; kept behind a flag, off by default.
    bool restrict_max_to_forced = false;
};

/// Maximum softmax mass over the concatenated candidate set (2C candidates
/// for K > 0, forced-only for K = 0) for a global image feature.
double mcm_score(const Eigen::VectorXd& global, const TextFeatureSet& forced,
                 const TextFeatureSet& original, const ScoreConfig& cfg);

/// Same score evaluated on precomputed cosine vectors.
double mcm_from_cosines(const Eigen::VectorXd& forced_cosines,
                        const Eigen::VectorXd& original_cosines, const ScoreConfig& cfg);

/// MCM maximized over the local features as well as the candidates.
double lmcm_score(const Eigen::MatrixXd& locals, const TextFeatureSet& forced,
                  const TextFeatureSet& original, const ScoreConfig& cfg);

/// mcm_score(global) + lmcm_score(locals).
double glmcm_score(const ImageFeatures& image, const TextFeatureSet& forced,
                   const TextFeatureSet& original, const ScoreConfig& cfg);

/// ID classification depends solely on the forced prompt; ties resolve to the
/// lowest class index.
int predict_class(const Eigen::VectorXd& global, const TextFeatureSet& forced);

/// An image's OOD score plus classification bookkeeping.
struct ScoredSample {
    double score = 0.0;
    int predicted_class = -1;
    int truth = -1;  // ID class index, or -1 for OOD
};

}  // namespace faood
