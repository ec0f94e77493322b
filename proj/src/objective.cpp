#include "faood/objective.hpp"

#include <algorithm>
#include <cmath>

#include "faood/errors.hpp"

namespace faood {

namespace {

void check_pair(const SimilarityPair& pair, double tau) {
    if (tau <= 0.0) throw ConfigError("temperature tau must be positive");
    if (pair.forced.size() == 0) throw ConfigError("similarity pair has no classes");
    if (pair.forced.size() != pair.original.size())
        throw ConfigError("forced/original similarity vectors differ in length");
    if (pair.label < 0 || pair.label >= pair.forced.size())
        throw ConfigError("label " + std::to_string(pair.label) + " out of range [0, " +
                          std::to_string(pair.forced.size()) + ")");
}

}  // namespace

double pairwise_sum(std::span<const double> values) {
    const size_t n = values.size();
    if (n <= 16) {
        double acc = 0.0;
        for (double v : values) acc += v;
        return acc;
    }
    const size_t half = n / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

Eigen::VectorXd class_probabilities(const Eigen::VectorXd& sims, double tau) {
    if (tau <= 0.0) throw ConfigError("temperature tau must be positive");
    if (sims.size() == 0) throw ConfigError("class_probabilities: empty similarity vector");
    const Eigen::VectorXd logits = sims / tau;
    const double peak = logits.maxCoeff();
    Eigen::VectorXd probs = (logits.array() - peak).exp().matrix();
    return probs / probs.sum();
}

double fce_loss(const SimilarityPair& pair, double tau) {
    check_pair(pair, tau);
    const int num_classes = static_cast<int>(pair.forced.size());

    double peak = pair.forced(0) / tau;
    for (int j = 0; j < num_classes; ++j) peak = std::max(peak, pair.forced(j) / tau);
    for (int j = 0; j < num_classes; ++j) peak = std::max(peak, pair.original(j) / tau);

    double mass = 0.0;
    for (int j = 0; j < num_classes; ++j) mass += std::exp(pair.forced(j) / tau - peak);
    for (int j = 0; j < num_classes; ++j) mass += std::exp(pair.original(j) / tau - peak);
    return -(pair.forced(pair.label) / tau) + peak + std::log(mass);
}

double fce_k_loss(const SimilarityPair& pair, double tau, double forced_coefficient) {
    check_pair(pair, tau);
    if (forced_coefficient < 0.0) throw ConfigError("forced coefficient K must be >= 0");
    const int num_classes = static_cast<int>(pair.forced.size());

    if (forced_coefficient == 0.0) return cross_entropy_loss(pair.forced, pair.label, tau);

    // K enters as log K on the original logits; one max-subtracted
    // log-sum-exp then covers both families without overflow.
    const double log_k = std::log(forced_coefficient);
    double peak = pair.forced(0) / tau;
    for (int j = 0; j < num_classes; ++j) peak = std::max(peak, pair.forced(j) / tau);
    for (int j = 0; j < num_classes; ++j)
        peak = std::max(peak, pair.original(j) / tau + log_k);

    double mass = 0.0;
    for (int j = 0; j < num_classes; ++j) mass += std::exp(pair.forced(j) / tau - peak);
    for (int j = 0; j < num_classes; ++j)
        mass += std::exp(pair.original(j) / tau + log_k - peak);
    return -(pair.forced(pair.label) / tau) + peak + std::log(mass);
}

double cross_entropy_loss(const Eigen::VectorXd& forced_sims, int label, double tau) {
    if (tau <= 0.0) throw ConfigError("temperature tau must be positive");
    if (forced_sims.size() == 0) throw ConfigError("cross_entropy_loss: empty similarity vector");
    if (label < 0 || label >= forced_sims.size())
        throw ConfigError("label " + std::to_string(label) + " out of range [0, " +
                          std::to_string(forced_sims.size()) + ")");
    const int num_classes = static_cast<int>(forced_sims.size());

    double peak = forced_sims(0) / tau;
    for (int j = 0; j < num_classes; ++j) peak = std::max(peak, forced_sims(j) / tau);
    double mass = 0.0;
    for (int j = 0; j < num_classes; ++j) mass += std::exp(forced_sims(j) / tau - peak);
    return -(forced_sims(label) / tau) + peak + std::log(mass);
}

double batch_loss(std::span<const SimilarityPair> pairs, double tau, double forced_coefficient) {
    if (pairs.empty()) throw ConfigError("batch_loss: empty batch");
    std::vector<double> losses;
    losses.reserve(pairs.size());
    for (const auto& pair : pairs) losses.push_back(fce_k_loss(pair, tau, forced_coefficient));
    return pairwise_sum(losses) / static_cast<double>(losses.size());
}

Eigen::VectorXd fce_k_grad_forced(const SimilarityPair& pair, double tau,
                                  double forced_coefficient) {
    check_pair(pair, tau);
    if (forced_coefficient < 0.0) throw ConfigError("forced coefficient K must be >= 0");
    const int num_classes = static_cast<int>(pair.forced.size());

    if (forced_coefficient == 0.0) return cross_entropy_grad(pair.forced, pair.label, tau);

    const double log_k = std::log(forced_coefficient);
    double peak = pair.forced(0) / tau;
    for (int j = 0; j < num_classes; ++j) peak = std::max(peak, pair.forced(j) / tau);
    for (int j = 0; j < num_classes; ++j)
        peak = std::max(peak, pair.original(j) / tau + log_k);

    Eigen::VectorXd forced_mass(num_classes);
    double total = 0.0;
    for (int j = 0; j < num_classes; ++j) {
        forced_mass(j) = std::exp(pair.forced(j) / tau - peak);
        total += forced_mass(j);
    }
    for (int j = 0; j < num_classes; ++j)
        total += std::exp(pair.original(j) / tau + log_k - peak);

    Eigen::VectorXd grad = forced_mass / total / tau;
    grad(pair.label) -= 1.0 / tau;
    return grad;
}

Eigen::VectorXd cross_entropy_grad(const Eigen::VectorXd& forced_sims, int label, double tau) {
    if (tau <= 0.0) throw ConfigError("temperature tau must be positive");
    if (label < 0 || label >= forced_sims.size())
        throw ConfigError("label out of range in cross_entropy_grad");
    const int num_classes = static_cast<int>(forced_sims.size());

    double peak = forced_sims(0) / tau;
    for (int j = 0; j < num_classes; ++j) peak = std::max(peak, forced_sims(j) / tau);

    Eigen::VectorXd mass(num_classes);
    double total = 0.0;
    for (int j = 0; j < num_classes; ++j) {
        mass(j) = std::exp(forced_sims(j) / tau - peak);
        total += mass(j);
    }
    Eigen::VectorXd grad = mass / total / tau;
    grad(label) -= 1.0 / tau;
    return grad;
}

}  // namespace faood
