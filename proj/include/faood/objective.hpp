#pragma once

#include <Eigen/Core>
#include <span>

namespace faood {

/// Per-sample cosine similarities against both prompt families.
struct SimilarityPair {
    Eigen::VectorXd forced;    // s^f_j = cos(z, t^f_j), length C
    Eigen::VectorXd original;  // s^o_j = cos(z, t^o_j), length C
    int label = 0;             // y in [0, C)
};

/// Softmax over sims/tau with max-subtraction; entries sum to 1 and the
/// argmax matches the argmax of sims.
Eigen::VectorXd class_probabilities(const Eigen::VectorXd& sims, double tau);

/// Forced cross-entropy: the denominator pools both prompt families.
///   -log( e^{s^f_y/tau} / (sum_j e^{s^f_j/tau} + sum_j e^{s^o_j/tau}) )
double fce_loss(const SimilarityPair& pair, double tau);

/// FCE with forced coefficient K weighting the original-family partition.
/// K = 0 drops the original family entirely (plain cross-entropy over s^f,
/// the CoOp-equivalent configuration); K = 1 is fce_loss.
double fce_k_loss(const SimilarityPair& pair, double tau, double forced_coefficient);

/// Plain softmax cross-entropy over the forced similarities. Kept as an
/// independent code path for the CE ablation arm and the K = 0 equivalence
/// check.
double cross_entropy_loss(const Eigen::VectorXd& forced_sims, int label, double tau);

/// Arithmetic mean of per-sample FCE-K losses, pairwise-summed for a fixed
/// reduction order.
double batch_loss(std::span<const SimilarityPair> pairs, double tau, double forced_coefficient);

/// d(fce_k_loss)/d(s^f): (softmax mass of forced candidate j - [j == y]) / tau.
/// The original family only contributes normalization mass; its gradient
/// lands on frozen tensors and is not materialized.
Eigen::VectorXd fce_k_grad_forced(const SimilarityPair& pair, double tau,
                                  double forced_coefficient);

/// d(cross_entropy_loss)/d(s^f); independent path matching the CE arm.
Eigen::VectorXd cross_entropy_grad(const Eigen::VectorXd& forced_sims, int label, double tau);

/// Fixed-order pairwise summation.
double pairwise_sum(std::span<const double> values);

}  // namespace faood
