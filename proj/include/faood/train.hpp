#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "faood/data_io.hpp"
#include "faood/prompt.hpp"

#include "json.hpp"

namespace faood {

enum class LossKind { fce_k, cross_entropy };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& s);

struct TrainConfig {
    int shots = 16;
    int epochs = 50;
    double lr = 2e-3;
    int batch_size = 160;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double forced_coefficient = 3.0;  // K
    double tau = 1.0;
    uint64_t seed = 0;
    LossKind loss = LossKind::fce_k;

    void validate() const;
    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
    uint64_t fingerprint() const;
};

struct EpochStats {
    double mean_loss = 0.0;
    double lr = 0.0;  // learning rate of the epoch's first step
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochStats> epochs;
    double final_gap = 0.0;  // mean_c(s^f - s^o) over the training set
};

struct TrainExample {
    Eigen::VectorXd global;  // unit-norm image feature
    int label = 0;
};

/// Exactly `shots` entries per class, sampled without replacement and
/// returned in manifest order; deterministic in seed.
std::vector<ManifestEntry> sample_few_shot(const DatasetManifest& manifest, int shots,
                                           uint64_t seed);

/// Materializes global features for training.
std::vector<TrainExample> load_examples(const DatasetManifest& manifest,
                                        const EmbeddingBackend& backend,
                                        std::span<const ManifestEntry> entries);

/// base_lr * 0.5 * (1 + cos(pi * step / total_steps)), 0 <= step < total_steps.
double cosine_lr(int step, int total_steps, double base_lr);

/// SGD with momentum and weight decay over the forced context only; batch
/// order reshuffled per epoch from the seed. The bank is updated in place.
TrainLog train(const TrainConfig& cfg, DualPromptBank& bank, const EmbeddingBackend& backend,
               std::span<const TrainExample> data);

/// mean_c [ mean_{x in class c} cos(z, t^f_c) - cos(z, t^o_c) ].
double similarity_gap(const DualPromptBank& bank, const EmbeddingBackend& backend,
                      std::span<const TrainExample> data);

}  // namespace faood
