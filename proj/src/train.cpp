#include "faood/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numbers>

#include "faood/errors.hpp"
#include "faood/hash.hpp"
#include "faood/objective.hpp"
#include "faood/rng.hpp"

namespace faood {

std::string to_string(LossKind kind) {
    return kind == LossKind::fce_k ? "fce_k" : "cross_entropy";
}

LossKind loss_kind_from_string(const std::string& s) {
    if (s == "fce_k") return LossKind::fce_k;
    if (s == "cross_entropy" || s == "ce") return LossKind::cross_entropy;
    throw ConfigError("unknown loss kind: '" + s + "'");
}

void TrainConfig::validate() const {
    if (shots < 1) throw ConfigError("shots must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
    if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
    if (forced_coefficient < 0.0) throw ConfigError("forced coefficient K must be >= 0");
    if (tau <= 0.0) throw ConfigError("tau must be positive");
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["shots"] = shots;
    j["epochs"] = epochs;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["momentum"] = momentum;
    j["weight_decay"] = weight_decay;
    j["forced_coefficient"] = forced_coefficient;
    j["tau"] = tau;
    j["seed"] = seed;
    j["loss"] = to_string(loss);
    j["schedule"] = "cosine";
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig cfg;
    cfg.shots = j.at("shots").get<int>();
    cfg.epochs = j.at("epochs").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.momentum = j.at("momentum").get<double>();
    cfg.weight_decay = j.at("weight_decay").get<double>();
    cfg.forced_coefficient = j.at("forced_coefficient").get<double>();
    cfg.tau = j.at("tau").get<double>();
    cfg.seed = j.at("seed").get<uint64_t>();
    cfg.loss = loss_kind_from_string(j.at("loss").get<std::string>());
    return cfg;
}

uint64_t TrainConfig::fingerprint() const { return fnv1a64(to_json().dump()); }

std::vector<ManifestEntry> sample_few_shot(const DatasetManifest& manifest, int shots,
                                           uint64_t seed) {
    if (shots < 1) throw ConfigError("sample_few_shot: shots must be >= 1");
    if (manifest.is_ood()) throw DataError("sample_few_shot: cannot sample an OOD manifest");

    std::map<int, std::vector<size_t>> by_class;
    for (size_t i = 0; i < manifest.entries.size(); ++i)
        by_class[manifest.entries[i].label].push_back(i);

    Rng rng(splitmix64(seed ^ 0x66657773686f74ull));
    std::vector<size_t> selected;
    for (int c = 0; c < manifest.num_classes(); ++c) {
        auto it = by_class.find(c);
        const size_t available = it == by_class.end() ? 0 : it->second.size();
        if (available < static_cast<size_t>(shots))
            throw DataError("class '" + manifest.class_names[static_cast<size_t>(c)] + "' has " +
                            std::to_string(available) + " examples, need " +
                            std::to_string(shots));
        // Partial Fisher-Yates, then manifest order within the class.
        std::vector<size_t>& pool = it->second;
        for (int k = 0; k < shots; ++k) {
            const size_t j = static_cast<size_t>(k) + rng.below(pool.size() - static_cast<size_t>(k));
            std::swap(pool[static_cast<size_t>(k)], pool[j]);
        }
        std::vector<size_t> chosen(pool.begin(), pool.begin() + shots);
        std::sort(chosen.begin(), chosen.end());
        selected.insert(selected.end(), chosen.begin(), chosen.end());
    }
    std::vector<ManifestEntry> out;
    out.reserve(selected.size());
    for (size_t i : selected) out.push_back(manifest.entries[i]);
    return out;
}

std::vector<TrainExample> load_examples(const DatasetManifest& manifest,
                                        const EmbeddingBackend& backend,
                                        std::span<const ManifestEntry> entries) {
    FeatureSource source(manifest, backend);
    std::vector<TrainExample> out;
    out.reserve(entries.size());
    for (const auto& entry : entries)
        out.push_back({source.get(entry).global, entry.label});
    return out;
}

double cosine_lr(int step, int total_steps, double base_lr) {
    if (total_steps < 1) throw ConfigError("cosine_lr: total_steps must be >= 1");
    if (step < 0 || step >= total_steps)
        throw ConfigError("cosine_lr: step " + std::to_string(step) + " outside [0, " +
                          std::to_string(total_steps) + ")");
    return base_lr * 0.5 *
           (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) /
                           static_cast<double>(total_steps)));
}

TrainLog train(const TrainConfig& cfg, DualPromptBank& bank, const EmbeddingBackend& backend,
               std::span<const TrainExample> data) {
    cfg.validate();
    if (!backend.differentiable())
        throw ConfigError("training requires a backend with text-encoder gradients");
    if (data.empty()) throw ConfigError("train: empty training set");
    for (const auto& ex : data)
        if (ex.label < 0 || ex.label >= bank.num_classes())
            throw DataError("train: label " + std::to_string(ex.label) +
                            " outside the bank's class range");

    TrainLog log;
    if (cfg.epochs == 0) {
        log.final_gap = similarity_gap(bank, backend, data);
        return log;
    }

    // Frozen features are constant; one encode serves the whole run.
    const TextFeatureSet original_features = backend.encode_text(bank.original);
    const int num_classes = bank.num_classes();
    const int batches_per_epoch =
        static_cast<int>((data.size() + static_cast<size_t>(cfg.batch_size) - 1) /
                         static_cast<size_t>(cfg.batch_size));
    const int total_steps = cfg.epochs * batches_per_epoch;

    Eigen::MatrixXf& params = trainable_parameters(bank);
    Eigen::MatrixXd velocity = Eigen::MatrixXd::Zero(params.rows(), params.cols());

    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(splitmix64(cfg.seed ^ 0x747261696e0aull));

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto epoch_start = std::chrono::steady_clock::now();
        shuffle_rng.shuffle(order);

        std::vector<double> batch_losses;
        EpochStats stats;
        stats.lr = cosine_lr(step, total_steps, cfg.lr);

        for (int b = 0; b < batches_per_epoch; ++b, ++step) {
            const size_t begin = static_cast<size_t>(b) * static_cast<size_t>(cfg.batch_size);
            const size_t end = std::min(begin + static_cast<size_t>(cfg.batch_size), data.size());
            const int batch = static_cast<int>(end - begin);

            const TextFeatureSet forced_features = backend.encode_text(bank.forced);

            // Per-sample losses and dL/ds^f, reduced in a fixed pairwise order.
            std::vector<double> sample_losses(static_cast<size_t>(batch));
            Eigen::MatrixXd upstream = Eigen::MatrixXd::Zero(num_classes, forced_features.cols());
            const double inv_batch = 1.0 / static_cast<double>(batch);
            for (int i = 0; i < batch; ++i) {
                const auto& ex = data[order[begin + static_cast<size_t>(i)]];
                SimilarityPair pair;
                pair.forced = forced_features * ex.global;
                pair.label = ex.label;
                Eigen::VectorXd grad_s;
                if (cfg.loss == LossKind::cross_entropy) {
                    sample_losses[static_cast<size_t>(i)] =
                        cross_entropy_loss(pair.forced, pair.label, cfg.tau);
                    grad_s = cross_entropy_grad(pair.forced, pair.label, cfg.tau);
                } else {
                    pair.original = original_features * ex.global;
                    sample_losses[static_cast<size_t>(i)] =
                        fce_k_loss(pair, cfg.tau, cfg.forced_coefficient);
                    grad_s = fce_k_grad_forced(pair, cfg.tau, cfg.forced_coefficient);
                }
                upstream += (inv_batch * grad_s) * ex.global.transpose();
            }
            const double loss = pairwise_sum(sample_losses) * inv_batch;
            if (!std::isfinite(loss))
                throw NumericError("non-finite loss at step " + std::to_string(step) +
                                   " (epoch " + std::to_string(epoch) + ", batch " +
                                   std::to_string(b) + ")");
            batch_losses.push_back(loss);

            Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(params.rows(), params.cols());
            backend.encode_text_vjp(bank.forced, upstream, grad);
            grad += cfg.weight_decay * params.cast<double>();

            const double lr_t = cosine_lr(step, total_steps, cfg.lr);
            velocity = cfg.momentum * velocity + grad;
            params = (params.cast<double>() - lr_t * velocity).cast<float>();
        }

        stats.mean_loss =
            pairwise_sum(batch_losses) / static_cast<double>(batch_losses.size());
        stats.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - epoch_start)
                .count();
        log.epochs.push_back(stats);
    }

    log.final_gap = similarity_gap(bank, backend, data);
    return log;
}

double similarity_gap(const DualPromptBank& bank, const EmbeddingBackend& backend,
                      std::span<const TrainExample> data) {
    if (data.empty()) throw ConfigError("similarity_gap: empty data");
    const auto [forced_features, original_features] = text_features(bank, backend);

    std::vector<double> class_gap(static_cast<size_t>(bank.num_classes()), 0.0);
    std::vector<int> class_count(static_cast<size_t>(bank.num_classes()), 0);
    for (const auto& ex : data) {
        const double s_f = forced_features.row(ex.label).dot(ex.global);
        const double s_o = original_features.row(ex.label).dot(ex.global);
        class_gap[static_cast<size_t>(ex.label)] += s_f - s_o;
        ++class_count[static_cast<size_t>(ex.label)];
    }
    double total = 0.0;
    int populated = 0;
    for (size_t c = 0; c < class_gap.size(); ++c) {
        if (class_count[c] == 0) continue;
        total += class_gap[c] / static_cast<double>(class_count[c]);
        ++populated;
    }
    if (populated == 0) throw DataError("similarity_gap: no labeled examples");
    return total / static_cast<double>(populated);
}

}  // namespace faood
