#include "faood/clip_adapter.hpp"

#include <fstream>

#include "faood/errors.hpp"
#include "faood/hash.hpp"
#include "faood/prompt.hpp"

#include "json.hpp"

namespace faood {

std::string prompt_context_hash(const PromptContext& context) {
    uint64_t h = kFnvOffset;
    auto fold_row = [&h](const Eigen::RowVectorXf& row) {
        h = fnv1a64(row.data(), sizeof(float) * static_cast<size_t>(row.size()), h);
    };
    for (int c = 0; c < context.num_classes; ++c) {
        const int offset = context.context_row_offset(c);
        for (int r = 0; r < context.context_len; ++r)
            fold_row(context.context.row(offset + r));
        const auto& tokens = context.class_tokens[static_cast<size_t>(c)];
        for (int r = 0; r < tokens.rows(); ++r) fold_row(tokens.row(r));
    }
    return hex64(h);
}

ClipFeatureAdapter::ClipFeatureAdapter(const std::filesystem::path& export_dir)
    : export_dir_(export_dir) {
    const auto index_path = export_dir / "export.json";
    std::ifstream in(index_path);
    if (!in) throw DataError("checkpoint export index not found: " + index_path.string());
    nlohmann::json index;
    try {
        index = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("invalid export index " + index_path.string() + ": " + e.what());
    }
    if (index.value("kind", std::string()) != "clip")
        throw FormatError("export index is not a checkpoint export: " + index_path.string());

    spec_.embed_dim = index.at("embed_dim").get<int>();
    spec_.token_dim = index.at("token_dim").get<int>();
    spec_.num_locals = index.at("num_locals").get<int>();
    spec_.max_context_len = index.at("max_context_len").get<int>();
    for (const auto& [token, values] : index.at("vocab").items()) {
        const auto row = values.get<std::vector<float>>();
        spec_.vocab[token] =
            Eigen::Map<const Eigen::RowVectorXf>(row.data(), static_cast<int>(row.size()));
    }
    if (index.contains("tokenization"))
        for (const auto& [name, tokens] : index.at("tokenization").items())
            spec_.tokenization_overrides[name] = tokens.get<std::vector<std::string>>();
    spec_.validate();

    for (const auto& entry : index.at("text_features"))
        text_feature_files_[entry.at("context_hash").get<std::string>()] =
            entry.at("file").get<std::string>();
}

TextFeatureSet ClipFeatureAdapter::encode_text(const PromptContext& context) const {
    context.validate(spec_);
    const std::string hash = prompt_context_hash(context);
    const auto it = text_feature_files_.find(hash);
    if (it == text_feature_files_.end())
        throw ConfigError("no exported text features for prompt context " + hash +
                          "; run tools/export_clip_features.py against this bank first");
    const EmbeddingCache cache = EmbeddingCache::read(export_dir_ / it->second);
    if (cache.count() != context.num_classes ||
        static_cast<int>(cache.dim) != spec_.embed_dim || cache.num_locals != 0)
        throw FormatError("exported text features " + it->second + " have the wrong shape");

    TextFeatureSet features(context.num_classes, spec_.embed_dim);
    for (int c = 0; c < context.num_classes; ++c)
        features.row(c) = cache.features(c).global.transpose();
    return features;
}

ImageFeatures ClipFeatureAdapter::encode_image(std::span<const float> raw) const {
    return split_cache_row(raw, spec_.embed_dim, spec_.num_locals);
}

}  // namespace faood
