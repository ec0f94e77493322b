#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "faood/encoder.hpp"

namespace faood {

/// Backend over features exported from a real checkpoint (see
/// tools/export_clip_features.py). Image features pass through FAEMB1 caches;
/// text features are served from export files keyed by a content hash of the
/// exact prompt context they were computed from, so evaluation runs against
/// real encoders without loading model weights here. Not differentiable:
/// training against a real checkpoint is outside this backend.
class ClipFeatureAdapter final : public EmbeddingBackend {
public:
    explicit ClipFeatureAdapter(const std::filesystem::path& export_dir);

    const EncoderSpec& spec() const override { return spec_; }
    TextFeatureSet encode_text(const PromptContext& context) const override;
    ImageFeatures encode_image(std::span<const float> raw) const override;

private:
    EncoderSpec spec_;
    std::filesystem::path export_dir_;
    std::map<std::string, std::string> text_feature_files_;  // context hash -> faemb file
};

/// Hash over the little-endian f32 bytes of every class's prompt sequence
/// (context rows then class-token rows); the export script computes the same
/// value to key its text-feature files.
std::string prompt_context_hash(const PromptContext& context);

}  // namespace faood
