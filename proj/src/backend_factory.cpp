#include "faood/backend_factory.hpp"

#include "faood/clip_adapter.hpp"
#include "faood/data_io.hpp"
#include "faood/errors.hpp"

namespace faood {

namespace {

// The cache backend needs an inner encoder for prompt encoding; it owns it.
class OwningCacheBackend final : public EmbeddingBackend {
public:
    explicit OwningCacheBackend(std::unique_ptr<EmbeddingBackend> inner)
        : inner_(std::move(inner)), cache_(inner_->spec(), inner_.get()) {}

    const EncoderSpec& spec() const override { return cache_.spec(); }
    TextFeatureSet encode_text(const PromptContext& context) const override {
        return cache_.encode_text(context);
    }
    ImageFeatures encode_image(std::span<const float> raw) const override {
        return cache_.encode_image(raw);
    }
    void encode_text_vjp(const PromptContext& context, const Eigen::MatrixXd& upstream,
                         Eigen::MatrixXd& grad) const override {
        cache_.encode_text_vjp(context, upstream, grad);
    }
    bool differentiable() const override { return cache_.differentiable(); }

private:
    std::unique_ptr<EmbeddingBackend> inner_;
    CacheBackend cache_;
};

}  // namespace

std::unique_ptr<EmbeddingBackend> make_backend(const nlohmann::json& descriptor,
                                               const std::filesystem::path& base_dir) {
    const std::string kind = descriptor.value("kind", std::string());
    if (kind == "toy")
        return std::make_unique<ToyEncoder>(toy_encoder_config_from_descriptor(descriptor));
    if (kind == "clip") {
        std::filesystem::path dir = descriptor.at("export_dir").get<std::string>();
        if (dir.is_relative()) dir = base_dir / dir;
        return std::make_unique<ClipFeatureAdapter>(dir);
    }
    if (kind == "cache")
        return std::make_unique<OwningCacheBackend>(
            make_backend(descriptor.at("inner"), base_dir));
    throw ConfigError("unknown backend kind: '" + kind + "'");
}

LoadedBank load_bank(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path))
        throw ConfigError("bank file not found: " + path.string());
    RawBank raw = load_bank_raw(path);
    LoadedBank loaded;
    loaded.encoder_desc = raw.header.at("encoder");
    loaded.backend = make_backend(loaded.encoder_desc, path.parent_path());
    loaded.bank = assemble_bank(raw, loaded.backend->spec());
    return loaded;
}

}  // namespace faood
