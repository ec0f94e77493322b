#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace faood {

struct PromptContext;

/// Frozen encoder geometry plus the token-embedding vocabulary shared by
/// every prompt built against it.
struct EncoderSpec {
    int embed_dim = 0;        // d, feature dimension
    int token_dim = 0;        // word-embedding dimension
    int num_locals = 0;       // N, local image features per image
    int max_context_len = 0;  // token budget per prompt

    std::map<std::string, Eigen::RowVectorXf> vocab;

    // Class names whose tokenization differs from plain whitespace splitting
    // (real checkpoints use subword vocabularies and export these).
    std::map<std::string, std::vector<std::string>> tokenization_overrides;

    void validate() const;
    bool has_token(const std::string& token) const { return vocab.count(token) != 0; }
    const Eigen::RowVectorXf& lookup(const std::string& token) const;
};

// Lowercases and splits on whitespace/underscore/hyphen unless the spec
// carries an explicit override for the name.
std::vector<std::string> tokenize_class_name(const EncoderSpec& spec, const std::string& name);

struct ImageFeatures {
    Eigen::VectorXd global;  // z^g, unit norm, length d
    Eigen::MatrixXd locals;  // N x d, unit-norm rows
};

/// C x d matrix of unit-norm rows, one text feature per class.
using TextFeatureSet = Eigen::MatrixXd;

// Replaces a zero (or numerically dead) vector by e_1 before normalizing, so
// degenerate inputs stay inside the unit-norm contract instead of going NaN.
Eigen::VectorXd normalized_or_e1(const Eigen::VectorXd& v);

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;

    virtual const EncoderSpec& spec() const = 0;

    /// One unit-norm feature row per class, deterministic in (context, weights).
    virtual TextFeatureSet encode_text(const PromptContext& context) const = 0;

    /// Raw image payload -> unit-norm global + local features.
    virtual ImageFeatures encode_image(std::span<const float> raw) const = 0;

    /// Accumulates d<upstream, T>/d(context rows) into `grad`, which must have
    /// the same shape as the context matrix. upstream is C x d.
    virtual void encode_text_vjp(const PromptContext& context, const Eigen::MatrixXd& upstream,
                                 Eigen::MatrixXd& grad) const;

    virtual bool differentiable() const { return false; }
};

// ---------------------------------------------------------------------------
// Toy encoder: a small differentiable stand-in for the frozen CLIP towers.
// Text: position-weighted token mixing -> tanh -> fixed random projection ->
// L2 normalization. Image: fixed random projection of the raw vector; locals
// are projections of N disjoint slices of the input.
// ---------------------------------------------------------------------------

struct ToyEncoderConfig {
    uint64_t seed = 0;
    int embed_dim = 32;
    int token_dim = 16;
    int num_locals = 0;
    int max_context_len = 16;
    int image_input_dim = 64;
    std::vector<std::string> vocab_words;
};

class ToyEncoder final : public EmbeddingBackend {
public:
    explicit ToyEncoder(ToyEncoderConfig config);

    const EncoderSpec& spec() const override { return spec_; }
    TextFeatureSet encode_text(const PromptContext& context) const override;
    ImageFeatures encode_image(std::span<const float> raw) const override;
    void encode_text_vjp(const PromptContext& context, const Eigen::MatrixXd& upstream,
                         Eigen::MatrixXd& grad) const override;
    bool differentiable() const override { return true; }

    const ToyEncoderConfig& config() const { return config_; }
    int image_input_dim() const { return config_.image_input_dim; }

    /// Hash of all weights; two encoders from the same seed must agree.
    uint64_t weight_fingerprint() const;

    // Exposed for the straight-line oracle in tests.
    const Eigen::VectorXd& position_mix() const { return mix_; }
    const Eigen::MatrixXd& text_projection() const { return text_projection_; }
    const Eigen::MatrixXd& image_projection() const { return image_projection_; }

private:
    struct TextForward {
        Eigen::VectorXd pooled;
        Eigen::VectorXd gate;
        Eigen::VectorXd embedded;
        double norm = 0.0;
    };
    TextForward forward_class(const PromptContext& context, int c) const;

    ToyEncoderConfig config_;
    EncoderSpec spec_;
    Eigen::VectorXd mix_;              // per-position mixing weights
    Eigen::MatrixXd text_projection_;  // embed_dim x token_dim
    Eigen::MatrixXd image_projection_; // embed_dim x image_input_dim
    std::vector<Eigen::MatrixXd> local_projections_;  // embed_dim x slice_len
};

// Deterministic per-word embedding row; stable under vocabulary growth.
Eigen::RowVectorXf toy_vocab_row(uint64_t seed, const std::string& word, int token_dim);

// ---------------------------------------------------------------------------
// FAEMB1 embedding cache: magic "FAEMB1\0" + one pad byte, then little-endian
// u32 count, u32 dim, u32 num_locals, then count rows of
// (1+num_locals)*dim little-endian float32 values, global first.
// A sidecar JSON manifest (<file>.json) lists split/label/source per row.
// ---------------------------------------------------------------------------

struct CacheSidecarEntry {
    std::string split;
    int label = -1;  // -1 marks OOD
    std::string source;
};

struct EmbeddingCache {
    uint32_t dim = 0;
    uint32_t num_locals = 0;
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows;
    std::vector<CacheSidecarEntry> sidecar;

    int count() const { return static_cast<int>(rows.rows()); }
    int row_width() const { return static_cast<int>(1 + num_locals) * static_cast<int>(dim); }

    /// Splits a stored row into validated unit-norm features.
    ImageFeatures features(int row) const;

    void write(const std::filesystem::path& path) const;
    static EmbeddingCache read(const std::filesystem::path& path);
};

/// Pass-through backend over cached rows; text encoding delegates to an inner
/// encoder when one is supplied.
class CacheBackend final : public EmbeddingBackend {
public:
    CacheBackend(EncoderSpec spec, const EmbeddingBackend* text_backend = nullptr);

    const EncoderSpec& spec() const override { return spec_; }
    TextFeatureSet encode_text(const PromptContext& context) const override;
    ImageFeatures encode_image(std::span<const float> raw) const override;
    void encode_text_vjp(const PromptContext& context, const Eigen::MatrixXd& upstream,
                         Eigen::MatrixXd& grad) const override;
    bool differentiable() const override;

private:
    EncoderSpec spec_;
    const EmbeddingBackend* text_backend_ = nullptr;
};

// Shared row-splitting used by EmbeddingCache::features and CacheBackend.
ImageFeatures split_cache_row(std::span<const float> raw, int dim, int num_locals);

}  // namespace faood
