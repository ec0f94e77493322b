#include "faood/encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "faood/errors.hpp"
#include "faood/hash.hpp"
#include "faood/prompt.hpp"
#include "faood/rng.hpp"

#include "json.hpp"

namespace faood {

namespace {

constexpr double kDegenerateNorm = 1e-12;

// Strength of the class-token gate in the toy text encoder's mixing layer.
// The gate is what lets a shared context move each class's feature along a
// different direction, the role attention plays in a real text tower.
constexpr double kGateStrength = 8.0;

// Row-major fill keeps the draw order independent of Eigen's storage layout.
Eigen::MatrixXd random_matrix(Rng& rng, int rows, int cols, double stddev) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, stddev);
    return m;
}

void write_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t read_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void EncoderSpec::validate() const {
    if (embed_dim < 1) throw ConfigError("EncoderSpec: embed_dim must be >= 1");
    if (token_dim < 1) throw ConfigError("EncoderSpec: token_dim must be >= 1");
    if (max_context_len < 1) throw ConfigError("EncoderSpec: max_context_len must be >= 1");
    if (num_locals < 0) throw ConfigError("EncoderSpec: num_locals must be >= 0");
    for (const auto& [word, row] : vocab) {
        if (row.size() != token_dim)
            throw ConfigError("EncoderSpec: vocab row for '" + word + "' has dimension " +
                              std::to_string(row.size()) + ", expected " +
                              std::to_string(token_dim));
    }
}

const Eigen::RowVectorXf& EncoderSpec::lookup(const std::string& token) const {
    auto it = vocab.find(token);
    if (it == vocab.end()) throw VocabularyError("unknown token: '" + token + "'");
    return it->second;
}

std::vector<std::string> tokenize_class_name(const EncoderSpec& spec, const std::string& name) {
    auto it = spec.tokenization_overrides.find(name);
    if (it != spec.tokenization_overrides.end()) return it->second;

    std::vector<std::string> tokens;
    std::string current;
    for (char ch : name) {
        if (ch == ' ' || ch == '_' || ch == '-' || ch == '\t') {
            if (!current.empty()) tokens.push_back(std::move(current));
            current.clear();
        } else {
            current.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    if (tokens.empty()) throw ConfigError("class name tokenizes to nothing: '" + name + "'");
    return tokens;
}

Eigen::VectorXd normalized_or_e1(const Eigen::VectorXd& v) {
    const double norm = v.norm();
    if (norm < kDegenerateNorm) {
        Eigen::VectorXd e1 = Eigen::VectorXd::Zero(v.size());
        e1(0) = 1.0;
        return e1;
    }
    return v / norm;
}

void EmbeddingBackend::encode_text_vjp(const PromptContext&, const Eigen::MatrixXd&,
                                       Eigen::MatrixXd&) const {
    throw ConfigError("this backend does not provide text-encoder gradients");
}

// ---------------------------------------------------------------------------
// ToyEncoder
// ---------------------------------------------------------------------------

Eigen::RowVectorXf toy_vocab_row(uint64_t seed, const std::string& word, int token_dim) {
    Rng rng(splitmix64(seed ^ fnv1a64(word)));
    const double stddev = 1.0 / std::sqrt(static_cast<double>(token_dim));
    Eigen::RowVectorXf row(token_dim);
    for (int i = 0; i < token_dim; ++i) row(i) = static_cast<float>(rng.normal(0.0, stddev));
    return row;
}

ToyEncoder::ToyEncoder(ToyEncoderConfig config) : config_(std::move(config)) {
    spec_.embed_dim = config_.embed_dim;
    spec_.token_dim = config_.token_dim;
    spec_.num_locals = config_.num_locals;
    spec_.max_context_len = config_.max_context_len;
    for (const auto& word : config_.vocab_words)
        spec_.vocab[word] = toy_vocab_row(config_.seed, word, config_.token_dim);
    spec_.validate();

    if (config_.image_input_dim < 1) throw ConfigError("toy encoder: image_input_dim must be >= 1");
    if (config_.num_locals > 0 && config_.image_input_dim % config_.num_locals != 0)
        throw ConfigError("toy encoder: image_input_dim must be divisible by num_locals");

    const double token_std = 1.0 / std::sqrt(static_cast<double>(config_.token_dim));
    Rng rng(splitmix64(config_.seed ^ 0x746f79656e63ull));  // weight stream
    // Later positions mix in more strongly, so class-name tokens dominate the
    // pooled embedding the way they dominate a real text tower's EOT feature.
    mix_.resize(config_.max_context_len);
    for (int i = 0; i < config_.max_context_len; ++i)
        mix_(i) = rng.uniform(0.5, 1.5) * std::pow(1.45, i);
    text_projection_ = random_matrix(rng, config_.embed_dim, config_.token_dim, token_std);

    const double image_std = 1.0 / std::sqrt(static_cast<double>(config_.image_input_dim));
    image_projection_ = random_matrix(rng, config_.embed_dim, config_.image_input_dim, image_std);
    if (config_.num_locals > 0) {
        const int slice = config_.image_input_dim / config_.num_locals;
        const double slice_std = 1.0 / std::sqrt(static_cast<double>(slice));
        for (int i = 0; i < config_.num_locals; ++i)
            local_projections_.push_back(random_matrix(rng, config_.embed_dim, slice, slice_std));
    }
}

// Mixing layer for one class: position-weighted pooling of the token rows,
// gated elementwise by the mean class-token embedding. The gate couples the
// shared context to each class so the context can steer classes individually.
ToyEncoder::TextForward ToyEncoder::forward_class(const PromptContext& context, int c) const {
    TextForward fwd;
    fwd.pooled = Eigen::VectorXd::Zero(config_.token_dim);
    const int offset = context.context_row_offset(c);
    for (int r = 0; r < context.context_len; ++r)
        fwd.pooled += mix_(r) * context.context.row(offset + r).cast<double>().transpose();
    const auto& tokens = context.class_tokens[static_cast<size_t>(c)];
    Eigen::VectorXd class_mean = Eigen::VectorXd::Zero(config_.token_dim);
    for (int r = 0; r < tokens.rows(); ++r) {
        fwd.pooled += mix_(context.context_len + r) * tokens.row(r).cast<double>().transpose();
        class_mean += tokens.row(r).cast<double>().transpose();
    }
    class_mean /= static_cast<double>(tokens.rows());
    fwd.gate = (1.0 + kGateStrength * class_mean.array()).matrix();
    fwd.embedded = text_projection_ * fwd.pooled.cwiseProduct(fwd.gate);
    fwd.norm = fwd.embedded.norm();
    return fwd;
}

TextFeatureSet ToyEncoder::encode_text(const PromptContext& context) const {
    context.validate(spec_);
    TextFeatureSet features(context.num_classes, config_.embed_dim);
    for (int c = 0; c < context.num_classes; ++c)
        features.row(c) = normalized_or_e1(forward_class(context, c).embedded).transpose();
    return features;
}

void ToyEncoder::encode_text_vjp(const PromptContext& context, const Eigen::MatrixXd& upstream,
                                 Eigen::MatrixXd& grad) const {
    context.validate(spec_);
    if (upstream.rows() != context.num_classes || upstream.cols() != config_.embed_dim)
        throw ConfigError("encode_text_vjp: upstream must be C x embed_dim");
    if (grad.rows() != context.context.rows() || grad.cols() != context.context.cols())
        throw ConfigError("encode_text_vjp: grad shape must match the context matrix");

    for (int c = 0; c < context.num_classes; ++c) {
        const TextForward fwd = forward_class(context, c);
        if (fwd.norm < kDegenerateNorm) continue;  // output pinned to e_1; gradient vanishes
        const Eigen::VectorXd unit = fwd.embedded / fwd.norm;

        const Eigen::VectorXd u = upstream.row(c).transpose();
        const Eigen::VectorXd d_embedded = (u - unit.dot(u) * unit) / fwd.norm;
        const Eigen::VectorXd d_pooled =
            (text_projection_.transpose() * d_embedded).cwiseProduct(fwd.gate);

        const int offset = context.context_row_offset(c);
        for (int r = 0; r < context.context_len; ++r)
            grad.row(offset + r) += mix_(r) * d_pooled.transpose();
    }
}

ImageFeatures ToyEncoder::encode_image(std::span<const float> raw) const {
    if (static_cast<int>(raw.size()) != config_.image_input_dim)
        throw ConfigError("toy encoder: raw image has dimension " + std::to_string(raw.size()) +
                          ", expected " + std::to_string(config_.image_input_dim));
    Eigen::VectorXd x(config_.image_input_dim);
    for (int i = 0; i < config_.image_input_dim; ++i) x(i) = static_cast<double>(raw[i]);

    ImageFeatures out;
    out.global = normalized_or_e1(image_projection_ * x);
    out.locals.resize(config_.num_locals, config_.embed_dim);
    if (config_.num_locals > 0) {
        const int slice = config_.image_input_dim / config_.num_locals;
        for (int i = 0; i < config_.num_locals; ++i) {
            const Eigen::VectorXd piece = x.segment(i * slice, slice);
            out.locals.row(i) = normalized_or_e1(local_projections_[i] * piece).transpose();
        }
    }
    return out;
}

uint64_t ToyEncoder::weight_fingerprint() const {
    uint64_t h = kFnvOffset;
    auto fold = [&h](const Eigen::MatrixXd& m) {
        for (int r = 0; r < m.rows(); ++r)
            for (int c = 0; c < m.cols(); ++c) {
                const double v = m(r, c);
                h = fnv1a64(&v, sizeof(v), h);
            }
    };
    fold(mix_);
    fold(text_projection_);
    fold(image_projection_);
    for (const auto& m : local_projections_) fold(m);
    for (const auto& [word, row] : spec_.vocab) {
        h = fnv1a64(word, h);
        h = fnv1a64(row.data(), sizeof(float) * row.size(), h);
    }
    return h;
}

// ---------------------------------------------------------------------------
// FAEMB1 cache
// ---------------------------------------------------------------------------

namespace {
constexpr char kCacheMagic[8] = {'F', 'A', 'E', 'M', 'B', '1', '\0', '\0'};
}

ImageFeatures split_cache_row(std::span<const float> raw, int dim, int num_locals) {
    const size_t expected = static_cast<size_t>(1 + num_locals) * static_cast<size_t>(dim);
    if (raw.size() != expected)
        throw DataError("cache row has " + std::to_string(raw.size()) + " values, expected " +
                        std::to_string(expected));
    auto take = [&](int part) {
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v(i) = static_cast<double>(raw[part * dim + i]);
        const double norm = v.norm();
        if (std::abs(norm - 1.0) > 1e-4)
            throw DataError("cache row part " + std::to_string(part) +
                            " is not unit-norm (|v| = " + std::to_string(norm) + ")");
        return Eigen::VectorXd(v / norm);
    };
    ImageFeatures out;
    out.global = take(0);
    out.locals.resize(num_locals, dim);
    for (int i = 0; i < num_locals; ++i) out.locals.row(i) = take(1 + i).transpose();
    return out;
}

ImageFeatures EmbeddingCache::features(int row) const {
    if (row < 0 || row >= count())
        throw DataError("cache row " + std::to_string(row) + " out of range [0, " +
                        std::to_string(count()) + ")");
    return split_cache_row(std::span<const float>(rows.row(row).data(), row_width()),
                           static_cast<int>(dim), static_cast<int>(num_locals));
}

void EmbeddingCache::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open cache for writing: " + path.string());
    out.write(kCacheMagic, 8);
    write_u32(out, static_cast<uint32_t>(rows.rows()));
    write_u32(out, dim);
    write_u32(out, num_locals);
    out.write(reinterpret_cast<const char*>(rows.data()),
              static_cast<std::streamsize>(sizeof(float) * rows.size()));
    if (!out) throw DataError("short write to cache: " + path.string());

    if (!sidecar.empty()) {
        if (static_cast<int>(sidecar.size()) != count())
            throw DataError("cache sidecar has " + std::to_string(sidecar.size()) +
                            " entries for " + std::to_string(count()) + " rows");
        nlohmann::ordered_json entries = nlohmann::ordered_json::array();
        for (const auto& e : sidecar)
            entries.push_back({{"split", e.split}, {"label", e.label}, {"source", e.source}});
        std::ofstream js(path.string() + ".json", std::ios::trunc);
        js << entries.dump(2) << "\n";
    }
}

EmbeddingCache EmbeddingCache::read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open cache: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCacheMagic, 7) != 0)
        throw FormatError("bad cache magic in " + path.string());

    EmbeddingCache cache;
    const uint32_t count = read_u32(in);
    cache.dim = read_u32(in);
    cache.num_locals = read_u32(in);
    if (!in) throw FormatError("truncated cache header in " + path.string());
    if (cache.dim == 0) throw FormatError("cache declares dim = 0: " + path.string());

    cache.rows.resize(count, cache.row_width());
    in.read(reinterpret_cast<char*>(cache.rows.data()),
            static_cast<std::streamsize>(sizeof(float) * cache.rows.size()));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * cache.rows.size()))
        throw FormatError("truncated cache payload in " + path.string());

    const auto sidecar_path = path.string() + ".json";
    if (std::filesystem::exists(sidecar_path)) {
        std::ifstream js(sidecar_path);
        nlohmann::json entries = nlohmann::json::parse(js, nullptr, true);
        for (const auto& e : entries)
            cache.sidecar.push_back({e.at("split").get<std::string>(), e.at("label").get<int>(),
                                     e.value("source", std::string())});
        if (cache.sidecar.size() != count)
            throw FormatError("cache sidecar row count mismatch for " + path.string());
    }
    return cache;
}

// ---------------------------------------------------------------------------
// CacheBackend
// ---------------------------------------------------------------------------

CacheBackend::CacheBackend(EncoderSpec spec, const EmbeddingBackend* text_backend)
    : spec_(std::move(spec)), text_backend_(text_backend) {
    spec_.validate();
}

TextFeatureSet CacheBackend::encode_text(const PromptContext& context) const {
    if (!text_backend_)
        throw ConfigError("cache backend has no text encoder attached");
    return text_backend_->encode_text(context);
}

void CacheBackend::encode_text_vjp(const PromptContext& context, const Eigen::MatrixXd& upstream,
                                   Eigen::MatrixXd& grad) const {
    if (!text_backend_)
        throw ConfigError("cache backend has no text encoder attached");
    text_backend_->encode_text_vjp(context, upstream, grad);
}

bool CacheBackend::differentiable() const {
    return text_backend_ != nullptr && text_backend_->differentiable();
}

ImageFeatures CacheBackend::encode_image(std::span<const float> raw) const {
    return split_cache_row(raw, spec_.embed_dim, spec_.num_locals);
}

}  // namespace faood
