#include "faood/prompt.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include "faood/errors.hpp"
#include "faood/hash.hpp"
#include "faood/rng.hpp"

namespace faood {

namespace {

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

// Row-major f32 block, little-endian. This code assumes a little-endian host.
void write_matrix(std::ostream& out, const Eigen::MatrixXf& m) {
    for (int r = 0; r < m.rows(); ++r)
        out.write(reinterpret_cast<const char*>(Eigen::RowVectorXf(m.row(r)).data()),
                  static_cast<std::streamsize>(sizeof(float) * m.cols()));
}

Eigen::MatrixXf read_matrix(std::istream& in, int rows, int cols) {
    Eigen::MatrixXf m(rows, cols);
    std::vector<float> buf(static_cast<size_t>(cols));
    for (int r = 0; r < rows; ++r) {
        in.read(reinterpret_cast<char*>(buf.data()),
                static_cast<std::streamsize>(sizeof(float) * cols));
        for (int c = 0; c < cols; ++c) m(r, c) = buf[static_cast<size_t>(c)];
    }
    return m;
}

constexpr char kBankMagic[8] = {'F', 'A', 'B', 'A', 'N', 'K', '1', '\0'};
constexpr int kBankVersion = 1;

Eigen::MatrixXf manual_context(const EncoderSpec& spec) {
    Eigen::MatrixXf ctx(static_cast<int>(kManualTemplate.size()), spec.token_dim);
    for (size_t i = 0; i < kManualTemplate.size(); ++i)
        ctx.row(static_cast<int>(i)) = spec.lookup(kManualTemplate[i]);
    return ctx;
}

Eigen::MatrixXf random_context(Rng& rng, int rows, int token_dim) {
    Eigen::MatrixXf ctx(rows, token_dim);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < token_dim; ++c)
            ctx(r, c) = static_cast<float>(rng.normal(0.0, kRandomInitStd));
    return ctx;
}

Eigen::MatrixXf replicate_rows(const Eigen::MatrixXf& block, int copies) {
    Eigen::MatrixXf out(block.rows() * copies, block.cols());
    for (int i = 0; i < copies; ++i) out.middleRows(i * block.rows(), block.rows()) = block;
    return out;
}

}  // namespace

std::string to_string(InitMode mode) {
    return mode == InitMode::manual ? "manual" : "random";
}

InitMode init_mode_from_string(const std::string& s) {
    if (s == "manual") return InitMode::manual;
    if (s == "random") return InitMode::random;
    throw ConfigError("unknown init mode: '" + s + "'");
}

void PromptContext::validate(const EncoderSpec& spec) const {
    if (num_classes < 1) throw ConfigError("PromptContext: needs at least one class");
    if (context_len < 1) throw ConfigError("PromptContext: context length must be >= 1");
    if (token_dim != spec.token_dim)
        throw ConfigError("PromptContext: token_dim mismatch with encoder spec");
    const int expected_rows = shared ? context_len : num_classes * context_len;
    if (context.rows() != expected_rows || context.cols() != token_dim)
        throw ConfigError("PromptContext: context matrix has wrong shape");
    if (static_cast<int>(class_tokens.size()) != num_classes)
        throw ConfigError("PromptContext: class_tokens count mismatch");
    for (int c = 0; c < num_classes; ++c) {
        if (class_tokens[c].cols() != token_dim)
            throw ConfigError("PromptContext: class token rows have wrong dimension");
        if (sequence_length(c) > spec.max_context_len)
            throw ConfigError("prompt for class " + std::to_string(c) + " has " +
                              std::to_string(sequence_length(c)) + " tokens, max is " +
                              std::to_string(spec.max_context_len));
    }
}

DualPromptBank build_dual_prompts(const std::vector<std::string>& class_names,
                                  const EncoderSpec& spec, InitMode init_mode, bool shared,
                                  double forced_coefficient, uint64_t seed) {
    return build_dual_prompts(class_names, spec, init_mode, init_mode, shared,
                              forced_coefficient, seed);
}

DualPromptBank build_dual_prompts(const std::vector<std::string>& class_names,
                                  const EncoderSpec& spec, InitMode forced_init,
                                  InitMode original_init, bool shared, double forced_coefficient,
                                  uint64_t seed) {
    spec.validate();
    if (class_names.empty()) throw ConfigError("build_dual_prompts: class_names is empty");
    if (forced_coefficient < 0.0)
        throw ConfigError("build_dual_prompts: forced coefficient K must be >= 0");
    {
        std::set<std::string> unique(class_names.begin(), class_names.end());
        if (unique.size() != class_names.size())
            throw ConfigError("build_dual_prompts: duplicate class name");
    }

    const int num_classes = static_cast<int>(class_names.size());
    const int context_len = static_cast<int>(kManualTemplate.size());

    std::vector<Eigen::MatrixXf> class_tokens;
    class_tokens.reserve(class_names.size());
    for (const auto& name : class_names) {
        const auto tokens = tokenize_class_name(spec, name);
        Eigen::MatrixXf rows(static_cast<int>(tokens.size()), spec.token_dim);
        for (size_t t = 0; t < tokens.size(); ++t)
            rows.row(static_cast<int>(t)) = spec.lookup(tokens[t]);
        class_tokens.push_back(std::move(rows));
    }

    const Eigen::MatrixXf manual = manual_context(spec);
    // One Gaussian draw serves every random-mode prompt, so a random/random
    // bank still starts from identical contexts.
    Rng rng(splitmix64(seed ^ 0x70726f6d7074ull));
    const Eigen::MatrixXf random_shared = random_context(rng, context_len, spec.token_dim);
    const Eigen::MatrixXf random_independent =
        shared ? Eigen::MatrixXf() : random_context(rng, num_classes * context_len, spec.token_dim);

    auto make = [&](InitMode mode, bool learnable, bool prompt_shared) {
        PromptContext ctx;
        ctx.num_classes = num_classes;
        ctx.context_len = context_len;
        ctx.token_dim = spec.token_dim;
        ctx.shared = prompt_shared;
        ctx.learnable = learnable;
        ctx.init_mode = mode;
        if (mode == InitMode::manual)
            ctx.context = prompt_shared ? manual : replicate_rows(manual, num_classes);
        else
            ctx.context = prompt_shared ? random_shared : random_independent;
        ctx.class_tokens = class_tokens;
        ctx.validate(spec);
        return ctx;
    };

    DualPromptBank bank;
    bank.class_names = class_names;
    bank.forced_coefficient = forced_coefficient;
    bank.seed = seed;
    bank.forced = make(forced_init, /*learnable=*/true, shared);
    // The original prompt is the frozen manual reference; per-class sharing
    // only matters for the learnable side, so it always stores one copy.
    bank.original = make(original_init, /*learnable=*/false, /*prompt_shared=*/true);
    return bank;
}

Eigen::MatrixXf& trainable_parameters(DualPromptBank& bank) { return bank.forced.context; }

const Eigen::MatrixXf& trainable_parameters(const DualPromptBank& bank) {
    return bank.forced.context;
}

long trainable_parameter_count(const DualPromptBank& bank) {
    return static_cast<long>(bank.forced.context.size());
}

std::pair<TextFeatureSet, TextFeatureSet> text_features(const DualPromptBank& bank,
                                                        const EmbeddingBackend& backend) {
    return {backend.encode_text(bank.forced), backend.encode_text(bank.original)};
}

void save_bank(const DualPromptBank& bank, const nlohmann::json& encoder_desc,
               const std::filesystem::path& path) {
    nlohmann::ordered_json header;
    header["version"] = kBankVersion;
    header["num_classes"] = bank.num_classes();
    header["context_len"] = bank.forced.context_len;
    header["token_dim"] = bank.forced.token_dim;
    header["forced_coefficient"] = bank.forced_coefficient;
    header["seed"] = bank.seed;
    header["forced_init"] = to_string(bank.forced.init_mode);
    header["original_init"] = to_string(bank.original.init_mode);
    header["shared"] = bank.forced.shared;
    header["class_names"] = bank.class_names;
    header["forced_rows"] = static_cast<int>(bank.forced.context.rows());
    header["original_rows"] = static_cast<int>(bank.original.context.rows());
    header["encoder"] = encoder_desc;

    const std::string header_text = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot open bank for writing: " + path.string());
    out.write(kBankMagic, 8);
    write_u32(out, static_cast<uint32_t>(header_text.size()));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    write_matrix(out, bank.forced.context);
    write_matrix(out, bank.original.context);
    if (!out) throw DataError("short write to bank: " + path.string());
}

RawBank load_bank_raw(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open bank: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kBankMagic, 8) != 0)
        throw FormatError("bad bank magic in " + path.string());

    const uint32_t header_len = read_u32(in);
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), header_len);
    if (!in) throw FormatError("truncated bank header in " + path.string());

    RawBank raw;
    raw.header = nlohmann::json::parse(header_text);
    if (raw.header.at("version").get<int>() != kBankVersion)
        throw FormatError("unsupported bank version in " + path.string());

    const int token_dim = raw.header.at("token_dim").get<int>();
    raw.forced_context = read_matrix(in, raw.header.at("forced_rows").get<int>(), token_dim);
    raw.original_context = read_matrix(in, raw.header.at("original_rows").get<int>(), token_dim);
    if (!in) throw FormatError("truncated bank payload in " + path.string());
    return raw;
}

DualPromptBank assemble_bank(const RawBank& raw, const EncoderSpec& spec) {
    const auto& h = raw.header;
    const auto class_names = h.at("class_names").get<std::vector<std::string>>();
    if (h.at("token_dim").get<int>() != spec.token_dim)
        throw FormatError("bank token_dim does not match the encoder spec");

    DualPromptBank bank = build_dual_prompts(
        class_names, spec, init_mode_from_string(h.at("forced_init").get<std::string>()),
        init_mode_from_string(h.at("original_init").get<std::string>()),
        h.at("shared").get<bool>(), h.at("forced_coefficient").get<double>(),
        h.at("seed").get<uint64_t>());
    if (bank.forced.context.rows() != raw.forced_context.rows() ||
        bank.original.context.rows() != raw.original_context.rows())
        throw FormatError("bank context shape does not match its header");
    bank.forced.context = raw.forced_context;
    bank.original.context = raw.original_context;
    return bank;
}

uint64_t bank_fingerprint(const DualPromptBank& bank) {
    uint64_t h = kFnvOffset;
    auto fold = [&h](const Eigen::MatrixXf& m) {
        for (int r = 0; r < m.rows(); ++r)
            h = fnv1a64(Eigen::RowVectorXf(m.row(r)).data(),
                        sizeof(float) * static_cast<size_t>(m.cols()), h);
    };
    fold(bank.forced.context);
    fold(bank.original.context);
    for (const auto& tokens : bank.forced.class_tokens) fold(tokens);
    for (const auto& name : bank.class_names) h = fnv1a64(name, h);
    h = fnv1a64(&bank.forced_coefficient, sizeof(bank.forced_coefficient), h);
    h = fnv1a64(&bank.seed, sizeof(bank.seed), h);
    return h;
}

}  // namespace faood
