#pragma once

#include <Eigen/Core>
#include <array>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "faood/encoder.hpp"

#include "json.hpp"

namespace faood {

enum class InitMode { manual, random };

std::string to_string(InitMode mode);
InitMode init_mode_from_string(const std::string& s);

/// The manual template "a photo of a [class-c]"; its four tokens seed the
/// context rows, so L = 4.
inline constexpr std::array<const char*, 4> kManualTemplate = {"a", "photo", "of", "a"};

/// CoOp-convention standard deviation for randomly initialized context rows.
inline constexpr double kRandomInitStd = 0.02;

struct PromptContext {
    int num_classes = 0;  // C
    int context_len = 0;  // L
    int token_dim = 0;
    bool shared = true;
    bool learnable = false;
    InitMode init_mode = InitMode::manual;

    /// Learnable region. shared: L x token_dim; independent: (C*L) x token_dim,
    /// class c occupying rows [c*L, (c+1)*L).
    Eigen::MatrixXf context;

    /// Frozen class-name token rows, appended after the context. Multi-word
    /// names contribute one row per token.
    std::vector<Eigen::MatrixXf> class_tokens;

    int context_row_offset(int class_index) const {
        return shared ? 0 : class_index * context_len;
    }
    int sequence_length(int class_index) const {
        return context_len + static_cast<int>(class_tokens[class_index].rows());
    }

    void validate(const EncoderSpec& spec) const;
};

struct DualPromptBank {
    PromptContext forced;    // learnable
    PromptContext original;  // frozen reference
    std::vector<std::string> class_names;
    double forced_coefficient = 3.0;  // K, shared by the loss and the scores
    uint64_t seed = 0;

    int num_classes() const { return static_cast<int>(class_names.size()); }
};

/// Paper configuration: one init mode for both prompts. Manual mode copies the
/// template token embeddings into both contexts (identical at construction);
/// random mode draws one Gaussian context and assigns it to both.
DualPromptBank build_dual_prompts(const std::vector<std::string>& class_names,
                                  const EncoderSpec& spec, InitMode init_mode, bool shared,
                                  double forced_coefficient, uint64_t seed);

/// Ablation arms initialize the two prompts independently.
DualPromptBank build_dual_prompts(const std::vector<std::string>& class_names,
                                  const EncoderSpec& spec, InitMode forced_init,
                                  InitMode original_init, bool shared, double forced_coefficient,
                                  uint64_t seed);

/// The optimizer's view: exactly the forced context rows. Mutations through
/// the returned reference touch nothing else in the bank.
Eigen::MatrixXf& trainable_parameters(DualPromptBank& bank);
const Eigen::MatrixXf& trainable_parameters(const DualPromptBank& bank);
long trainable_parameter_count(const DualPromptBank& bank);

/// (T^f, T^o): forced features differentiable through the backend, original
/// features constant across training.
std::pair<TextFeatureSet, TextFeatureSet> text_features(const DualPromptBank& bank,
                                                        const EmbeddingBackend& backend);

// ---------------------------------------------------------------------------
// Bank file: magic "FABANK1\0", little-endian u32 header length, JSON header
// (version, C, L, token_dim, K, seed, init modes, shared, class names,
// encoder descriptor), then raw little-endian float32 context matrices,
// forced first then original. Class-token rows are rebuilt from the encoder
// descriptor at load, the CoOp checkpoint convention.
// ---------------------------------------------------------------------------

void save_bank(const DualPromptBank& bank, const nlohmann::json& encoder_desc,
               const std::filesystem::path& path);

struct RawBank {
    nlohmann::json header;
    Eigen::MatrixXf forced_context;
    Eigen::MatrixXf original_context;
};

RawBank load_bank_raw(const std::filesystem::path& path);

/// Rebuilds the full bank (including frozen class tokens) against a spec that
/// must match the one recorded at save time.
DualPromptBank assemble_bank(const RawBank& raw, const EncoderSpec& spec);

/// Content hash over everything that defines the bank's behavior.
uint64_t bank_fingerprint(const DualPromptBank& bank);

}  // namespace faood
