#include <cstring>
#include <filesystem>
#include <fstream>

#include "faood/encoder.hpp"
#include "faood/errors.hpp"
#include "faood/prompt.hpp"
#include "faood/rng.hpp"

#include "doctest.h"

using namespace faood;

namespace {

ToyEncoderConfig bank_config(uint64_t seed = 23) {
    ToyEncoderConfig config;
    config.seed = seed;
    config.embed_dim = 16;
    config.token_dim = 8;
    config.num_locals = 0;
    config.max_context_len = 12;
    config.image_input_dim = 16;
    config.vocab_words = {"a", "photo", "of", "cat", "dog", "bird"};
    return config;
}

const std::vector<std::string> kNames = {"cat", "dog", "bird"};

}  // namespace

TEST_CASE("manual initialization: identical contexts and L = 4") {
    const ToyEncoder encoder(bank_config());
    const auto bank = build_dual_prompts(kNames, encoder.spec(), InitMode::manual, true, 3.0, 9);

    CHECK(bank.forced.context_len == 4);
    CHECK(bank.forced.learnable);
    CHECK_FALSE(bank.original.learnable);
    CHECK(bank.forced.context.rows() == 4);
    // Bit-for-bit equality at construction.
    CHECK(std::memcmp(bank.forced.context.data(), bank.original.context.data(),
                      sizeof(float) * 4 * 8) == 0);
    // Rows are the vocab embeddings of "a photo of a".
    CHECK((bank.forced.context.row(0) - encoder.spec().lookup("a")).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((bank.forced.context.row(1) - encoder.spec().lookup("photo")).cwiseAbs().maxCoeff() ==
          0.0f);
    CHECK((bank.forced.context.row(3) - encoder.spec().lookup("a")).cwiseAbs().maxCoeff() == 0.0f);
}

TEST_CASE("random initialization is shared by both prompts and seeded") {
    const ToyEncoder encoder(bank_config());
    const auto a = build_dual_prompts(kNames, encoder.spec(), InitMode::random, true, 3.0, 9);
    const auto b = build_dual_prompts(kNames, encoder.spec(), InitMode::random, true, 3.0, 9);
    const auto c = build_dual_prompts(kNames, encoder.spec(), InitMode::random, true, 3.0, 10);

    CHECK((a.forced.context - a.original.context).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((a.forced.context - b.forced.context).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((a.forced.context - c.forced.context).cwiseAbs().maxCoeff() != 0.0f);
}

TEST_CASE("trainable parameters expose exactly the forced context") {
    const ToyEncoder encoder(bank_config());
    auto bank = build_dual_prompts(kNames, encoder.spec(), InitMode::manual, true, 3.0, 9);

    CHECK(trainable_parameter_count(bank) == 4 * 8);
    const Eigen::MatrixXf original_before = bank.original.context;
    const std::vector<Eigen::MatrixXf> tokens_before = bank.forced.class_tokens;

    trainable_parameters(bank)(1, 3) += 0.5f;
    CHECK(bank.forced.context(1, 3) != bank.original.context(1, 3));
    CHECK((bank.original.context - original_before).cwiseAbs().maxCoeff() == 0.0f);
    for (size_t c = 0; c < tokens_before.size(); ++c)
        CHECK((bank.forced.class_tokens[c] - tokens_before[c]).cwiseAbs().maxCoeff() == 0.0f);

    // Independent mode: one context block per class.
    auto independent =
        build_dual_prompts(kNames, encoder.spec(), InitMode::manual, false, 3.0, 9);
    CHECK(trainable_parameters(independent).rows() == 3 * 4);
    CHECK(trainable_parameter_count(independent) == 3 * 4 * 8);
}

TEST_CASE("shared parameter count matches the CoOp baseline regardless of C") {
    ToyEncoderConfig config = bank_config();
    config.token_dim = 8;
    std::vector<std::string> many;
    for (int i = 0; i < 100; ++i) many.push_back("class" + std::to_string(i));
    config.vocab_words.insert(config.vocab_words.end(), many.begin(), many.end());
    const ToyEncoder encoder(config);

    const auto small = build_dual_prompts(kNames, encoder.spec(), InitMode::manual, true, 3.0, 1);
    const auto large = build_dual_prompts(many, encoder.spec(), InitMode::manual, true, 3.0, 1);
    CHECK(trainable_parameter_count(small) == 4 * 8);
    CHECK(trainable_parameter_count(large) == 4 * 8);
}

TEST_CASE("construction identity: forced and original features match under manual init") {
    const ToyEncoder encoder(bank_config());
    const auto bank = build_dual_prompts(kNames, encoder.spec(), InitMode::manual, true, 3.0, 9);
    const auto [forced, original] = text_features(bank, encoder);
    CHECK((forced - original).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("duplicate class names are rejected") {
    const ToyEncoder encoder(bank_config());
    CHECK_THROWS_AS(
        build_dual_prompts({"cat", "cat"}, encoder.spec(), InitMode::manual, true, 3.0, 1),
        ConfigError);
    CHECK_THROWS_AS(build_dual_prompts({}, encoder.spec(), InitMode::manual, true, 3.0, 1),
                    ConfigError);
    CHECK_THROWS_AS(build_dual_prompts(kNames, encoder.spec(), InitMode::manual, true, -2.0, 1),
                    ConfigError);
}

TEST_CASE("bank save/load round-trips every field") {
    const auto dir = std::filesystem::temp_directory_path() / "faood_bank_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "bank.fab";

    ToyEncoderConfig config = bank_config(77);
    const ToyEncoder encoder(config);
    auto bank = build_dual_prompts(kNames, encoder.spec(), InitMode::manual, true, 5.0, 1234);
    // Make the forced side diverge so the blocks are distinguishable on disk.
    trainable_parameters(bank).array() += 0.25f;

    nlohmann::json desc = {{"kind", "toy"},
                           {"seed", config.seed},
                           {"embed_dim", config.embed_dim},
                           {"token_dim", config.token_dim},
                           {"num_locals", config.num_locals},
                           {"max_context_len", config.max_context_len},
                           {"image_input_dim", config.image_input_dim},
                           {"vocab_words", config.vocab_words}};
    save_bank(bank, desc, path);

    const RawBank raw = load_bank_raw(path);
    const DualPromptBank loaded = assemble_bank(raw, encoder.spec());

    CHECK(loaded.class_names == bank.class_names);
    CHECK(loaded.forced_coefficient == bank.forced_coefficient);
    CHECK(loaded.seed == bank.seed);
    CHECK(loaded.forced.init_mode == bank.forced.init_mode);
    CHECK(loaded.forced.shared == bank.forced.shared);
    CHECK((loaded.forced.context - bank.forced.context).cwiseAbs().maxCoeff() == 0.0f);
    CHECK((loaded.original.context - bank.original.context).cwiseAbs().maxCoeff() == 0.0f);
    for (size_t c = 0; c < bank.forced.class_tokens.size(); ++c)
        CHECK((loaded.forced.class_tokens[c] - bank.forced.class_tokens[c])
                  .cwiseAbs()
                  .maxCoeff() == 0.0f);
    CHECK(bank_fingerprint(loaded) == bank_fingerprint(bank));

    // Features agree after a round trip.
    const auto [f1, o1] = text_features(bank, encoder);
    const auto [f2, o2] = text_features(loaded, encoder);
    CHECK((f1 - f2).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((o1 - o2).cwiseAbs().maxCoeff() <= 1e-6);

    // Saving the loaded bank reproduces the file byte for byte.
    const auto path2 = dir / "bank2.fab";
    save_bank(loaded, desc, path2);
    std::ifstream a(path, std::ios::binary), b(path2, std::ios::binary);
    const std::string bytes_a((std::istreambuf_iterator<char>(a)),
                              std::istreambuf_iterator<char>());
    const std::string bytes_b((std::istreambuf_iterator<char>(b)),
                              std::istreambuf_iterator<char>());
    CHECK(bytes_a == bytes_b);
}

TEST_CASE("bank loader rejects wrong magic") {
    const auto dir = std::filesystem::temp_directory_path() / "faood_bank_test";
    std::filesystem::create_directories(dir);
    const auto path = dir / "not_a_bank.fab";
    std::ofstream(path, std::ios::binary) << "GARBAGE!0123456789";
    CHECK_THROWS_AS(load_bank_raw(path), FormatError);
    CHECK_THROWS_AS(load_bank_raw(dir / "missing.fab"), DataError);
}
