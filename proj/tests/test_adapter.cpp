#include <filesystem>
#include <fstream>

#include "faood/backend_factory.hpp"
#include "faood/clip_adapter.hpp"
#include "faood/data_io.hpp"
#include "faood/errors.hpp"
#include "faood/prompt.hpp"
#include "faood/rng.hpp"

#include "doctest.h"
#include "json.hpp"

using namespace faood;

namespace {

namespace fs = std::filesystem;

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Builds a fake checkpoint export: a mini vocabulary, one image cache, and a
// text-feature file keyed by the manual bank's context hash, the layout
// tools/export_clip_features.py emits.
struct FakeExport {
    fs::path dir;
    std::vector<std::string> class_names = {"cat", "husky dog"};
    int embed_dim = 6;
    int token_dim = 4;
    DualPromptBank bank;

    FakeExport() {
        dir = fresh_dir("faood_adapter_export");
        Rng rng(404);

        nlohmann::json index;
        index["kind"] = "clip";
        index["embed_dim"] = embed_dim;
        index["token_dim"] = token_dim;
        index["num_locals"] = 1;
        index["max_context_len"] = 10;
        nlohmann::json vocab;
        EncoderSpec spec;
        spec.embed_dim = embed_dim;
        spec.token_dim = token_dim;
        spec.num_locals = 1;
        spec.max_context_len = 10;
        for (const char* token : {"a", "photo", "of", "cat", "hu", "sky", "dog"}) {
            std::vector<float> row;
            for (int i = 0; i < token_dim; ++i)
                row.push_back(static_cast<float>(rng.normal(0.0, 0.1)));
            vocab[token] = row;
            spec.vocab[token] =
                Eigen::Map<const Eigen::RowVectorXf>(row.data(), token_dim);
        }
        index["vocab"] = vocab;
        // Subword-style tokenization override for the multi-word name.
        index["tokenization"] = {{"husky dog", {"hu", "sky", "dog"}}};
        spec.tokenization_overrides["husky dog"] = {"hu", "sky", "dog"};

        bank = build_dual_prompts(class_names, spec, InitMode::manual, true, 3.0, 7);

        // Text features for the manual prompt (forced == original here).
        EmbeddingCache text;
        text.dim = static_cast<uint32_t>(embed_dim);
        text.num_locals = 0;
        text.rows.resize(2, embed_dim);
        for (int c = 0; c < 2; ++c) {
            Eigen::VectorXd v(embed_dim);
            for (int i = 0; i < embed_dim; ++i) v(i) = rng.normal();
            v /= v.norm();
            for (int i = 0; i < embed_dim; ++i) text.rows(c, i) = static_cast<float>(v(i));
        }
        text.write(dir / "text_manual.faemb");

        index["text_features"] = {{{"context_hash", prompt_context_hash(bank.original)},
                                   {"file", "text_manual.faemb"}}};
        std::ofstream(dir / "export.json") << index.dump(2);
    }
};

}  // namespace

TEST_CASE("clip adapter serves exported text features by context hash") {
    const FakeExport fake;
    const ClipFeatureAdapter adapter(fake.dir);

    CHECK(adapter.spec().embed_dim == 6);
    CHECK_FALSE(adapter.differentiable());

    // The manual prompt's hash is in the export: features load and are unit norm.
    const TextFeatureSet features = adapter.encode_text(fake.bank.original);
    REQUIRE(features.rows() == 2);
    for (int c = 0; c < 2; ++c) CHECK(std::abs(features.row(c).norm() - 1.0) <= 1e-6);

    // A context the export never saw is an actionable config error.
    PromptContext tuned = fake.bank.forced;
    tuned.context(0, 0) += 0.5f;
    CHECK_THROWS_WITH_AS(adapter.encode_text(tuned), doctest::Contains("export"), ConfigError);

    // Image rows pass through like a cache backend.
    std::vector<float> row(12, 0.0f);
    row[0] = 1.0f;
    row[6 + 1] = 1.0f;
    const ImageFeatures image = adapter.encode_image(row);
    CHECK(image.global(0) == 1.0);
    CHECK(image.locals(0, 1) == 1.0);

    CHECK_THROWS_AS(ClipFeatureAdapter(fake.dir / "missing"), DataError);
}

TEST_CASE("context hashes are sensitive to context and class tokens") {
    const FakeExport fake;
    const std::string base = prompt_context_hash(fake.bank.original);
    PromptContext changed = fake.bank.original;
    changed.context(2, 1) += 1e-3f;
    CHECK(prompt_context_hash(changed) != base);
    CHECK(prompt_context_hash(fake.bank.forced) == base);  // identical init
}

TEST_CASE("backend factory builds toy, cache and clip backends") {
    ToyEncoderConfig config;
    config.seed = 5;
    config.embed_dim = 8;
    config.token_dim = 4;
    config.num_locals = 1;
    config.max_context_len = 8;
    config.image_input_dim = 8;
    config.vocab_words = {"a", "photo", "of", "x"};
    const nlohmann::json toy_desc = toy_encoder_descriptor(config);

    auto toy = make_backend(toy_desc);
    CHECK(toy->differentiable());
    CHECK(toy->spec().embed_dim == 8);

    nlohmann::json cache_desc = {{"kind", "cache"}, {"inner", toy_desc}};
    auto cache = make_backend(cache_desc);
    CHECK(cache->differentiable());  // text delegates to the inner toy encoder
    std::vector<float> row(16, 0.0f);
    row[0] = 1.0f;
    row[8 + 2] = 1.0f;
    CHECK(cache->encode_image(row).global(0) == 1.0);

    const FakeExport fake;
    nlohmann::json clip_desc = {{"kind", "clip"}, {"export_dir", fake.dir.string()}};
    auto clip = make_backend(clip_desc);
    CHECK_FALSE(clip->differentiable());

    nlohmann::json unknown = {{"kind", "wat"}};
    CHECK_THROWS_AS(make_backend(unknown), ConfigError);
}

TEST_CASE("load_bank rebuilds the backend and class tokens from the descriptor") {
    const auto dir = fresh_dir("faood_load_bank_test");
    ToyEncoderConfig config;
    config.seed = 9;
    config.embed_dim = 8;
    config.token_dim = 4;
    config.num_locals = 0;
    config.max_context_len = 8;
    config.image_input_dim = 8;
    config.vocab_words = {"a", "photo", "of", "x", "y"};
    const ToyEncoder encoder(config);

    auto bank = build_dual_prompts({"x", "y"}, encoder.spec(), InitMode::manual, true, 4.0, 21);
    trainable_parameters(bank).array() -= 0.125f;
    save_bank(bank, toy_encoder_descriptor(config), dir / "bank.fab");

    const LoadedBank loaded = load_bank(dir / "bank.fab");
    CHECK(loaded.bank.forced_coefficient == 4.0);
    CHECK(loaded.bank.class_names == bank.class_names);
    CHECK((loaded.bank.forced.context - bank.forced.context).cwiseAbs().maxCoeff() == 0.0f);
    CHECK(loaded.backend->spec().embed_dim == 8);
    // Features computed through the reloaded backend match the originals.
    const auto [f1, o1] = text_features(bank, encoder);
    const auto [f2, o2] = text_features(loaded.bank, *loaded.backend);
    CHECK((f1 - f2).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((o1 - o2).cwiseAbs().maxCoeff() <= 1e-6);

    CHECK_THROWS_AS(load_bank(dir / "absent.fab"), ConfigError);
}

TEST_CASE("the shipped ImageNet registry lists the conventional OOD sets in table order") {
    const fs::path repo_registry = fs::path(FAOOD_SOURCE_DIR) / "configs" /
                                   "imagenet1k_registry.json";
    REQUIRE(fs::exists(repo_registry));
    std::ifstream in(repo_registry);
    const nlohmann::json registry = nlohmann::json::parse(in);
    const auto& ood = registry.at("benchmarks").at("imagenet1k-conventional").at("ood");
    REQUIRE(ood.size() == 4);
    CHECK(ood[0].at("name") == "iNaturalist");
    CHECK(ood[1].at("name") == "SUN");
    CHECK(ood[2].at("name") == "Places");
    CHECK(ood[3].at("name") == "Textures");

    // Resolution without the user-provided datasets fails with the expected path.
    CHECK_THROWS_WITH_AS(resolve_benchmark("imagenet1k-conventional", repo_registry),
                         doctest::Contains("imagenet1k/train.json"), DataError);
}
