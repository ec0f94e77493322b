#include "faood/data_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include "faood/errors.hpp"
#include "faood/hash.hpp"
#include "faood/prompt.hpp"
#include "faood/rng.hpp"

namespace faood {

namespace {

nlohmann::json parse_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError("invalid JSON in " + path.string() + ": " + e.what());
    }
}

[[noreturn]] void schema_error(const std::filesystem::path& path, const std::string& pointer,
                               const std::string& what) {
    throw FormatError("schema violation in " + path.string() + " at " + pointer + ": " + what);
}

}  // namespace

DatasetManifest load_manifest(const std::filesystem::path& path) {
    const nlohmann::json j = parse_json_file(path);
    if (!j.is_object()) schema_error(path, "", "expected an object");
    if (j.value("version", 0) != 1) schema_error(path, "/version", "unsupported schema version");
    if (!j.contains("name") || !j.at("name").is_string())
        schema_error(path, "/name", "missing or non-string");

    DatasetManifest m;
    m.name = j.at("name").get<std::string>();
    m.base_dir = path.parent_path();
    if (j.contains("class_names")) {
        if (!j.at("class_names").is_array())
            schema_error(path, "/class_names", "expected an array");
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
    }
    m.cache = j.value("cache", std::string());

    if (!j.contains("entries") || !j.at("entries").is_array())
        schema_error(path, "/entries", "missing or non-array");
    const auto& entries = j.at("entries");
    m.entries.reserve(entries.size());
    for (size_t i = 0; i < entries.size(); ++i) {
        const std::string pointer = "/entries/" + std::to_string(i);
        const auto& e = entries[i];
        if (!e.is_object()) schema_error(path, pointer, "expected an object");
        ManifestEntry entry;
        if (e.contains("row")) entry.row = e.at("row").get<int>();
        if (e.contains("path")) entry.path = e.at("path").get<std::string>();
        if (entry.row < 0 && entry.path.empty())
            schema_error(path, pointer, "entry needs a 'row' or a 'path'");
        if (!e.contains("label")) schema_error(path, pointer + "/label", "missing");
        entry.label = e.at("label").get<int>();

        if (m.is_ood()) {
            if (entry.label != -1)
                schema_error(path, pointer + "/label",
                             "OOD manifests must label every entry -1");
        } else if (entry.label < 0 || entry.label >= m.num_classes()) {
            schema_error(path, pointer + "/label",
                         "label " + std::to_string(entry.label) + " outside [0, " +
                             std::to_string(m.num_classes()) + ")");
        }
        m.entries.push_back(std::move(entry));
    }
    return m;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
    nlohmann::ordered_json j;
    j["version"] = 1;
    j["name"] = manifest.name;
    j["class_names"] = manifest.class_names;
    if (!manifest.cache.empty()) j["cache"] = manifest.cache;
    nlohmann::ordered_json entries = nlohmann::ordered_json::array();
    for (const auto& e : manifest.entries) {
        nlohmann::ordered_json entry;
        if (e.uses_cache())
            entry["row"] = e.row;
        else
            entry["path"] = e.path;
        entry["label"] = e.label;
        entries.push_back(std::move(entry));
    }
    j["entries"] = std::move(entries);
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw DataError("cannot write manifest: " + path.string());
    out << j.dump(2) << "\n";
}

FeatureSource::FeatureSource(const DatasetManifest& manifest, const EmbeddingBackend& backend)
    : manifest_(&manifest), backend_(&backend) {
    bool needs_cache = false;
    for (const auto& e : manifest.entries) needs_cache |= e.uses_cache();
    if (needs_cache) {
        const auto cache_file = manifest.cache_path();
        if (manifest.cache.empty() || !std::filesystem::exists(cache_file))
            throw DataError("dataset '" + manifest.name + "' references cache rows but " +
                            cache_file.string() + " is missing");
        cache_ = EmbeddingCache::read(cache_file);
        const auto& spec = backend.spec();
        if (static_cast<int>(cache_->dim) != spec.embed_dim ||
            static_cast<int>(cache_->num_locals) != spec.num_locals)
            throw DataError("cache " + cache_file.string() + " has dim=" +
                            std::to_string(cache_->dim) + "/locals=" +
                            std::to_string(cache_->num_locals) + ", backend expects " +
                            std::to_string(spec.embed_dim) + "/" +
                            std::to_string(spec.num_locals));
        for (const auto& e : manifest.entries)
            if (e.uses_cache() && e.row >= cache_->count())
                throw DataError("dataset '" + manifest.name + "' references row " +
                                std::to_string(e.row) + " but the cache has " +
                                std::to_string(cache_->count()) + " rows");
    }
}

ImageFeatures FeatureSource::get(const ManifestEntry& entry) const {
    if (entry.uses_cache()) return cache_->features(entry.row);
    const auto raw = read_raw_vector(manifest_->base_dir / entry.path);
    return backend_->encode_image(raw);
}

ImageFeatures FeatureSource::get(size_t entry_index) const {
    return get(manifest_->entries.at(entry_index));
}

std::vector<float> read_raw_vector(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw DataError("cannot open raw vector: " + path.string());
    const auto bytes = static_cast<size_t>(in.tellg());
    if (bytes % sizeof(float) != 0)
        throw FormatError("raw vector file is not a float32 multiple: " + path.string());
    std::vector<float> values(bytes / sizeof(float));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(bytes));
    if (!in) throw DataError("short read from " + path.string());
    return values;
}

void write_raw_vector(std::span<const float> values, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write raw vector: " + path.string());
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(sizeof(float) * values.size()));
}

void cache_embeddings(const DatasetManifest& manifest, const EmbeddingBackend& backend,
                      const std::filesystem::path& out_path) {
    const auto& spec = backend.spec();
    FeatureSource source(manifest, backend);

    EmbeddingCache cache;
    cache.dim = static_cast<uint32_t>(spec.embed_dim);
    cache.num_locals = static_cast<uint32_t>(spec.num_locals);
    cache.rows.resize(static_cast<int>(manifest.entries.size()), cache.row_width());

    for (size_t i = 0; i < manifest.entries.size(); ++i) {
        const auto& entry = manifest.entries[i];
        const ImageFeatures features = source.get(entry);
        auto row = cache.rows.row(static_cast<int>(i));
        for (int k = 0; k < spec.embed_dim; ++k)
            row(k) = static_cast<float>(features.global(k));
        for (int l = 0; l < spec.num_locals; ++l)
            for (int k = 0; k < spec.embed_dim; ++k)
                row((1 + l) * spec.embed_dim + k) = static_cast<float>(features.locals(l, k));
        cache.sidecar.push_back(
            {manifest.name, entry.label,
             entry.uses_cache() ? "row:" + std::to_string(entry.row) : entry.path});
    }
    cache.write(out_path);

    DatasetManifest rewritten;
    rewritten.name = manifest.name;
    rewritten.class_names = manifest.class_names;
    rewritten.cache = out_path.filename().string();
    for (size_t i = 0; i < manifest.entries.size(); ++i)
        rewritten.entries.push_back(
            {static_cast<int>(i), std::string(), manifest.entries[i].label});
    save_manifest(rewritten, out_path.string() + ".manifest.json");
}

BenchmarkSpec resolve_benchmark(const std::string& name,
                                const std::filesystem::path& registry_path) {
    if (!std::filesystem::exists(registry_path))
        throw DataError("benchmark registry not found at " + registry_path.string());
    const nlohmann::json registry = parse_json_file(registry_path);
    if (!registry.contains("benchmarks") || !registry.at("benchmarks").contains(name))
        throw DataError("benchmark '" + name + "' not present in " + registry_path.string());
    const auto& entry = registry.at("benchmarks").at(name);
    const auto root = registry_path.parent_path();

    auto manifest_at = [&](const std::string& rel) {
        const auto path = root / rel;
        if (!std::filesystem::exists(path))
            throw DataError("benchmark '" + name + "' expects a manifest at " + path.string());
        return load_manifest(path);
    };

    BenchmarkSpec spec;
    spec.name = name;
    spec.root = root;
    spec.encoder_desc = entry.at("encoder");
    spec.id_train = manifest_at(entry.at("id_train").get<std::string>());
    spec.id_test = manifest_at(entry.at("id_test").get<std::string>());

    std::set<std::string> id_paths = {entry.at("id_train").get<std::string>(),
                                      entry.at("id_test").get<std::string>()};
    for (const auto& ood : entry.at("ood")) {
        const auto rel = ood.at("manifest").get<std::string>();
        if (id_paths.count(rel))
            throw DataError("benchmark '" + name + "': manifest " + rel +
                            " appears as both ID and OOD");
        spec.ood.push_back({ood.at("name").get<std::string>(), manifest_at(rel)});
    }

    if (spec.id_train.num_classes() < 2)
        throw DataError("benchmark '" + name + "': ID dataset needs at least 2 classes");
    if (spec.ood.empty()) throw DataError("benchmark '" + name + "': no OOD datasets listed");
    for (const auto& ood : spec.ood)
        if (!ood.manifest.is_ood())
            throw DataError("benchmark '" + name + "': OOD manifest '" + ood.manifest.name +
                            "' carries class names");
    return spec;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark
// ---------------------------------------------------------------------------

nlohmann::json toy_encoder_descriptor(const ToyEncoderConfig& config) {
    nlohmann::ordered_json j;
    j["kind"] = "toy";
    j["seed"] = config.seed;
    j["embed_dim"] = config.embed_dim;
    j["token_dim"] = config.token_dim;
    j["num_locals"] = config.num_locals;
    j["max_context_len"] = config.max_context_len;
    j["image_input_dim"] = config.image_input_dim;
    j["vocab_words"] = config.vocab_words;
    return j;
}

ToyEncoderConfig toy_encoder_config_from_descriptor(const nlohmann::json& desc) {
    if (desc.value("kind", std::string()) != "toy")
        throw ConfigError("encoder descriptor is not a toy encoder");
    ToyEncoderConfig config;
    config.seed = desc.at("seed").get<uint64_t>();
    config.embed_dim = desc.at("embed_dim").get<int>();
    config.token_dim = desc.at("token_dim").get<int>();
    config.num_locals = desc.at("num_locals").get<int>();
    config.max_context_len = desc.at("max_context_len").get<int>();
    config.image_input_dim = desc.at("image_input_dim").get<int>();
    config.vocab_words = desc.at("vocab_words").get<std::vector<std::string>>();
    return config;
}

namespace {

Eigen::VectorXd jitter(const Eigen::VectorXd& center, double noise, Rng& rng) {
    Eigen::VectorXd v = center;
    for (int i = 0; i < v.size(); ++i) v(i) += noise * rng.normal();
    return normalized_or_e1(v);
}

Eigen::VectorXd random_unit(int dim, Rng& rng) {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v(i) = rng.normal();
    return normalized_or_e1(v);
}

void append_sample(EmbeddingCache& cache, int row, const Eigen::VectorXd& center,
                   double noise, const ToyBenchmarkParams& params, Rng& rng) {
    const Eigen::VectorXd global = jitter(center, noise, rng);
    for (int k = 0; k < params.embed_dim; ++k)
        cache.rows(row, k) = static_cast<float>(global(k));
    for (int l = 0; l < params.num_locals; ++l) {
        const Eigen::VectorXd local = jitter(center, params.local_noise, rng);
        for (int k = 0; k < params.embed_dim; ++k)
            cache.rows(row, (1 + l) * params.embed_dim + k) = static_cast<float>(local(k));
    }
}

}  // namespace

void write_toy_benchmark(const std::filesystem::path& dir, const ToyBenchmarkParams& params) {
    std::filesystem::create_directories(dir);

    std::vector<std::string> class_names;
    for (int c = 0; c < params.num_classes; ++c) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "class%02d", c);
        class_names.emplace_back(buf);
    }

    ToyEncoderConfig config;
    config.seed = params.seed;
    config.embed_dim = params.embed_dim;
    config.token_dim = params.token_dim;
    config.num_locals = params.num_locals;
    config.max_context_len = params.max_context_len;
    config.image_input_dim = params.image_input_dim;
    for (const char* word : kManualTemplate) {
        if (std::find(config.vocab_words.begin(), config.vocab_words.end(), word) ==
            config.vocab_words.end())
            config.vocab_words.push_back(word);
    }
    for (const auto& name : class_names) config.vocab_words.push_back(name);
    const ToyEncoder encoder(config);

    // Text anchors come from the manual prompt. The visual cluster centers
    // are the features of that prompt perturbed in context space, so a richer
    // description of the ID classes exists inside prompt space while the
    // manual prompt itself stays well aligned with every class.
    const DualPromptBank bank =
        build_dual_prompts(class_names, encoder.spec(), InitMode::manual, true, 1.0, params.seed);
    const TextFeatureSet anchors = encoder.encode_text(bank.original);

    Rng rng(splitmix64(params.seed ^ 0x746f7962656e63ull));

    PromptContext rich = bank.original;
    for (int r = 0; r < rich.context.rows(); ++r)
        for (int c = 0; c < rich.context.cols(); ++c)
            rich.context(r, c) += static_cast<float>(
                rng.normal(0.0, params.prompt_displacement /
                                    std::sqrt(static_cast<double>(params.token_dim))));
    const TextFeatureSet rich_anchors = encoder.encode_text(rich);

    std::vector<Eigen::VectorXd> centers;
    centers.reserve(static_cast<size_t>(params.num_classes));
    for (int c = 0; c < params.num_classes; ++c)
        centers.push_back(rich_anchors.row(c).transpose());

    auto make_id_cache = [&](int per_class) {
        EmbeddingCache cache;
        cache.dim = static_cast<uint32_t>(params.embed_dim);
        cache.num_locals = static_cast<uint32_t>(params.num_locals);
        cache.rows.resize(params.num_classes * per_class, cache.row_width());
        return cache;
    };

    EmbeddingCache train_cache = make_id_cache(params.train_per_class);
    EmbeddingCache test_cache = make_id_cache(params.test_per_class);
    DatasetManifest train_manifest, test_manifest;
    train_manifest.name = "toy-id-train";
    test_manifest.name = "toy-id-test";
    train_manifest.class_names = test_manifest.class_names = class_names;
    train_manifest.cache = "id_train.faemb";
    test_manifest.cache = "id_test.faemb";

    int train_row = 0, test_row = 0;
    for (int c = 0; c < params.num_classes; ++c) {
        const Eigen::VectorXd& center = centers[static_cast<size_t>(c)];
        for (int i = 0; i < params.train_per_class; ++i, ++train_row) {
            append_sample(train_cache, train_row, center, params.train_noise, params, rng);
            train_cache.sidecar.push_back({"train", c, ""});
            train_manifest.entries.push_back({train_row, std::string(), c});
        }
        for (int i = 0; i < params.test_per_class; ++i, ++test_row) {
            append_sample(test_cache, test_row, center, params.id_noise, params, rng);
            test_cache.sidecar.push_back({"test", c, ""});
            test_manifest.entries.push_back({test_row, std::string(), c});
        }
    }

    auto make_ood = [&](const std::string& split, bool near) {
        std::vector<Eigen::VectorXd> ood_centers;
        for (int k = 0; k < params.ood_clusters_per_set; ++k) {
            const Eigen::VectorXd direction = random_unit(params.embed_dim, rng);
            if (near) {
                const Eigen::VectorXd anchor = anchors.row(k % params.num_classes).transpose();
                ood_centers.push_back(normalized_or_e1(params.near_blend * anchor +
                                                       (1.0 - params.near_blend) * direction));
            } else {
                ood_centers.push_back(direction);
            }
        }
        EmbeddingCache cache;
        cache.dim = static_cast<uint32_t>(params.embed_dim);
        cache.num_locals = static_cast<uint32_t>(params.num_locals);
        cache.rows.resize(params.ood_per_set, cache.row_width());
        DatasetManifest manifest;
        manifest.name = "toy-ood-" + split;
        manifest.cache = "ood_" + split + ".faemb";
        for (int i = 0; i < params.ood_per_set; ++i) {
            const Eigen::VectorXd& center =
                ood_centers[static_cast<size_t>(i) % ood_centers.size()];
            const Eigen::VectorXd global = jitter(center, params.ood_noise, rng);
            for (int k = 0; k < params.embed_dim; ++k)
                cache.rows(i, k) = static_cast<float>(global(k));
            for (int l = 0; l < params.num_locals; ++l) {
                const Eigen::VectorXd local = jitter(center, params.local_noise, rng);
                for (int k = 0; k < params.embed_dim; ++k)
                    cache.rows(i, (1 + l) * params.embed_dim + k) = static_cast<float>(local(k));
            }
            cache.sidecar.push_back({split, -1, ""});
            manifest.entries.push_back({i, std::string(), -1});
        }
        cache.write(dir / manifest.cache);
        save_manifest(manifest, dir / (manifest.name + ".json"));
        return manifest.name + ".json";
    };

    train_cache.write(dir / train_manifest.cache);
    test_cache.write(dir / test_manifest.cache);
    save_manifest(train_manifest, dir / "toy-id-train.json");
    save_manifest(test_manifest, dir / "toy-id-test.json");
    const std::string near_manifest = make_ood("near", true);
    const std::string far_manifest = make_ood("far", false);

    nlohmann::ordered_json registry;
    registry["version"] = 1;
    registry["benchmarks"]["toy"] = {
        {"encoder", toy_encoder_descriptor(config)},
        {"id_train", "toy-id-train.json"},
        {"id_test", "toy-id-test.json"},
        {"ood", nlohmann::ordered_json::array(
                    {{{"name", "near"}, {"manifest", near_manifest}},
                     {{"name", "far"}, {"manifest", far_manifest}}})}};
    std::ofstream out(dir / "registry.json", std::ios::trunc);
    if (!out) throw DataError("cannot write registry under " + dir.string());
    out << registry.dump(2) << "\n";
}

}  // namespace faood
