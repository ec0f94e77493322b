#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "faood/encoder.hpp"

#include "json.hpp"

namespace faood {

/// One sample: either a row in the dataset's embedding cache or a path to a
/// raw vector file, plus its label (-1 for OOD).
struct ManifestEntry {
    int row = -1;
    std::string path;
    int label = -1;

    bool uses_cache() const { return row >= 0; }
};

struct DatasetManifest {
    std::string name;
    std::vector<std::string> class_names;  // empty for OOD datasets
    std::string cache;                     // relative path to a FAEMB1 file, may be empty
    std::vector<ManifestEntry> entries;
    std::filesystem::path base_dir;  // set at load time, not serialized

    bool is_ood() const { return class_names.empty(); }
    int num_classes() const { return static_cast<int>(class_names.size()); }
    std::filesystem::path cache_path() const { return base_dir / cache; }
};

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Resolves manifest entries to image features: cache rows pass through the
/// FAEMB1 file, path entries run the backend on the raw vector.
class FeatureSource {
public:
    FeatureSource(const DatasetManifest& manifest, const EmbeddingBackend& backend);

    ImageFeatures get(const ManifestEntry& entry) const;
    ImageFeatures get(size_t entry_index) const;
    const DatasetManifest& manifest() const { return *manifest_; }

private:
    const DatasetManifest* manifest_;
    const EmbeddingBackend* backend_;
    std::optional<EmbeddingCache> cache_;
};

/// Raw little-endian float32 vector files used as toy "images".
std::vector<float> read_raw_vector(const std::filesystem::path& path);
void write_raw_vector(std::span<const float> values, const std::filesystem::path& path);

/// Encodes every manifest entry and writes the FAEMB1 cache plus its sidecar
/// and a row-indexed manifest (<out>.manifest.json). Idempotent for a fixed
/// backend.
void cache_embeddings(const DatasetManifest& manifest, const EmbeddingBackend& backend,
                      const std::filesystem::path& out_path);

struct OodDatasetRef {
    std::string name;
    DatasetManifest manifest;
};

/// One ID dataset (train/test splits) paired with its ordered OOD datasets.
struct BenchmarkSpec {
    std::string name;
    nlohmann::json encoder_desc;
    DatasetManifest id_train;
    DatasetManifest id_test;
    std::vector<OodDatasetRef> ood;
    std::filesystem::path root;
};

/// Looks `name` up in a registry JSON and loads all referenced manifests.
BenchmarkSpec resolve_benchmark(const std::string& name,
                                const std::filesystem::path& registry_path);

// ---------------------------------------------------------------------------
// Bundled synthetic benchmark: Gaussian clusters in embedding space. ID
// clusters sit around the manual-prompt text features of a seeded toy
// encoder (mirroring a pretrained alignment); the two OOD sets place their
// cluster centers at controlled distances from those anchors.
// ---------------------------------------------------------------------------

struct ToyBenchmarkParams {
    int num_classes = 20;
    int embed_dim = 64;
    int token_dim = 32;
    int num_locals = 4;
    int max_context_len = 16;
    int image_input_dim = 64;
    int train_per_class = 32;
    int test_per_class = 20;
    int ood_per_set = 300;
    int ood_clusters_per_set = 30;
    // Few-shot training images are drawn tighter than the test distribution,
    // the usual curated-shots vs wild-test regime.
    double train_noise = 0.06;
    double id_noise = 0.12;
    double local_noise = 0.16;
    double ood_noise = 0.09;
    // The visual cluster centers are the text features of a hidden "richer"
    // prompt: the manual context perturbed by rows of this scale. The manual
    // prompt stays well aligned with every class, while a learnable prompt
    // has a reachable target beyond the class-label semantics.
    double prompt_displacement = 1.1;
    double near_blend = 0.45;  // near-OOD centers lean this far toward ID anchors
    uint64_t seed = 7;
};

/// Writes caches, manifests and a registry entry named "toy" under dir.
void write_toy_benchmark(const std::filesystem::path& dir, const ToyBenchmarkParams& params);

/// Encoder descriptor for the toy benchmark's backend (kind/seed/dims/vocab).
nlohmann::json toy_encoder_descriptor(const ToyEncoderConfig& config);
ToyEncoderConfig toy_encoder_config_from_descriptor(const nlohmann::json& desc);

}  // namespace faood
