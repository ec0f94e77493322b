#pragma once

#include <filesystem>
#include <memory>

#include "faood/encoder.hpp"
#include "faood/prompt.hpp"

#include "json.hpp"

namespace faood {

/// Builds a backend from a descriptor: {"kind":"toy", ...},
/// {"kind":"clip", "export_dir": ...}, or {"kind":"cache", "inner": {...}}.
/// Relative paths resolve against base_dir.
std::unique_ptr<EmbeddingBackend> make_backend(const nlohmann::json& descriptor,
                                               const std::filesystem::path& base_dir = {});

struct LoadedBank {
    DualPromptBank bank;
    std::unique_ptr<EmbeddingBackend> backend;
    nlohmann::json encoder_desc;
};

/// Reads a bank file, rebuilds its backend from the recorded descriptor, and
/// reassembles the frozen class tokens against it.
LoadedBank load_bank(const std::filesystem::path& path);

}  // namespace faood
