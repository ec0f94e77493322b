#pragma once

#include <stdexcept>
#include <string>

namespace faood {

// Error taxonomy mirrored by the CLI exit codes: config=2, data=3, numeric=4.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk artifacts: bad magic bytes, schema violations, truncation.
struct FormatError : DataError {
    explicit FormatError(const std::string& msg) : DataError(msg) {}
};

// Non-finite values surfaced by the optimizer or a score function.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// A prompt references a token the encoder vocabulary does not contain.
struct VocabularyError : ConfigError {
    explicit VocabularyError(const std::string& msg) : ConfigError(msg) {}
};

}  // namespace faood
