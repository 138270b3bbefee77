#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "rebroadcast/fusion.hpp"
#include "rebroadcast/pipeline.hpp"
#include "rebroadcast/vocab.hpp"

namespace rebroadcast::persistence {

inline constexpr char kMagic[4] = {'C', 'P', 'G', 'D'};
inline constexpr std::uint32_t kFormatVersion = 1;

struct AuthModel {
    std::uint32_t format_version = kFormatVersion;
    pipeline::PipelineConfig config;
    vocab::Vocabulary vocabulary;
    fusion::LinearSvmModel svm;
    // FNV-1a (64-bit, hex) of the training manifest bytes.
    std::string training_fingerprint;

    // Weight dimension must match the feature set for this vocabulary; the
    // vocabulary must be 512-dimensional with distinct centroids (or empty for
    // texture-only models).
    void validate() const;

    bool operator==(const AuthModel&) const = default;
};

// Layout documented in docs/container_format.md. The file is written to a
// sibling temporary and renamed into place.
void save(const AuthModel& model, const std::filesystem::path& path);

// Throws FormatError (bad magic, malformed header), UnsupportedVersionError,
// TruncatedFileError or InvariantViolationError; IoError if unreadable.
AuthModel load(const std::filesystem::path& path);

// In-memory forms of save/load. `origin` only labels error messages.
std::string serialize(const AuthModel& model);
AuthModel deserialize(std::string_view bytes, const std::string& origin = "<memory>");

std::string fnv1a_hex(std::string_view bytes);

}  // namespace rebroadcast::persistence
