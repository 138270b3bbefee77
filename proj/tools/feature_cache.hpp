#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include "rebroadcast/pipeline.hpp"

namespace rebroadcast::cli {

// On-disk memo of per-image features keyed by the image bytes and every
// extraction parameter, so repeated train/eval runs over one corpus skip the
// filter banks. Entries are written atomically; a corrupt entry is a miss.
class FeatureCache {
public:
    explicit FeatureCache(std::filesystem::path dir);

    std::optional<pipeline::ImageFeatures> find(std::string_view image_bytes, const pipeline::PipelineConfig& config) const;
    void store(std::string_view image_bytes, const pipeline::PipelineConfig& config,
               const pipeline::ImageFeatures& features) const;

private:
    std::filesystem::path entry_path(std::string_view image_bytes, const pipeline::PipelineConfig& config) const;

    std::filesystem::path dir_;
};

// Canonical text of the parameters that influence extraction.
std::string extraction_key(const pipeline::PipelineConfig& config);

}  // namespace rebroadcast::cli
