#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

namespace rebroadcast {

enum class FeatureKind { Mribgp, Bomrw, Lgmfs };

constexpr std::string_view to_string(FeatureKind kind) noexcept {
    switch (kind) {
        case FeatureKind::Mribgp: return "mribgp";
        case FeatureKind::Bomrw: return "bomrw";
        case FeatureKind::Lgmfs: return "lgmfs";
    }
    return "unknown";
}

// Fixed-length non-negative histogram handed between pipeline stages.
struct FeatureVector {
    FeatureKind kind = FeatureKind::Lgmfs;
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
};

}  // namespace rebroadcast
