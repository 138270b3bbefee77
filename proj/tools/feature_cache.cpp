#include "feature_cache.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <functional>
#include <iterator>
#include <system_error>
#include <thread>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/persistence.hpp"

namespace rebroadcast::cli {

namespace {

constexpr char kEntryMagic[4] = {'R', 'B', 'F', 'C'};
constexpr std::uint32_t kEntryVersion = 1;

void append_real(std::string& out, double v) {
    char buf[64];
    out.append(buf, std::to_chars(buf, buf + sizeof buf, v).ptr);
    out += ';';
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

bool get_u64(std::string_view& in, std::uint64_t& v) {
    if (in.size() < 8) return false;
    v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(in[static_cast<std::size_t>(i)]);
    in.remove_prefix(8);
    return true;
}

}  // namespace

std::string extraction_key(const pipeline::PipelineConfig& c) {
    std::string key = "v1;";
    key += c.uses_texture() ? "T;" : "-;";
    key += c.uses_words() ? "W;" : "-;";
    key += std::to_string(c.gabor.orientations) + ';';
    append_real(key, c.gabor.gamma);
    for (const auto& s : c.gabor.scales) {
        append_real(key, s.sigma);
        append_real(key, s.lambda);
        key += std::to_string(s.kernel_size) + ';';
    }
    key += std::to_string(c.gabor.post_sum_window) + ';';
    append_real(key, c.gabor.response_epsilon);
    append_real(key, c.detector.threshold);
    key += std::to_string(c.detector.octaves) + ';' + std::to_string(c.detector.max_keypoints);
    return key;
}

FeatureCache::FeatureCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    std::filesystem::create_directories(dir_, ec);
    if (ec) throw IoError("cannot create cache directory " + dir_.string() + ": " + ec.message());
}

std::filesystem::path FeatureCache::entry_path(std::string_view image_bytes, const pipeline::PipelineConfig& config) const {
    return dir_ / (persistence::fnv1a_hex(image_bytes) + '-' + persistence::fnv1a_hex(extraction_key(config)) + ".feat");
}

std::optional<pipeline::ImageFeatures> FeatureCache::find(std::string_view image_bytes,
                                                          const pipeline::PipelineConfig& config) const {
    std::ifstream in(entry_path(image_bytes, config), std::ios::binary);
    if (!in) return std::nullopt;
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string_view view(bytes);
    if (view.size() < 8 || std::memcmp(view.data(), kEntryMagic, 4) != 0) return std::nullopt;
    view.remove_prefix(8);

    pipeline::ImageFeatures f;
    std::uint64_t n = 0;
    if (!get_u64(view, n) || n > view.size() / 8) return std::nullopt;
    f.mribgp.resize(n);
    for (double& v : f.mribgp) {
        std::uint64_t bits = 0;
        get_u64(view, bits);
        v = std::bit_cast<double>(bits);
    }
    constexpr std::size_t kBytes = keypoint::kDescriptorBits / 8;
    if (!get_u64(view, n) || view.size() != n * kBytes) return std::nullopt;
    f.descriptors.resize(n);
    for (auto& d : f.descriptors) {
        for (std::size_t i = 0; i < keypoint::kDescriptorBits; ++i) {
            d.set(i, (static_cast<unsigned char>(view[i / 8]) >> (i % 8)) & 1U);
        }
        view.remove_prefix(kBytes);
    }
    return f;
}

void FeatureCache::store(std::string_view image_bytes, const pipeline::PipelineConfig& config,
                         const pipeline::ImageFeatures& f) const {
    std::string out(kEntryMagic, kEntryMagic + 4);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((kEntryVersion >> (8 * i)) & 0xFF));
    put_u64(out, f.mribgp.size());
    for (double v : f.mribgp) put_u64(out, std::bit_cast<std::uint64_t>(v));
    put_u64(out, f.descriptors.size());
    for (const auto& d : f.descriptors) {
        for (std::size_t byte = 0; byte < keypoint::kDescriptorBits / 8; ++byte) {
            unsigned value = 0;
            for (std::size_t b = 0; b < 8; ++b) value |= static_cast<unsigned>(d.bit(byte * 8 + b)) << b;
            out.push_back(static_cast<char>(value));
        }
    }

    const auto target = entry_path(image_bytes, config);
    auto tmp = target;
    tmp += ".tmp" + std::to_string(std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream file(tmp, std::ios::binary | std::ios::trunc);
        if (!file) throw IoError("cannot write cache entry " + tmp.string());
        file.write(out.data(), static_cast<std::streamsize>(out.size()));
        if (!file) throw IoError("cannot write cache entry " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, target, ec);
    if (ec) throw IoError("cannot finalize cache entry " + target.string() + ": " + ec.message());
}

}  // namespace rebroadcast::cli
