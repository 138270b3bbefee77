#include "rebroadcast/gabor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <string>

#include "rebroadcast/errors.hpp"
#include "rebroadcast/spectral.hpp"

namespace rebroadcast::gabor {

using imgproc::GrayImage;
using imgproc::Kernel2D;
using imgproc::Raster;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kQuarterTurn = std::numbers::pi / 2.0;

// g_{theta + pi/2}(x, y) == g_theta(y, -x)
Kernel2D rotate_quarter(const Kernel2D& k) {
    const int size = k.size();
    const int r = k.radius();
    std::vector<double> taps(static_cast<std::size_t>(size) * size);
    for (int dy = -r; dy <= r; ++dy) {
        for (int dx = -r; dx <= r; ++dx) taps[static_cast<std::size_t>(dy + r) * size + (dx + r)] = k.at(dy, -dx);
    }
    return Kernel2D(size, std::move(taps));
}

Raster box_sum(const Raster& in, int window) {
    const std::vector<double> ones(static_cast<std::size_t>(window), 1.0);
    const int w = in.width();
    const int h = in.height();
    const int r = window / 2;
    Raster tmp(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) acc += in(imgproc::reflect101(x + k, w), y);
            tmp(x, y) = acc;
        }
    }
    Raster out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int k = -r; k <= r; ++k) acc += tmp(x, imgproc::reflect101(y + k, h));
            out(x, y) = acc;
        }
    }
    return out;
}

CodeImage threshold_responses(std::span<const Raster> responses, int width, int height, int margin,
                              const GaborParams& params) {
    CodeImage out;
    out.width = width;
    out.height = height;
    out.codes.assign(static_cast<std::size_t>(width) * height, 0);
    out.valid = imgproc::valid_region_mask(width, height, 2 * margin + 1);

    for (std::size_t j = 0; j < responses.size(); ++j) {
        const Raster summed = params.post_sum_window > 0 ? box_sum(responses[j], params.post_sum_window) : Raster{};
        const Raster& r = params.post_sum_window > 0 ? summed : responses[j];
        const auto values = r.values();
        const auto bit = static_cast<std::uint8_t>(1u << j);
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (values[i] > params.response_epsilon) out.codes[i] |= bit;
        }
    }
    return out;
}

void check_scale_index(const GaborParams& params, int scale_index) {
    if (scale_index < 0 || scale_index >= static_cast<int>(params.scales.size())) {
        throw ParameterError("scale index " + std::to_string(scale_index) + " out of range");
    }
}

}  // namespace

GaborParams GaborParams::defaults() {
    GaborParams p;
    for (const auto& [sigma, lambda] : {std::pair{1.5, 4.5}, std::pair{2.5, 7.5}, std::pair{3.5, 10.5}}) {
        p.scales.push_back({sigma, lambda, kernel_size_for(sigma)});
    }
    return p;
}

int GaborParams::kernel_size_for(double sigma) {
    int size = static_cast<int>(std::ceil(6.0 * sigma + 1.0));
    if (size % 2 == 0) ++size;
    return size;
}

void GaborParams::validate() const {
    if (orientations != kOrientations) throw ParameterError("Gabor bank requires exactly 8 orientations");
    if (!(gamma > 0.0)) throw ParameterError("Gabor aspect ratio must be positive");
    if (scales.size() != kScaleCount) throw ParameterError("Gabor bank requires exactly 3 scales");
    for (const auto& s : scales) {
        if (!(s.sigma > 0.0) || !(s.lambda > 0.0)) throw ParameterError("Gabor sigma and lambda must be positive");
        if (s.kernel_size < 3 || s.kernel_size % 2 == 0) throw ParameterError("Gabor kernel size must be odd and >= 3");
    }
    if (post_sum_window < 0 || (post_sum_window > 0 && post_sum_window % 2 == 0)) {
        throw ParameterError("post-sum window must be 0 or odd");
    }
    if (!(response_epsilon >= 0.0)) throw ParameterError("response epsilon must be non-negative");
}

int GaborParams::largest_kernel() const {
    int largest = 0;
    for (const auto& s : scales) largest = std::max(largest, s.kernel_size);
    return largest;
}

double orientation_angle(Symmetry symmetry, int index, int count) {
    const double span = symmetry == Symmetry::Even ? std::numbers::pi : kTwoPi;
    return index * span / count;
}

double phase(Symmetry symmetry) { return symmetry == Symmetry::Even ? 0.0 : -std::numbers::pi / 2.0; }

Kernel2D make_gabor_kernel(double sigma, double lambda, double theta, double psi, double gamma, int size) {
    if (size < 3 || size % 2 == 0) throw ParameterError("Gabor kernel size must be odd and >= 3, got " + std::to_string(size));
    if (!(sigma > 0.0) || !(lambda > 0.0) || !(gamma > 0.0)) {
        throw ParameterError("Gabor sigma, lambda and gamma must be positive");
    }

    // Split theta into whole quarter turns plus a remainder in [0, pi/2); the
    // quarter turns are applied as exact grid rotations.
    double t = std::fmod(theta, kTwoPi);
    if (t < 0.0) t += kTwoPi;
    const double turns = t / kQuarterTurn;
    int quarters = static_cast<int>(std::floor(turns));
    double remainder = t - quarters * kQuarterTurn;
    if (std::abs(turns - std::round(turns)) < 1e-9) {
        quarters = static_cast<int>(std::lround(turns));
        remainder = 0.0;
    }
    quarters %= 4;

    const double c = remainder == 0.0 ? 1.0 : std::cos(remainder);
    const double s = remainder == 0.0 ? 0.0 : std::sin(remainder);
    const int r = size / 2;
    std::vector<double> taps(static_cast<std::size_t>(size) * size);
    for (int y = -r; y <= r; ++y) {
        for (int x = -r; x <= r; ++x) {
            const double xr = x * c + y * s;
            const double yr = -x * s + y * c;
            const double envelope = std::exp(-(xr * xr + gamma * gamma * yr * yr) / (2.0 * sigma * sigma));
            taps[static_cast<std::size_t>(y + r) * size + (x + r)] = envelope * std::cos(kTwoPi * xr / lambda + psi);
        }
    }
    if (psi == 0.0) {
        double mean = 0.0;
        for (double v : taps) mean += v;
        mean /= static_cast<double>(taps.size());
        for (double& v : taps) v -= mean;
    }

    Kernel2D kernel(size, std::move(taps));
    for (int q = 0; q < quarters; ++q) kernel = rotate_quarter(kernel);
    return kernel;
}

std::vector<Kernel2D> orientation_bank(const GaborParams& params, int scale_index, Symmetry symmetry) {
    check_scale_index(params, scale_index);
    const auto& sc = params.scales[static_cast<std::size_t>(scale_index)];
    std::vector<Kernel2D> bank;
    bank.reserve(static_cast<std::size_t>(params.orientations));
    for (int j = 0; j < params.orientations; ++j) {
        bank.push_back(make_gabor_kernel(sc.sigma, sc.lambda, orientation_angle(symmetry, j, params.orientations),
                                         phase(symmetry), params.gamma, sc.kernel_size));
    }
    return bank;
}

CodeImage bgp_codes(const GrayImage& image, const GaborParams& params, int scale_index, Symmetry symmetry) {
    params.validate();
    check_scale_index(params, scale_index);
    const auto bank = orientation_bank(params, scale_index, symmetry);
    const auto responses = spectral::correlate_bank(image.raster(), bank);
    const int margin = bank.front().radius() + params.post_sum_window / 2;
    return threshold_responses(responses, image.width(), image.height(), margin, params);
}

std::vector<CodeImage> all_bgp_codes(const GrayImage& image, const GaborParams& params) {
    params.validate();
    const std::size_t per_scale = static_cast<std::size_t>(params.orientations);
    std::vector<CodeImage> even(params.scales.size());
    std::vector<CodeImage> odd(params.scales.size());
    for (std::size_t s = 0; s < params.scales.size(); ++s) {
        auto bank = orientation_bank(params, static_cast<int>(s), Symmetry::Even);
        auto odd_bank = orientation_bank(params, static_cast<int>(s), Symmetry::Odd);
        bank.insert(bank.end(), odd_bank.begin(), odd_bank.end());
        const auto responses = spectral::correlate_bank(image.raster(), bank);
        const int margin = bank.front().radius() + params.post_sum_window / 2;
        const std::span<const Raster> all(responses);
        even[s] = threshold_responses(all.first(per_scale), image.width(), image.height(), margin, params);
        odd[s] = threshold_responses(all.subspan(per_scale, per_scale), image.width(), image.height(), margin, params);
    }
    std::vector<CodeImage> out;
    out.reserve(2 * params.scales.size());
    for (auto& c : even) out.push_back(std::move(c));
    for (auto& c : odd) out.push_back(std::move(c));
    return out;
}

std::uint8_t rotate_right(std::uint8_t code, int shift) noexcept {
    shift = ((shift % 8) + 8) % 8;
    if (shift == 0) return code;
    return static_cast<std::uint8_t>((code >> shift) | (code << (8 - shift)));
}

RibgpTable RibgpTable::build() {
    std::array<std::uint8_t, 256> canonical{};
    std::set<std::uint8_t> distinct;
    for (int c = 0; c < 256; ++c) {
        std::uint8_t best = 0;
        for (int j = 0; j < 8; ++j) best = std::max(best, rotate_right(static_cast<std::uint8_t>(c), j));
        canonical[static_cast<std::size_t>(c)] = best;
        distinct.insert(best);
    }

    RibgpTable table;
    std::array<int, 256> bin_of_canonical{};
    int next = 0;
    for (std::uint8_t v : distinct) {  // std::set iterates in ascending order
        bin_of_canonical[v] = next;
        table.canonical_of_bin_[static_cast<std::size_t>(next)] = v;
        ++next;
    }
    table.bin_count_ = next;
    for (std::size_t c = 0; c < 256; ++c) table.bins_[c] = bin_of_canonical[canonical[c]];
    return table;
}

RibgpTable build_ribgp_table() { return RibgpTable::build(); }

std::array<double, kRibgpBins> ribgp_histogram(const CodeImage& codes, const RibgpTable& table) {
    if (table.bin_count() != kRibgpBins) throw ParameterError("rotation-invariant table must have 36 bins");
    std::array<long, kRibgpBins> counts{};
    long total = 0;
    for (std::size_t i = 0; i < codes.codes.size(); ++i) {
        if (codes.valid[i] == 0) continue;
        ++counts[static_cast<std::size_t>(table.bin(codes.codes[i]))];
        ++total;
    }
    if (total == 0) throw DegenerateInputError("code image has an empty valid region");
    std::array<double, kRibgpBins> hist{};
    for (std::size_t b = 0; b < hist.size(); ++b) hist[b] = static_cast<double>(counts[b]) / static_cast<double>(total);
    return hist;
}

FeatureVector mribgp(const GrayImage& image, const GaborParams& params) {
    params.validate();
    static const RibgpTable table = RibgpTable::build();

    const int needed = params.largest_kernel() + 2 * (params.post_sum_window / 2);
    const auto pyramid = imgproc::gaussian_pyramid(imgproc::equalize_histogram(image), kPyramidLevels);
    for (const auto& level : pyramid) {
        if (level.width() < needed || level.height() < needed) {
            throw DimensionError("pyramid level " + std::to_string(level.width()) + "x" +
                                 std::to_string(level.height()) + " is smaller than the " + std::to_string(needed) +
                                 "-pixel Gabor support");
        }
    }

    FeatureVector out{FeatureKind::Mribgp, {}};
    out.values.reserve(kMribgpDim);
    for (const auto& level : pyramid) {
        for (const auto& codes : all_bgp_codes(level, params)) {
            const auto hist = ribgp_histogram(codes, table);
            out.values.insert(out.values.end(), hist.begin(), hist.end());
        }
    }
    return out;
}

}  // namespace rebroadcast::gabor
