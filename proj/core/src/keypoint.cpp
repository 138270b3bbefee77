#include "rebroadcast/keypoint.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <tuple>

#include "rebroadcast/errors.hpp"

namespace rebroadcast::keypoint {

using imgproc::GrayImage;
using imgproc::Raster;

namespace {

constexpr std::array<std::array<int, 2>, 16> kCircle{{
    {0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0}, {3, 1}, {2, 2}, {1, 3},
    {0, 3}, {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3},
}};
constexpr int kArc = 9;
constexpr int kFastMargin = 3;

// Unit-scale ring layout of the sampling pattern.
constexpr std::array<double, 5> kRingRadius{0.0, 2.9, 4.9, 7.4, 10.8};
constexpr std::array<int, 5> kRingCount{1, 10, 14, 15, 20};
constexpr double kSigmaScale = 1.3;

Raster half_sample(const Raster& in) {
    const int w = in.width() / 2;
    const int h = in.height() / 2;
    Raster out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            out(x, y) = 0.25 * (in(2 * x, 2 * y) + in(2 * x + 1, 2 * y) + in(2 * x, 2 * y + 1) + in(2 * x + 1, 2 * y + 1));
        }
    }
    return out;
}

Raster score_map(const Raster& image) {
    Raster scores(image.width(), image.height(), 0.0);
    for (int y = kFastMargin; y < image.height() - kFastMargin; ++y) {
        for (int x = kFastMargin; x < image.width() - kFastMargin; ++x) scores(x, y) = fast_score(image, x, y);
    }
    return scores;
}

bool is_spatial_max(const Raster& s, int x, int y) {
    const double v = s(x, y);
    for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            const int nx = x + dx;
            const int ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= s.width() || ny >= s.height()) continue;
            const double n = s(nx, ny);
            // Plateaus keep only their first pixel in raster order.
            const bool earlier = dy < 0 || (dy == 0 && dx < 0);
            if (n > v || (earlier && n == v)) return false;
        }
    }
    return true;
}

double region_max(const Raster& s, int x0, int y0, int x1, int y1) {
    double best = 0.0;
    for (int y = std::max(y0, 0); y <= std::min(y1, s.height() - 1); ++y) {
        for (int x = std::max(x0, 0); x <= std::min(x1, s.width() - 1); ++x) best = std::max(best, s(x, y));
    }
    return best;
}

}  // namespace

ResidualImage residual_image(const GrayImage& image) {
    const GrayImage equalized = imgproc::equalize_histogram(image);
    ResidualImage out;
    for (std::size_t c = 0; c < kResidualBlurSizes.size(); ++c) {
        const GrayImage blurred = imgproc::gaussian_blur(equalized, kResidualBlurSizes[c]);
        Raster channel(image.width(), image.height());
        const auto e = equalized.pixels();
        const auto b = blurred.pixels();
        auto dst = channel.values();
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = e[i] - b[i];
        out.channels[c] = std::move(channel);
    }
    return out;
}

GrayImage normalize_channel(const Raster& channel) {
    const auto values = channel.values();
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double span = *hi - *lo;
    Raster out(channel.width(), channel.height(), 0.0);
    if (span > 1e-12) {
        auto dst = out.values();
        for (std::size_t i = 0; i < values.size(); ++i) dst[i] = (values[i] - *lo) / span;
    }
    return GrayImage::clamped(std::move(out));
}

double fast_score(const Raster& image, int x, int y) {
    const double centre = image(x, y);
    std::array<double, 16> diff{};
    for (std::size_t k = 0; k < kCircle.size(); ++k) diff[k] = image(x + kCircle[k][0], y + kCircle[k][1]) - centre;

    double best = 0.0;
    for (int start = 0; start < 16; ++start) {
        double brighter = diff[static_cast<std::size_t>(start)];
        double darker = -brighter;
        for (int k = 1; k < kArc; ++k) {
            const double d = diff[static_cast<std::size_t>((start + k) % 16)];
            brighter = std::min(brighter, d);
            darker = std::min(darker, -d);
        }
        best = std::max({best, brighter, darker});
    }
    return best;
}

std::vector<DetectedKeypoint> detect_keypoints(const ResidualImage& residual, const DetectorParams& params) {
    if (residual.width() < kMinChannelSide || residual.height() < kMinChannelSide) {
        throw DimensionError("residual channels must be at least 32x32, got " + std::to_string(residual.width()) + "x" +
                             std::to_string(residual.height()));
    }
    if (params.octaves < 1) throw ParameterError("detector needs at least one octave");
    if (params.max_keypoints < 0) throw ParameterError("keypoint cap must be non-negative");

    const auto& pattern = BriskPattern::standard();
    std::vector<DetectedKeypoint> found;

    for (std::size_t c = 0; c < residual.channels.size(); ++c) {
        const GrayImage normalized = normalize_channel(residual.channels[c]);

        std::vector<Raster> octaves{normalized.raster()};
        while (static_cast<int>(octaves.size()) < params.octaves && octaves.back().width() / 2 > 2 * kFastMargin &&
               octaves.back().height() / 2 > 2 * kFastMargin) {
            octaves.push_back(half_sample(octaves.back()));
        }
        std::vector<Raster> scores;
        scores.reserve(octaves.size());
        for (const auto& o : octaves) scores.push_back(score_map(o));

        for (std::size_t o = 0; o < scores.size(); ++o) {
            const Raster& s = scores[o];
            const double scale = static_cast<double>(1 << o);
            for (int y = kFastMargin; y < s.height() - kFastMargin; ++y) {
                for (int x = kFastMargin; x < s.width() - kFastMargin; ++x) {
                    const double v = s(x, y);
                    if (!(v > params.threshold) || !is_spatial_max(s, x, y)) continue;
                    if (o > 0 && region_max(scores[o - 1], 2 * x - 1, 2 * y - 1, 2 * x + 2, 2 * y + 2) > v) continue;
                    if (o + 1 < scores.size() && region_max(scores[o + 1], x / 2 - 1, y / 2 - 1, x / 2 + 1, y / 2 + 1) > v) {
                        continue;
                    }
                    Keypoint kp;
                    kp.x = (x + 0.5) * scale - 0.5;
                    kp.y = (y + 0.5) * scale - 0.5;
                    kp.octave = static_cast<int>(o);
                    kp.score = v;
                    const double reach = pattern.extent(scale);
                    if (kp.x + 0.5 - reach < 0.0 || kp.y + 0.5 - reach < 0.0 || kp.x + 0.5 + reach > residual.width() ||
                        kp.y + 0.5 + reach > residual.height()) {
                        continue;
                    }
                    found.push_back({kp, static_cast<int>(c)});
                }
            }
        }
    }

    std::sort(found.begin(), found.end(), [](const DetectedKeypoint& a, const DetectedKeypoint& b) {
        return std::tuple(-a.keypoint.score, a.channel, a.keypoint.octave, a.keypoint.y, a.keypoint.x) <
               std::tuple(-b.keypoint.score, b.channel, b.keypoint.octave, b.keypoint.y, b.keypoint.x);
    });
    if (found.size() > static_cast<std::size_t>(params.max_keypoints)) {
        found.resize(static_cast<std::size_t>(params.max_keypoints));
    }
    return found;
}

std::vector<double> BinaryDescriptor::expand() const {
    std::vector<double> out(kDescriptorBits);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = bits_.test(i) ? 1.0 : 0.0;
    return out;
}

const BriskPattern& BriskPattern::standard() {
    static const BriskPattern pattern;
    return pattern;
}

BriskPattern::BriskPattern() {
    for (std::size_t ring = 0; ring < kRingRadius.size(); ++ring) {
        const double r = kRingRadius[ring];
        const int n = kRingCount[ring];
        const double sigma =
            ring == 0 ? kSigmaScale * 0.5 : kSigmaScale * r * std::sin(std::numbers::pi / static_cast<double>(n));
        for (int k = 0; k < n; ++k) {
            const double a = 2.0 * std::numbers::pi * k / n;
            points_.push_back({r * std::cos(a), r * std::sin(a), sigma});
        }
    }

    struct Candidate {
        double distance;
        PointPair pair;
    };
    std::vector<Candidate> shorts;
    for (int i = 0; i < static_cast<int>(points_.size()); ++i) {
        for (int j = i + 1; j < static_cast<int>(points_.size()); ++j) {
            const auto& a = points_[static_cast<std::size_t>(i)];
            const auto& b = points_[static_cast<std::size_t>(j)];
            const double d = std::hypot(b.x - a.x, b.y - a.y);
            if (d > kLongDistance) long_pairs_.push_back({i, j});
            shorts.push_back({d, {i, j}});
        }
    }
    // The 512 closest pairs; all of them lie under kShortDistance.
    std::stable_sort(shorts.begin(), shorts.end(),
                     [](const Candidate& a, const Candidate& b) { return a.distance < b.distance; });
    shorts.resize(kDescriptorBits);
    std::sort(shorts.begin(), shorts.end(), [](const Candidate& a, const Candidate& b) {
        return std::tie(a.pair.first, a.pair.second) < std::tie(b.pair.first, b.pair.second);
    });
    for (const auto& c : shorts) short_pairs_.push_back(c.pair);
}

double BriskPattern::extent(double scale) const noexcept {
    double reach = 0.0;
    for (const auto& p : points_) {
        const double half = std::max(0.5, std::sqrt(3.0) * p.sigma * scale);
        reach = std::max(reach, std::hypot(p.x, p.y) * scale + half);
    }
    return reach;
}

DescriptorExtractor::DescriptorExtractor(const GrayImage& channel)
    : width_(channel.width()),
      height_(channel.height()),
      integral_(static_cast<std::size_t>(channel.width() + 1) * (channel.height() + 1), 0.0) {
    const auto stride = static_cast<std::size_t>(width_ + 1);
    for (int y = 0; y < height_; ++y) {
        double row = 0.0;
        for (int x = 0; x < width_; ++x) {
            row += channel(x, y);
            integral_[(static_cast<std::size_t>(y) + 1) * stride + static_cast<std::size_t>(x) + 1] =
                integral_[static_cast<std::size_t>(y) * stride + static_cast<std::size_t>(x) + 1] + row;
        }
    }
}

// Integral of the piecewise-constant image over [0, u] x [0, v], where pixel
// (i, j) covers [i, i+1] x [j, j+1].
double DescriptorExtractor::area(double u, double v) const noexcept {
    u = std::clamp(u, 0.0, static_cast<double>(width_));
    v = std::clamp(v, 0.0, static_cast<double>(height_));
    const int i = std::min(static_cast<int>(u), width_ - 1);
    const int j = std::min(static_cast<int>(v), height_ - 1);
    const double fu = u - i;
    const double fv = v - j;
    const auto stride = static_cast<std::size_t>(width_ + 1);
    const auto at = [&](int a, int b) {
        return integral_[static_cast<std::size_t>(b) * stride + static_cast<std::size_t>(a)];
    };
    return (1.0 - fu) * (1.0 - fv) * at(i, j) + fu * (1.0 - fv) * at(i + 1, j) + (1.0 - fu) * fv * at(i, j + 1) +
           fu * fv * at(i + 1, j + 1);
}

bool DescriptorExtractor::fits(double x, double y, double scale) const noexcept {
    const double reach = BriskPattern::standard().extent(scale);
    return x + 0.5 - reach >= 0.0 && y + 0.5 - reach >= 0.0 && x + 0.5 + reach <= width_ &&
           y + 0.5 + reach <= height_;
}

double DescriptorExtractor::smoothed(double x, double y, double sigma) const noexcept {
    const double half = std::max(0.5, std::sqrt(3.0) * sigma);
    const double u0 = x + 0.5 - half;
    const double u1 = x + 0.5 + half;
    const double v0 = y + 0.5 - half;
    const double v1 = y + 0.5 + half;
    const double total = area(u1, v1) - area(u0, v1) - area(u1, v0) + area(u0, v0);
    return total / ((u1 - u0) * (v1 - v0));
}

std::optional<Description> DescriptorExtractor::describe(const Keypoint& kp) const {
    const double scale = kp.scale();
    if (!fits(kp.x, kp.y, scale)) return std::nullopt;

    const auto& pattern = BriskPattern::standard();
    const auto points = pattern.points();

    std::vector<double> samples(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        samples[i] = smoothed(kp.x + points[i].x * scale, kp.y + points[i].y * scale, points[i].sigma * scale);
    }
    double gx = 0.0;
    double gy = 0.0;
    for (const auto& [a, b] : pattern.long_pairs()) {
        const auto& pa = points[static_cast<std::size_t>(a)];
        const auto& pb = points[static_cast<std::size_t>(b)];
        const double dx = (pb.x - pa.x) * scale;
        const double dy = (pb.y - pa.y) * scale;
        const double w = (samples[static_cast<std::size_t>(b)] - samples[static_cast<std::size_t>(a)]) / (dx * dx + dy * dy);
        gx += w * dx;
        gy += w * dy;
    }
    const double orientation = (std::abs(gx) < 1e-12 && std::abs(gy) < 1e-12) ? 0.0 : std::atan2(gy, gx);

    const double c = std::cos(orientation);
    const double s = std::sin(orientation);
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double px = (c * points[i].x - s * points[i].y) * scale;
        const double py = (s * points[i].x + c * points[i].y) * scale;
        samples[i] = smoothed(kp.x + px, kp.y + py, points[i].sigma * scale);
    }

    Description out;
    out.orientation = orientation;
    const auto pairs = pattern.short_pairs();
    for (std::size_t bit = 0; bit < pairs.size(); ++bit) {
        const auto& [a, b] = pairs[bit];
        out.descriptor.set(bit, samples[static_cast<std::size_t>(a)] > samples[static_cast<std::size_t>(b)]);
    }
    return out;
}

std::optional<Description> describe(const GrayImage& channel, const Keypoint& kp) {
    return DescriptorExtractor(channel).describe(kp);
}

std::vector<BinaryDescriptor> extract_binary_descriptors(const GrayImage& image, const DetectorParams& params) {
    const ResidualImage residual = residual_image(image);
    const auto detected = detect_keypoints(residual, params);

    std::vector<std::optional<DescriptorExtractor>> extractors(residual.channels.size());
    std::vector<BinaryDescriptor> out;
    out.reserve(detected.size());
    for (const auto& d : detected) {
        auto& ex = extractors[static_cast<std::size_t>(d.channel)];
        if (!ex) ex.emplace(normalize_channel(residual.channels[static_cast<std::size_t>(d.channel)]));
        if (auto desc = ex->describe(d.keypoint)) out.push_back(desc->descriptor);
    }
    return out;
}

std::vector<std::vector<double>> extract_descriptors(const GrayImage& image, const DetectorParams& params) {
    std::vector<std::vector<double>> out;
    for (const auto& d : extract_binary_descriptors(image, params)) out.push_back(d.expand());
    return out;
}

}  // namespace rebroadcast::keypoint
