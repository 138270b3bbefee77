#pragma once

#include <array>
#include <bitset>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rebroadcast/imgproc.hpp"

namespace rebroadcast::keypoint {

inline constexpr int kDescriptorBits = 512;
inline constexpr std::array<int, 3> kResidualBlurSizes{3, 5, 7};
inline constexpr int kMinChannelSide = 32;

// channel c = equalized - blur(equalized, kResidualBlurSizes[c]).
struct ResidualImage {
    std::array<imgproc::Raster, 3> channels;

    int width() const noexcept { return channels[0].width(); }
    int height() const noexcept { return channels[0].height(); }
};

ResidualImage residual_image(const imgproc::GrayImage& image);

struct Keypoint {
    double x = 0.0;  // octave-0 pixel coordinates
    double y = 0.0;
    int octave = 0;
    double score = 0.0;
    double orientation = 0.0;  // radians, filled in by description

    double scale() const noexcept { return static_cast<double>(1 << octave); }
};

struct DetectedKeypoint {
    Keypoint keypoint;
    int channel = 0;
};

struct DetectorParams {
    double threshold = 0.06;
    int octaves = 4;
    int max_keypoints = 500;
};

// Min-max stretch into [0, 1]; a flat channel maps to all zeros.
imgproc::GrayImage normalize_channel(const imgproc::Raster& channel);

// Largest t for which (x, y) is a FAST-9/16 corner: the best over all
// 9-pixel arcs of the Bresenham circle (radius 3) of the smallest signed
// difference to the centre. Requires a 3-pixel margin.
double fast_score(const imgproc::Raster& image, int x, int y);

// FAST-9 corners with 3x3 and cross-octave non-maximum suppression on a
// half-sampling pyramid of each (normalized) channel. Only keypoints whose
// full sampling pattern fits in the channel are kept. Sorted by descending
// score and capped at max_keypoints.
std::vector<DetectedKeypoint> detect_keypoints(const ResidualImage& residual, const DetectorParams& params = {});

class BinaryDescriptor {
public:
    bool bit(std::size_t i) const { return bits_.test(i); }
    void set(std::size_t i, bool value) { bits_.set(i, value); }
    std::size_t count() const noexcept { return bits_.count(); }
    std::size_t hamming(const BinaryDescriptor& other) const noexcept { return (bits_ ^ other.bits_).count(); }
    const std::bitset<kDescriptorBits>& bits() const noexcept { return bits_; }

    // 512 reals in {0, 1}.
    std::vector<double> expand() const;

    bool operator==(const BinaryDescriptor&) const = default;

private:
    std::bitset<kDescriptorBits> bits_;
};

struct PatternPoint {
    double x;
    double y;
    double sigma;
};

struct PointPair {
    int first;
    int second;
};

// 60-point sampling pattern on four concentric rings plus the centre, at unit
// scale, with its short (descriptor) and long (orientation) pair lists.
class BriskPattern {
public:
    static const BriskPattern& standard();

    std::span<const PatternPoint> points() const noexcept { return points_; }
    std::span<const PointPair> short_pairs() const noexcept { return short_pairs_; }
    std::span<const PointPair> long_pairs() const noexcept { return long_pairs_; }

    // Distance from the keypoint to the farthest pixel any smoothed sample can
    // touch, at the given scale.
    double extent(double scale) const noexcept;

    static constexpr double kShortDistance = 9.75;
    static constexpr double kLongDistance = 13.67;

private:
    BriskPattern();

    std::vector<PatternPoint> points_;
    std::vector<PointPair> short_pairs_;
    std::vector<PointPair> long_pairs_;
};

struct Description {
    BinaryDescriptor descriptor;
    double orientation = 0.0;
};

// Samples one channel. Smoothed intensities are box means of half-width
// sqrt(3)*sigma (the same variance as a Gaussian of that sigma), evaluated
// exactly at sub-pixel positions through a bilinear read of the integral image.
class DescriptorExtractor {
public:
    explicit DescriptorExtractor(const imgproc::GrayImage& channel);

    bool fits(double x, double y, double scale) const noexcept;
    double smoothed(double x, double y, double sigma) const noexcept;

    // Empty when the pattern leaves the image (the keypoint is dropped).
    std::optional<Description> describe(const Keypoint& kp) const;

private:
    double area(double u, double v) const noexcept;

    int width_;
    int height_;
    std::vector<double> integral_;  // (width+1) x (height+1)
};

std::optional<Description> describe(const imgproc::GrayImage& channel, const Keypoint& kp);

// Residual, detect, describe each keypoint on its own normalized channel.
std::vector<BinaryDescriptor> extract_binary_descriptors(const imgproc::GrayImage& image,
                                                         const DetectorParams& params = {});

// Same descriptors expanded to 512-dim 0/1 vectors.
std::vector<std::vector<double>> extract_descriptors(const imgproc::GrayImage& image,
                                                     const DetectorParams& params = {});

}  // namespace rebroadcast::keypoint
