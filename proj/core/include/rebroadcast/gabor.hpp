#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rebroadcast/feature.hpp"
#include "rebroadcast/imgproc.hpp"

namespace rebroadcast::gabor {

inline constexpr int kOrientations = 8;
inline constexpr int kRibgpBins = 36;
inline constexpr int kScaleCount = 3;
inline constexpr int kPyramidLevels = 3;
inline constexpr int kLevelDim = 2 * kScaleCount * kRibgpBins;  // 216
inline constexpr int kMribgpDim = kPyramidLevels * kLevelDim;    // 648

enum class Symmetry { Even, Odd };

struct GaborScale {
    double sigma;
    double lambda;
    int kernel_size;
};

struct GaborParams {
    int orientations = kOrientations;
    double gamma = 1.82;
    std::vector<GaborScale> scales;
    // Optional box sum of the filter responses before thresholding; 0 disables,
    // otherwise an odd window side.
    int post_sum_window = 0;
    // Responses with magnitude at or below this are treated as zero (bit 0).
    double response_epsilon = 1e-10;

    static GaborParams defaults();
    // Smallest odd integer >= 6*sigma + 1.
    static int kernel_size_for(double sigma);

    void validate() const;
    int largest_kernel() const;
};

// theta_j for filter index j: j*pi/J for even filters, j*2*pi/J for odd ones.
double orientation_angle(Symmetry symmetry, int index, int count);

// Phase offset: 0 for even filters, -pi/2 for odd filters.
double phase(Symmetry symmetry);

// Sampled Gabor filter on a size x size grid centred on 0 (x right, y down).
// Even-phase kernels have their mean removed. Angles that are whole quarter
// turns apart produce kernels that are exact grid rotations of each other.
imgproc::Kernel2D make_gabor_kernel(double sigma, double lambda, double theta, double psi, double gamma, int size);

// The J orientation kernels of one scale and symmetry, index j at bit j.
std::vector<imgproc::Kernel2D> orientation_bank(const GaborParams& params, int scale_index, Symmetry symmetry);

struct CodeImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> codes;
    std::vector<std::uint8_t> valid;  // interior mask, 1 = usable

    std::uint8_t at(int x, int y) const noexcept { return codes[static_cast<std::size_t>(y) * width + x]; }
};

// Per-pixel Binary Gabor Pattern: bit j set iff response of orientation j is
// positive.
CodeImage bgp_codes(const imgproc::GrayImage& image, const GaborParams& params, int scale_index, Symmetry symmetry);

// Code images for every (symmetry, scale) pair of one image, ordered
// symmetry-major (even first) then by scale. Shares one FFT of the image.
std::vector<CodeImage> all_bgp_codes(const imgproc::GrayImage& image, const GaborParams& params);

std::uint8_t rotate_right(std::uint8_t code, int shift) noexcept;

// Maps each 8-bit code to its rotation-invariant class: the largest value
// among its circular rotations, densely re-indexed in ascending order.
class RibgpTable {
public:
    static RibgpTable build();

    int bin(std::uint8_t code) const noexcept { return bins_[code]; }
    std::uint8_t canonical(std::uint8_t code) const noexcept { return canonical_of_bin_[static_cast<std::size_t>(bins_[code])]; }
    std::uint8_t canonical_of_bin(int bin) const noexcept { return canonical_of_bin_[static_cast<std::size_t>(bin)]; }
    int bin_count() const noexcept { return bin_count_; }

private:
    std::array<int, 256> bins_{};
    std::array<std::uint8_t, 256> canonical_of_bin_{};
    int bin_count_ = 0;
};

RibgpTable build_ribgp_table();

// 36-bin histogram over valid pixels, normalized to sum 1.
std::array<double, kRibgpBins> ribgp_histogram(const CodeImage& codes, const RibgpTable& table);

// Equalize, build the 3-level pyramid and concatenate the 36-bin histograms
// level-major, then symmetry, then scale: 648 values summing to 18.
FeatureVector mribgp(const imgproc::GrayImage& image, const GaborParams& params);

}  // namespace rebroadcast::gabor
