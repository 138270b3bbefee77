#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace rebroadcast::imgproc {

// Row-major real-valued plane with no range restriction. Filter responses and
// residuals live here; luminance images use GrayImage.
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, double fill = 0.0);
    Raster(int width, int height, std::vector<double> values);

    int width() const noexcept { return width_; }
    int height() const noexcept { return height_; }
    std::size_t size() const noexcept { return values_.size(); }
    bool empty() const noexcept { return values_.empty(); }

    double operator()(int x, int y) const noexcept {
        return values_[static_cast<std::size_t>(y) * width_ + x];
    }
    double& operator()(int x, int y) noexcept {
        return values_[static_cast<std::size_t>(y) * width_ + x];
    }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    std::span<const double> row(int y) const noexcept {
        return std::span<const double>(values_).subspan(static_cast<std::size_t>(y) * width_, width_);
    }

    bool operator==(const Raster&) const = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> values_;
};

// Single-channel luminance image. Always non-empty, every pixel finite and
// inside [0, 1].
class GrayImage {
public:
    GrayImage(int width, int height, double fill);
    GrayImage(int width, int height, std::vector<double> pixels);
    explicit GrayImage(Raster raster);

    // Clamps every value into [0, 1]; non-finite values are rejected.
    static GrayImage clamped(Raster raster);

    int width() const noexcept { return raster_.width(); }
    int height() const noexcept { return raster_.height(); }
    std::size_t size() const noexcept { return raster_.size(); }
    double operator()(int x, int y) const noexcept { return raster_(x, y); }
    std::span<const double> pixels() const noexcept { return raster_.values(); }
    const Raster& raster() const noexcept { return raster_; }

    bool operator==(const GrayImage&) const = default;

private:
    Raster raster_;
};

// Square, odd-sized filter. Tap (dx, dy) with dx, dy in [-radius, radius].
class Kernel2D {
public:
    Kernel2D(int size, std::vector<double> taps);

    int size() const noexcept { return size_; }
    int radius() const noexcept { return size_ / 2; }
    double at(int dx, int dy) const noexcept {
        return taps_[static_cast<std::size_t>(dy + radius()) * size_ + (dx + radius())];
    }
    std::span<const double> taps() const noexcept { return taps_; }
    double sum() const noexcept;

    bool operator==(const Kernel2D&) const = default;

private:
    int size_;
    std::vector<double> taps_;
};

// Reflect-101 index mapping (…2 1 | 0 1 2 … n-1 | n-2 …). Handles indices
// arbitrarily far outside [0, n).
int reflect101(int index, int n) noexcept;

GrayImage to_grayscale(std::span<const std::uint8_t> rgb, int width, int height);

GrayImage equalize_histogram(const GrayImage& image);

// Correlation (no kernel flip) with reflect-101 borders. Output has the input
// dimensions and may be negative.
Raster convolve2d(const Raster& image, const Kernel2D& kernel);
Raster convolve2d(const GrayImage& image, const Kernel2D& kernel);

// 1 where a kernel of `kernel_size` centred on the pixel stays inside the
// image, 0 elsewhere.
std::vector<std::uint8_t> valid_region_mask(int width, int height, int kernel_size);

// Sigma used when only a support size is given: 0.3*((size-1)/2 - 1) + 0.8.
double default_gaussian_sigma(int size);

// Normalized (sum 1) sampled Gaussian.
Kernel2D gaussian_kernel(int size, double sigma);

GrayImage gaussian_blur(const GrayImage& image, int size, double sigma);
GrayImage gaussian_blur(const GrayImage& image, int size);

// Unclamped separable Gaussian smoothing for signed planes.
Raster gaussian_smooth(const Raster& image, int size, double sigma);

// Bilinear resampling to round(dim * factor), with an anti-alias blur of
// sigma 0.5/factor when shrinking.
GrayImage resample(const GrayImage& image, double factor);

// Bilinear resize to explicit dimensions, same anti-alias rule per axis.
GrayImage resize(const GrayImage& image, int width, int height);

// [upscaled x2, original, downscaled x0.5].
std::vector<GrayImage> gaussian_pyramid(const GrayImage& image, int levels = 3);

// Rotates about the image centre with bilinear sampling; samples falling
// outside use reflect-101 coordinates.
GrayImage rotate(const GrayImage& image, double degrees);

// Exact 90-degree counter-clockwise rotation on the pixel grid (as displayed
// with y pointing down): out(y, W-1-x) = in(x, y).
Raster rotate90(const Raster& image);
GrayImage rotate90(const GrayImage& image);

}  // namespace rebroadcast::imgproc
