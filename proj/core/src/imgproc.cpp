#include "rebroadcast/imgproc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "rebroadcast/errors.hpp"

namespace rebroadcast::imgproc {

namespace {

void require_dims(int width, int height) {
    if (width < 1 || height < 1) {
        throw DimensionError("image dimensions must be positive, got " + std::to_string(width) + "x" +
                             std::to_string(height));
    }
}

std::vector<double> gaussian_taps_1d(int size, double sigma) {
    const int radius = size / 2;
    std::vector<double> taps(static_cast<std::size_t>(size));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
        taps[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (auto& t : taps) t /= total;
    return taps;
}

void check_gaussian_args(int size, double sigma) {
    if (size < 1 || size % 2 == 0) {
        throw ParameterError("Gaussian support must be odd and positive, got " + std::to_string(size));
    }
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
        throw ParameterError("Gaussian sigma must be positive, got " + std::to_string(sigma));
    }
}

// Separable pass along x then y with reflect-101 borders.
Raster separable(const Raster& in, std::span<const double> tx, std::span<const double> ty) {
    const int w = in.width();
    const int h = in.height();
    const int rx = static_cast<int>(tx.size()) / 2;
    const int ry = static_cast<int>(ty.size()) / 2;

    Raster tmp(w, h);
    std::vector<double> line(static_cast<std::size_t>(w + 2 * rx));
    for (int y = 0; y < h; ++y) {
        for (int x = -rx; x < w + rx; ++x) line[static_cast<std::size_t>(x + rx)] = in(reflect101(x, w), y);
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (std::size_t k = 0; k < tx.size(); ++k) acc += tx[k] * line[static_cast<std::size_t>(x) + k];
            tmp(x, y) = acc;
        }
    }

    Raster out(w, h);
    std::vector<double> column(static_cast<std::size_t>(h + 2 * ry));
    for (int x = 0; x < w; ++x) {
        for (int y = -ry; y < h + ry; ++y) column[static_cast<std::size_t>(y + ry)] = tmp(x, reflect101(y, h));
        for (int y = 0; y < h; ++y) {
            double acc = 0.0;
            for (std::size_t k = 0; k < ty.size(); ++k) acc += ty[k] * column[static_cast<std::size_t>(y) + k];
            out(x, y) = acc;
        }
    }
    return out;
}

int antialias_support(double sigma) { return 2 * static_cast<int>(std::ceil(3.0 * sigma)) + 1; }

double sample_bilinear(const Raster& r, double sx, double sy) {
    const int w = r.width();
    const int h = r.height();
    sx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    sy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const int x0 = static_cast<int>(std::floor(sx));
    const int y0 = static_cast<int>(std::floor(sy));
    const int x1 = std::min(x0 + 1, w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const double tx = sx - x0;
    const double ty = sy - y0;
    const double top = (1.0 - tx) * r(x0, y0) + tx * r(x1, y0);
    const double bottom = (1.0 - tx) * r(x0, y1) + tx * r(x1, y1);
    return (1.0 - ty) * top + ty * bottom;
}

}  // namespace

Raster::Raster(int width, int height, double fill)
    : width_(width), height_(height), values_(static_cast<std::size_t>(std::max(width, 0)) * std::max(height, 0), fill) {
    require_dims(width, height);
}

Raster::Raster(int width, int height, std::vector<double> values)
    : width_(width), height_(height), values_(std::move(values)) {
    require_dims(width, height);
    if (values_.size() != static_cast<std::size_t>(width) * height) {
        throw DimensionError("raster holds " + std::to_string(values_.size()) + " values, expected " +
                             std::to_string(static_cast<std::size_t>(width) * height));
    }
}

GrayImage::GrayImage(int width, int height, double fill) : GrayImage(Raster(width, height, fill)) {}

GrayImage::GrayImage(int width, int height, std::vector<double> pixels)
    : GrayImage(Raster(width, height, std::move(pixels))) {}

GrayImage::GrayImage(Raster raster) : raster_(std::move(raster)) {
    if (raster_.empty()) throw DimensionError("gray image must not be empty");
    for (double v : raster_.values()) {
        if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
            throw ParameterError("gray image pixel outside [0,1]: " + std::to_string(v));
        }
    }
}

GrayImage GrayImage::clamped(Raster raster) {
    for (double& v : raster.values()) {
        if (!std::isfinite(v)) throw ParameterError("non-finite pixel value");
        v = std::clamp(v, 0.0, 1.0);
    }
    return GrayImage(std::move(raster));
}

Kernel2D::Kernel2D(int size, std::vector<double> taps) : size_(size), taps_(std::move(taps)) {
    if (size < 1 || size % 2 == 0) throw ParameterError("kernel size must be odd, got " + std::to_string(size));
    if (taps_.size() != static_cast<std::size_t>(size) * size) {
        throw DimensionError("kernel of size " + std::to_string(size) + " needs " + std::to_string(size * size) +
                             " taps");
    }
}

double Kernel2D::sum() const noexcept {
    double s = 0.0;
    for (double t : taps_) s += t;
    return s;
}

int reflect101(int index, int n) noexcept {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    index %= period;
    if (index < 0) index += period;
    return index < n ? index : period - index;
}

GrayImage to_grayscale(std::span<const std::uint8_t> rgb, int width, int height) {
    require_dims(width, height);
    const auto n = static_cast<std::size_t>(width) * height;
    if (rgb.size() != 3 * n) throw DimensionError("RGB buffer size does not match dimensions");
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double v = (0.299 * rgb[3 * i] + 0.587 * rgb[3 * i + 1] + 0.114 * rgb[3 * i + 2]) / 255.0;
        out[i] = std::clamp(v, 0.0, 1.0);
    }
    return GrayImage(width, height, std::move(out));
}

GrayImage equalize_histogram(const GrayImage& image) {
    const auto pixels = image.pixels();
    const auto n = static_cast<long>(pixels.size());

    std::vector<int> levels(pixels.size());
    std::array<long, 256> hist{};
    for (std::size_t i = 0; i < pixels.size(); ++i) {
        levels[i] = static_cast<int>(std::lround(255.0 * pixels[i]));
        ++hist[static_cast<std::size_t>(levels[i])];
    }

    std::array<long, 256> cdf{};
    long running = 0;
    long cdf_min = 0;
    for (std::size_t v = 0; v < 256; ++v) {
        running += hist[v];
        cdf[v] = running;
        if (cdf_min == 0 && running > 0) cdf_min = running;
    }
    if (cdf_min == n) return image;

    std::array<double, 256> lut{};
    for (std::size_t v = 0; v < 256; ++v) {
        const double scaled = 255.0 * static_cast<double>(cdf[v] - cdf_min) / static_cast<double>(n - cdf_min);
        lut[v] = std::clamp(std::round(scaled), 0.0, 255.0) / 255.0;
    }
    std::vector<double> out(pixels.size());
    for (std::size_t i = 0; i < pixels.size(); ++i) out[i] = lut[static_cast<std::size_t>(levels[i])];
    return GrayImage(image.width(), image.height(), std::move(out));
}

Raster convolve2d(const Raster& image, const Kernel2D& kernel) {
    const int w = image.width();
    const int h = image.height();
    const int size = kernel.size();
    if (size > w || size > h) {
        throw DimensionError("kernel " + std::to_string(size) + "x" + std::to_string(size) + " larger than image " +
                             std::to_string(w) + "x" + std::to_string(h));
    }
    const int r = kernel.radius();
    const int pw = w + 2 * r;
    const int ph = h + 2 * r;

    std::vector<double> padded(static_cast<std::size_t>(pw) * ph);
    for (int y = 0; y < ph; ++y) {
        const int sy = reflect101(y - r, h);
        for (int x = 0; x < pw; ++x) padded[static_cast<std::size_t>(y) * pw + x] = image(reflect101(x - r, w), sy);
    }

    Raster out(w, h);
    const auto taps = kernel.taps();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < size; ++ky) {
                const double* src = &padded[static_cast<std::size_t>(y + ky) * pw + x];
                const double* k = &taps[static_cast<std::size_t>(ky) * size];
                for (int kx = 0; kx < size; ++kx) acc += k[kx] * src[kx];
            }
            out(x, y) = acc;
        }
    }
    return out;
}

Raster convolve2d(const GrayImage& image, const Kernel2D& kernel) { return convolve2d(image.raster(), kernel); }

std::vector<std::uint8_t> valid_region_mask(int width, int height, int kernel_size) {
    require_dims(width, height);
    const int r = kernel_size / 2;
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(width) * height, 0);
    for (int y = r; y < height - r; ++y) {
        for (int x = r; x < width - r; ++x) mask[static_cast<std::size_t>(y) * width + x] = 1;
    }
    return mask;
}

double default_gaussian_sigma(int size) { return 0.3 * ((size - 1) / 2.0 - 1.0) + 0.8; }

Kernel2D gaussian_kernel(int size, double sigma) {
    check_gaussian_args(size, sigma);
    const auto g = gaussian_taps_1d(size, sigma);
    std::vector<double> taps(static_cast<std::size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            taps[static_cast<std::size_t>(y) * size + x] = g[static_cast<std::size_t>(y)] * g[static_cast<std::size_t>(x)];
        }
    }
    return Kernel2D(size, std::move(taps));
}

Raster gaussian_smooth(const Raster& image, int size, double sigma) {
    check_gaussian_args(size, sigma);
    const auto g = gaussian_taps_1d(size, sigma);
    return separable(image, g, g);
}

GrayImage gaussian_blur(const GrayImage& image, int size, double sigma) {
    return GrayImage::clamped(gaussian_smooth(image.raster(), size, sigma));
}

GrayImage gaussian_blur(const GrayImage& image, int size) {
    return gaussian_blur(image, size, default_gaussian_sigma(size));
}

GrayImage resize(const GrayImage& image, int width, int height) {
    require_dims(width, height);
    if (width == image.width() && height == image.height()) return image;

    const double fx = static_cast<double>(width) / image.width();
    const double fy = static_cast<double>(height) / image.height();

    Raster source = image.raster();
    if (fx < 1.0 || fy < 1.0) {
        const std::vector<double> identity{1.0};
        std::vector<double> tx = identity;
        std::vector<double> ty = identity;
        if (fx < 1.0) {
            const double s = 0.5 / fx;
            tx = gaussian_taps_1d(antialias_support(s), s);
        }
        if (fy < 1.0) {
            const double s = 0.5 / fy;
            ty = gaussian_taps_1d(antialias_support(s), s);
        }
        source = separable(source, tx, ty);
    }

    Raster out(width, height);
    for (int y = 0; y < height; ++y) {
        const double sy = (y + 0.5) / fy - 0.5;
        for (int x = 0; x < width; ++x) {
            const double sx = (x + 0.5) / fx - 0.5;
            out(x, y) = sample_bilinear(source, sx, sy);
        }
    }
    return GrayImage::clamped(std::move(out));
}

GrayImage resample(const GrayImage& image, double factor) {
    if (!(factor > 0.0) || !std::isfinite(factor)) {
        throw ParameterError("resample factor must be positive, got " + std::to_string(factor));
    }
    const long w = std::lround(image.width() * factor);
    const long h = std::lround(image.height() * factor);
    if (w < 1 || h < 1) {
        throw DimensionError("resample factor " + std::to_string(factor) + " collapses a " +
                             std::to_string(image.width()) + "x" + std::to_string(image.height()) + " image");
    }
    if (factor == 1.0) return image;
    return resize(image, static_cast<int>(w), static_cast<int>(h));
}

std::vector<GrayImage> gaussian_pyramid(const GrayImage& image, int levels) {
    if (levels != 3) throw ParameterError("only three-level pyramids are supported");
    std::vector<GrayImage> pyramid;
    pyramid.reserve(3);
    pyramid.push_back(resample(image, 2.0));
    pyramid.push_back(image);
    pyramid.push_back(resample(image, 0.5));
    return pyramid;
}

GrayImage rotate(const GrayImage& image, double degrees) {
    if (degrees == 0.0) return image;
    const int w = image.width();
    const int h = image.height();
    const double a = degrees * std::numbers::pi / 180.0;
    const double c = std::cos(a);
    const double s = std::sin(a);
    const double cx = (w - 1) / 2.0;
    const double cy = (h - 1) / 2.0;

    const Raster& src = image.raster();
    Raster out(w, h);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            // Inverse mapping: destination pixel back into the source frame.
            const double dx = x - cx;
            const double dy = y - cy;
            const double sx = c * dx + s * dy + cx;
            const double sy = -s * dx + c * dy + cy;
            const int x0 = static_cast<int>(std::floor(sx));
            const int y0 = static_cast<int>(std::floor(sy));
            const double tx = sx - x0;
            const double ty = sy - y0;
            const double p00 = src(reflect101(x0, w), reflect101(y0, h));
            const double p10 = src(reflect101(x0 + 1, w), reflect101(y0, h));
            const double p01 = src(reflect101(x0, w), reflect101(y0 + 1, h));
            const double p11 = src(reflect101(x0 + 1, w), reflect101(y0 + 1, h));
            out(x, y) = (1.0 - ty) * ((1.0 - tx) * p00 + tx * p10) + ty * ((1.0 - tx) * p01 + tx * p11);
        }
    }
    return GrayImage::clamped(std::move(out));
}

Raster rotate90(const Raster& image) {
    const int w = image.width();
    const int h = image.height();
    Raster out(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) out(y, w - 1 - x) = image(x, y);
    }
    return out;
}

GrayImage rotate90(const GrayImage& image) { return GrayImage(rotate90(image.raster())); }

}  // namespace rebroadcast::imgproc
