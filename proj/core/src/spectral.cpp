#include "rebroadcast/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include "rebroadcast/errors.hpp"

namespace rebroadcast::spectral {

namespace {

using imgproc::Kernel2D;
using imgproc::Raster;

// FFTW's planner is not re-entrant; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

struct FftwFree {
    void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using Buffer = std::unique_ptr<fftw_complex[], FftwFree>;

Buffer allocate(std::size_t n) {
    auto* p = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
    if (p == nullptr) throw std::bad_alloc();
    std::fill_n(&p[0][0], 2 * n, 0.0);
    return Buffer(p);
}

class Plan {
public:
    Plan(int rows, int cols, fftw_complex* buffer, int direction) {
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_2d(rows, cols, buffer, buffer, direction, FFTW_ESTIMATE);
        if (plan_ == nullptr) throw Error("FFTW failed to create a plan");
    }
    Plan(const Plan&) = delete;
    Plan& operator=(const Plan&) = delete;
    ~Plan() {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(plan_);
    }

    // In-place transform of any fftw_malloc'd buffer of the planned size.
    void run(fftw_complex* buffer) const { fftw_execute_dft(plan_, buffer, buffer); }

private:
    fftw_plan plan_ = nullptr;
};

bool is_smooth(int n) {
    for (int p : {2, 3, 5, 7}) {
        while (n % p == 0) n /= p;
    }
    return n == 1;
}

int smooth_size(int n) {
    while (!is_smooth(n)) ++n;
    return n;
}

}  // namespace

std::vector<Raster> correlate_bank(const Raster& image, std::span<const Kernel2D> kernels) {
    const int w = image.width();
    const int h = image.height();
    int max_radius = 0;
    for (const auto& k : kernels) {
        if (k.size() > w || k.size() > h) {
            throw DimensionError("kernel " + std::to_string(k.size()) + "x" + std::to_string(k.size()) +
                                 " larger than image " + std::to_string(w) + "x" + std::to_string(h));
        }
        max_radius = std::max(max_radius, k.radius());
    }
    std::vector<Raster> out;
    if (kernels.empty()) return out;

    const int pw = w + 2 * max_radius;
    const int ph = h + 2 * max_radius;
    const int nx = smooth_size(pw);
    const int ny = smooth_size(ph);
    const auto n = static_cast<std::size_t>(nx) * ny;
    const double scale = 1.0 / static_cast<double>(n);

    auto spectrum = allocate(n);
    auto work = allocate(n);
    const Plan forward(ny, nx, work.get(), FFTW_FORWARD);
    const Plan backward(ny, nx, work.get(), FFTW_BACKWARD);

    for (int y = 0; y < ph; ++y) {
        const int sy = imgproc::reflect101(y - max_radius, h);
        for (int x = 0; x < pw; ++x) {
            spectrum[static_cast<std::size_t>(y) * nx + x][0] = image(imgproc::reflect101(x - max_radius, w), sy);
        }
    }
    forward.run(spectrum.get());

    out.reserve(kernels.size());
    // Two real kernels per complex transform: real part carries the first,
    // imaginary part the second.
    for (std::size_t first = 0; first < kernels.size(); first += 2) {
        const bool paired = first + 1 < kernels.size();
        std::fill_n(&work[0][0], 2 * n, 0.0);
        for (int part = 0; part < (paired ? 2 : 1); ++part) {
            const Kernel2D& k = kernels[first + static_cast<std::size_t>(part)];
            const int r = k.radius();
            for (int dy = -r; dy <= r; ++dy) {
                const int iy = ((-dy) % ny + ny) % ny;
                for (int dx = -r; dx <= r; ++dx) {
                    const int ix = ((-dx) % nx + nx) % nx;
                    work[static_cast<std::size_t>(iy) * nx + ix][part] = k.at(dx, dy);
                }
            }
        }
        forward.run(work.get());
        for (std::size_t i = 0; i < n; ++i) {
            const double ar = spectrum[i][0], ai = spectrum[i][1];
            const double br = work[i][0], bi = work[i][1];
            work[i][0] = ar * br - ai * bi;
            work[i][1] = ar * bi + ai * br;
        }
        backward.run(work.get());

        Raster a(w, h);
        Raster b(paired ? w : 1, paired ? h : 1);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const auto idx = static_cast<std::size_t>(y + max_radius) * nx + (x + max_radius);
                a(x, y) = work[idx][0] * scale;
                if (paired) b(x, y) = work[idx][1] * scale;
            }
        }
        out.push_back(std::move(a));
        if (paired) out.push_back(std::move(b));
    }
    return out;
}

double high_frequency_energy_ratio(const Raster& image, double cutoff) {
    const int w = image.width();
    const int h = image.height();
    const auto n = static_cast<std::size_t>(w) * h;

    double mean = 0.0;
    for (double v : image.values()) mean += v;
    mean /= static_cast<double>(n);

    auto buffer = allocate(n);
    const Plan forward(h, w, buffer.get(), FFTW_FORWARD);
    // Hann taper suppresses the edge discontinuity of the implicit periodic
    // extension.
    for (int y = 0; y < h; ++y) {
        const double wy = h > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * y / (h - 1)) : 1.0;
        for (int x = 0; x < w; ++x) {
            const double wx = w > 1 ? 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * x / (w - 1)) : 1.0;
            buffer[static_cast<std::size_t>(y) * w + x][0] = (image(x, y) - mean) * wx * wy;
        }
    }
    forward.run(buffer.get());

    double total = 0.0;
    double high = 0.0;
    for (int ky = 0; ky < h; ++ky) {
        const double fy = static_cast<double>(ky <= h / 2 ? ky : ky - h) / h;
        for (int kx = 0; kx < w; ++kx) {
            if (kx == 0 && ky == 0) continue;
            const double fx = static_cast<double>(kx <= w / 2 ? kx : kx - w) / w;
            const auto& c = buffer[static_cast<std::size_t>(ky) * w + kx];
            const double e = c[0] * c[0] + c[1] * c[1];
            total += e;
            if (std::hypot(fx, fy) > cutoff) high += e;
        }
    }
    // A flat image leaves only rounding noise from the mean subtraction.
    if (total <= 1e-20 * static_cast<double>(n)) return 0.0;
    return high / total;
}

}  // namespace rebroadcast::spectral
