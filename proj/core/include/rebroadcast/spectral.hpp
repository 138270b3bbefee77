#pragma once

#include <span>
#include <vector>

#include "rebroadcast/imgproc.hpp"

namespace rebroadcast::spectral {

// FFT-backed equivalent of imgproc::convolve2d for a bank of kernels applied
// to the same image: reflect-101 borders, correlation convention, one output
// raster per kernel. Kernels may differ in size; each must fit in the image.
std::vector<imgproc::Raster> correlate_bank(const imgproc::Raster& image, std::span<const imgproc::Kernel2D> kernels);

// Share of (mean-removed) spectral energy at radial frequencies above
// `cutoff` cycles/pixel. With the default cutoff this is the energy above
// half the Nyquist frequency.
double high_frequency_energy_ratio(const imgproc::Raster& image, double cutoff = 0.25);

}  // namespace rebroadcast::spectral
