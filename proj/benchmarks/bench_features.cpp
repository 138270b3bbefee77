#include <benchmark/benchmark.h>

#include "rebroadcast/gabor.hpp"
#include "rebroadcast/keypoint.hpp"
#include "rebroadcast/simulator.hpp"

using namespace rebroadcast;

namespace {

imgproc::GrayImage sample_image(int index) {
    simulator::CorpusRequest req;
    req.genuine = 1;
    req.counterfeit = 1;
    req.seed = 17;
    return simulator::render_sample(simulator::draw_sample(req, index));
}

void BM_Mribgp(benchmark::State& state) {
    const auto img = sample_image(0);
    const auto params = gabor::GaborParams::defaults();
    for (auto _ : state) benchmark::DoNotOptimize(gabor::mribgp(img, params));
}
BENCHMARK(BM_Mribgp)->Unit(benchmark::kMillisecond);

void BM_BgpCodesOneScale(benchmark::State& state) {
    const auto img = sample_image(0);
    const auto params = gabor::GaborParams::defaults();
    const int scale = static_cast<int>(state.range(0));
    for (auto _ : state) benchmark::DoNotOptimize(gabor::bgp_codes(img, params, scale, gabor::Symmetry::Odd));
}
BENCHMARK(BM_BgpCodesOneScale)->DenseRange(0, 2)->Unit(benchmark::kMillisecond);

void BM_ResidualImage(benchmark::State& state) {
    const auto img = sample_image(1);
    for (auto _ : state) benchmark::DoNotOptimize(keypoint::residual_image(img));
}
BENCHMARK(BM_ResidualImage)->Unit(benchmark::kMillisecond);

void BM_DetectKeypoints(benchmark::State& state) {
    const auto residual = keypoint::residual_image(sample_image(1));
    for (auto _ : state) benchmark::DoNotOptimize(keypoint::detect_keypoints(residual));
}
BENCHMARK(BM_DetectKeypoints)->Unit(benchmark::kMillisecond);

void BM_ExtractDescriptors(benchmark::State& state) {
    const auto img = sample_image(1);
    for (auto _ : state) benchmark::DoNotOptimize(keypoint::extract_binary_descriptors(img));
}
BENCHMARK(BM_ExtractDescriptors)->Unit(benchmark::kMillisecond);

void BM_PrintScan(benchmark::State& state) {
    const auto code = simulator::generate_barcode({});
    simulator::ChannelParams p;
    p.halftone_cell = 4;
    p.psf_sigma = 1.0;
    p.noise_sigma = 0.01;
    p.rot_deg = 1.0;
    p.rescale = 1.05;
    for (auto _ : state) benchmark::DoNotOptimize(simulator::print_scan(code, p));
}
BENCHMARK(BM_PrintScan)->Unit(benchmark::kMillisecond);

}  // namespace
